import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phyweb.adapt import (
    AdaptMode,
    HIDDEN_CLASS,
    HtmlStructureError,
    RuleSource,
    STYLE_BLOCK,
    adapt,
    enrich_url,
    extract_rules,
    load_bindings,
)
from phyweb.context import ContextState, LightLevel, Movement, NoiseLevel
from phyweb.fingerprint import Fingerprint, NetworkObservation

BIG_MALL_BINDINGS = {"BIG_MALL": "zone(BIG_MALL)"}


def state_with(**kw):
    return ContextState(**kw)


class TestExtract:
    def test_binding_site(self):
        sites = extract_rules('<div id="BIG_MALL">x</div>', BIG_MALL_BINDINGS)
        assert len(sites) == 1
        site = sites[0]
        assert site.source is RuleSource.BINDING
        assert site.expr_text == "zone(BIG_MALL)"
        assert site.element_id == "BIG_MALL"
        assert site.error is None

    def test_no_annotations(self):
        assert extract_rules("<html><body><p>hi</p></body></html>", {}) == []

    def test_nested_sites_strictly_nested(self):
        html = '<div data-phyweb-when="true"><span data-phyweb-zone="A"></span></div>'
        sites = extract_rules(html, {})
        assert len(sites) == 2
        outer, inner = sites
        assert outer.element_span == (0, len(html.encode()))
        o0, o1 = outer.element_span
        i0, i1 = inner.element_span
        assert o0 < i0 and i1 < o1
        assert inner.expr_text == "zone(A)"
        assert inner.source is RuleSource.ATTR_ZONE

    def test_when_attr(self):
        sites = extract_rules('<p data-phyweb-when="lux > 100">x</p>', {})
        assert sites[0].source is RuleSource.ATTR_WHEN
        assert sites[0].ast is not None

    def test_legacy_tag(self):
        html = '<Ami_adaptation environment="user_movement_type == VEHICLE"><img src="sound.png"></Ami_adaptation>'
        sites = extract_rules(html, {})
        assert len(sites) == 1
        assert sites[0].tag_name == "ami_adaptation"
        assert sites[0].expr_text == "user_movement_type == VEHICLE"

    def test_unbalanced_raises_with_offset(self):
        html = '<p>lead</p><div data-phyweb-when="true"><span></span>'
        with pytest.raises(HtmlStructureError) as exc:
            extract_rules(html, {})
        assert exc.value.offset == html.index("<div")

    def test_bad_expression_becomes_error_entry(self):
        sites = extract_rules('<div data-phyweb-when="lux >">x</div>', {})
        assert len(sites) == 1
        assert sites[0].ast is None
        assert sites[0].error is not None

    def test_depth_counting_same_name(self):
        html = '<div data-phyweb-when="true"><div>inner</div></div><div>after</div>'
        sites = extract_rules(html, {})
        end = html.index("</div><div>after") + len("</div>")
        assert sites[0].element_span == (0, end)

    def test_script_content_opaque(self):
        html = '<script>var s = "<div data-phyweb-when=\'true\'>";</script><p>x</p>'
        assert extract_rules(html, {}) == []

    def test_comment_ignored(self):
        assert extract_rules('<!-- <div data-phyweb-when="true"> -->', {}) == []

    def test_void_and_self_closing_sites(self):
        html = '<img data-phyweb-when="true" src="x.png"><br data-phyweb-zone="A"/>'
        sites = extract_rules(html, {})
        assert len(sites) == 2
        assert sites[0].element_span == (0, html.index(">") + 1)

    def test_when_beats_zone_and_binding(self):
        html = '<div id="BIG_MALL" data-phyweb-when="false" data-phyweb-zone="A">x</div>'
        sites = extract_rules(html, BIG_MALL_BINDINGS)
        assert len(sites) == 1
        assert sites[0].source is RuleSource.ATTR_WHEN
        assert sites[0].expr_text == "false"

    def test_interleaved_sites_rejected(self):
        html = '<div data-phyweb-when="true"><b data-phyweb-when="true"></div></b>'
        with pytest.raises(HtmlStructureError):
            extract_rules(html, {})

    def test_entity_encoded_expression(self):
        sites = extract_rules('<div data-phyweb-when="lux &gt; 100">x</div>', {})
        assert sites[0].expr_text == "lux > 100"
        assert sites[0].ast is not None

    def test_document_order(self):
        html = '<i data-phyweb-when="true"></i><b data-phyweb-when="false"></b>'
        sites = extract_rules(html, {})
        assert [s.tag_name for s in sites] == ["i", "b"]


class TestAdaptCss:
    def test_big_mall_hidden(self):
        html = '<html><head><title>t</title></head><body><div id="BIG_MALL">deals</div></body></html>'
        out, report = adapt(html, state_with(zones={"BIG_MALL": False}), bindings=BIG_MALL_BINDINGS)
        assert '<div id="BIG_MALL" class="phyweb-hidden">' in out
        assert STYLE_BLOCK + "</head>" in out
        assert out.count(STYLE_BLOCK) == 1
        assert [r.id for r in report.hidden] == ["BIG_MALL"]
        assert report.shown == []

    def test_big_mall_shown(self):
        html = '<div id="BIG_MALL">deals</div>'
        out, report = adapt(html, state_with(zones={"BIG_MALL": True}), bindings=BIG_MALL_BINDINGS)
        assert HIDDEN_CLASS not in out.replace(STYLE_BLOCK, "")
        assert [r.id for r in report.shown] == ["BIG_MALL"]

    def test_zero_sites_identity(self):
        html = '<html><body><p>plain – nothing annotated</p></body></html>'
        out, report = adapt(html, state_with(), bindings={})
        assert out == html
        assert report.shown == [] and report.hidden == [] and report.errors == []

    def test_class_appended_to_existing(self):
        html = '<div class="card wide" data-phyweb-when="false">x</div>'
        out, _ = adapt(html, state_with())
        assert 'class="card wide phyweb-hidden"' in out

    def test_class_removed_when_true(self):
        html = '<div class="card phyweb-hidden" data-phyweb-when="true">x</div>'
        out, _ = adapt(html, state_with())
        assert 'class="card"' in out

    def test_whole_class_attr_dropped(self):
        html = '<div class="phyweb-hidden" data-phyweb-when="true">x</div>'
        out, _ = adapt(html, state_with())
        assert "class" not in out.replace(STYLE_BLOCK, "")

    def test_unquoted_class_value(self):
        html = "<div class=card data-phyweb-when='false'>x</div>"
        out, _ = adapt(html, state_with())
        assert 'class="card phyweb-hidden"' in out

    def test_style_prepended_without_head(self):
        out, _ = adapt('<div data-phyweb-when="false">x</div>', state_with())
        assert out.startswith(STYLE_BLOCK)

    def test_error_site_hidden(self):
        html = '<div data-phyweb-when="bogus_var">x</div>'
        out, report = adapt(html, state_with())
        assert HIDDEN_CLASS in out
        assert len(report.errors) == 1
        assert len(report.hidden) == 1 and report.shown == []

    def test_shown_hidden_disjoint(self):
        html = '<div data-phyweb-when="true"><span data-phyweb-when="false">x</span></div>'
        _, report = adapt(html, state_with())
        shown = {r.span for r in report.shown}
        hidden = {r.span for r in report.hidden}
        assert shown and hidden and not (shown & hidden)

    def test_nested_inside_hidden_reported_hidden(self):
        html = '<div data-phyweb-when="false"><span data-phyweb-when="true">x</span></div>'
        out, report = adapt(html, state_with())
        assert report.shown == []
        assert len(report.hidden) == 2

    def test_idempotent_spec_example(self):
        html = '<html><head></head><body><div id="BIG_MALL">x</div><p data-phyweb-when="true">y</p></body></html>'
        state = state_with(zones={"BIG_MALL": False})
        once, _ = adapt(html, state, bindings=BIG_MALL_BINDINGS)
        twice, _ = adapt(once, state, bindings=BIG_MALL_BINDINGS)
        assert once == twice


class TestAdaptPrune:
    def test_inner_pruned_outer_kept(self):
        html = '<div data-phyweb-when="true">keep<span data-phyweb-when="false">drop</span></div>'
        out, report = adapt(html, state_with(), mode=AdaptMode.PRUNE)
        assert "keep" in out and "drop" not in out
        assert "<span" not in out

    def test_outer_pruned_inner_reported(self):
        html = '<div data-phyweb-when="false">a<span data-phyweb-when="true">b</span>c</div>tail'
        out, report = adapt(html, state_with(), mode=AdaptMode.PRUNE)
        assert out == "tail"
        assert len(report.hidden) == 2 and report.shown == []

    def test_prune_no_style_block(self):
        out, _ = adapt('<div data-phyweb-when="false">x</div>', state_with(), mode=AdaptMode.PRUNE)
        assert out == ""

    def test_prune_matches_css_hidden_set(self):
        html = (
            '<div data-phyweb-when="false">a<span data-phyweb-when="true">b</span></div>'
            '<p data-phyweb-when="true">c</p><i data-phyweb-zone="Z">d</i>'
        )
        state = state_with(zones={"Z": True})
        _, css = adapt(html, state, mode=AdaptMode.CSS)
        _, prune = adapt(html, state, mode=AdaptMode.PRUNE)
        assert {r.span for r in css.hidden} == {r.span for r in prune.hidden}
        assert {r.span for r in css.shown} == {r.span for r in prune.shown}


# --- generated documents ----------------------------------------------------

EXPRS = ['true', 'false', 'zone(A)', 'zone(B)', 'lux > 100', 'noise_db < -20', 'rotating']
TEXTS = ["plain", "caf\u00e9 men\u00fc", "a < b", "", "x y"]


@st.composite
def documents(draw, depth=0):
    pieces = []
    for _ in range(draw(st.integers(0, 3))):
        kind = draw(st.sampled_from(["text", "element", "comment", "void"] if depth < 3 else ["text", "void"]))
        if kind == "text":
            pieces.append(draw(st.sampled_from(TEXTS)))
        elif kind == "comment":
            pieces.append("<!-- note -->")
        elif kind == "void":
            if draw(st.booleans()):
                pieces.append(f'<img data-phyweb-when="{draw(st.sampled_from(EXPRS))}" src="i.png">')
            else:
                pieces.append("<br>")
        else:
            tag = draw(st.sampled_from(["div", "section", "span"]))
            attr = ""
            if draw(st.booleans()):
                attr = f' data-phyweb-when="{draw(st.sampled_from(EXPRS))}"'
            elif draw(st.booleans()):
                attr = f' data-phyweb-zone="{draw(st.sampled_from(["A", "B"]))}"'
            inner = draw(documents(depth=depth + 1))
            pieces.append(f"<{tag}{attr}>{inner}</{tag}>")
    return "".join(pieces)


@st.composite
def full_documents(draw):
    body = draw(documents())
    if draw(st.booleans()):
        return f"<html><head><title>t</title></head><body>{body}</body></html>"
    return body


GEN_STATE = ContextState(
    lux=450.0,
    light=LightLevel.NORMAL,
    noise_db=-32.0,
    noise=NoiseLevel.MODERATE,
    rotating=False,
    zones={"A": True, "B": False},
)


class TestGeneratedDocuments:
    @given(full_documents())
    @settings(max_examples=150)
    def test_css_idempotence(self, html):
        once, _ = adapt(html, GEN_STATE, mode=AdaptMode.CSS)
        twice, _ = adapt(once, GEN_STATE, mode=AdaptMode.CSS)
        assert once == twice

    @given(full_documents())
    @settings(max_examples=150)
    def test_hidden_sets_identical_across_modes(self, html):
        _, css = adapt(html, GEN_STATE, mode=AdaptMode.CSS)
        _, prune = adapt(html, GEN_STATE, mode=AdaptMode.PRUNE)
        assert {r.span for r in css.hidden} == {r.span for r in prune.hidden}

    @given(full_documents())
    @settings(max_examples=150)
    def test_prune_byte_oracle(self, html):
        """PRUNE output equals the input with outermost-false spans deleted."""
        data = html.encode("utf-8")
        sites = extract_rules(html, {})
        values = [evaluate_own(s) for s in sites]
        expected = bytearray()
        cursor = 0
        removed_until = -1
        for site, value in zip(sites, values):
            start, end = site.element_span
            if start < removed_until or value:
                continue
            expected += data[cursor:start]
            cursor = end
            removed_until = end
        expected += data[cursor:]
        out, _ = adapt(html, GEN_STATE, mode=AdaptMode.PRUNE)
        assert out.encode("utf-8") == bytes(expected)

    @given(full_documents())
    @settings(max_examples=100)
    def test_zero_site_documents_pass_through(self, html):
        if extract_rules(html, {}):
            return
        out, _ = adapt(html, GEN_STATE, mode=AdaptMode.CSS)
        assert out == html


def evaluate_own(site):
    from phyweb.ruledsl import evaluate

    if site.ast is None:
        return False
    try:
        return evaluate(site.ast, GEN_STATE, GEN_STATE.networks)
    except Exception:
        return False


class TestEnrichUrl:
    FULL_STATE = ContextState(
        movement=Movement.VEHICLE,
        noise_db=-32.0,
        noise=NoiseLevel.MODERATE,
        light=LightLevel.NORMAL,
        lux=450.0,
        zones={"BIG_MALL": True, "CAFE": False},
    )

    def test_paper_example_shape(self):
        got = enrich_url("http://some_domain.com/", self.FULL_STATE)
        assert got.url == "http://some_domain.com/?pw_move=VEHICLE&pw_noise_db=-32&pw_light=NORMAL&pw_zones=BIG_MALL"
        assert got.ok

    def test_unknown_state_unchanged(self):
        got = enrich_url("http://d.com/x", ContextState())
        assert got.url == "http://d.com/x" and got.ok

    def test_existing_query_appended(self):
        state = ContextState(movement=Movement.WALKING)
        assert enrich_url("http://d.com/p?a=1", state).url == "http://d.com/p?a=1&pw_move=WALKING"

    def test_reapplication_noop(self):
        once = enrich_url("http://d.com/", self.FULL_STATE).url
        assert enrich_url(once, self.FULL_STATE).url == once

    def test_fragment_preserved(self):
        state = ContextState(movement=Movement.WALKING)
        assert enrich_url("http://d.com/p#sec", state).url == "http://d.com/p?pw_move=WALKING#sec"

    def test_multiple_zones_sorted(self):
        state = ContextState(zones={"B": True, "A": True, "C": False})
        assert "pw_zones=A,B" in enrich_url("http://d.com/", state).url

    def test_noise_rounded(self):
        state = ContextState(noise_db=-31.6, noise=NoiseLevel.MODERATE)
        assert "pw_noise_db=-32" in enrich_url("http://d.com/", state).url

    def test_unparseable_flagged(self):
        got = enrich_url("http://[bad", ContextState(movement=Movement.WALKING))
        assert got.url == "http://[bad" and not got.ok

    def test_relative_url(self):
        state = ContextState(movement=Movement.WALKING)
        assert enrich_url("/page?x=2", state).url == "/page?x=2&pw_move=WALKING"


class TestBindingsFile:
    def test_load(self):
        assert load_bindings('{"BIG_MALL": "zone(BIG_MALL)"}') == BIG_MALL_BINDINGS

    def test_bad_expression_rejected(self):
        with pytest.raises(Exception):
            load_bindings('{"A": "lux >"}')

    def test_non_object_rejected(self):
        with pytest.raises(ValueError):
            load_bindings('["x"]')
