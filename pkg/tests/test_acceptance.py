"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to watch the lines appear.
"""

import contextlib
import json
import math
import random
import re
import sys

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import requests

from phyweb.adapt import AdaptMode, adapt, enrich_url
from phyweb.context import (
    AccelSample,
    AudioSample,
    ContextState,
    LightLevel,
    LightSample,
    Movement,
    NoiseLevel,
    OrientSample,
    classify_movement,
    light_level,
    noise_level,
    rotation_trend,
    surface_stability,
)
from phyweb.fingerprint import (
    MatchBy,
    NodeCondition,
    ProximityPredicate,
    parse_fingerprint,
    serialize_fingerprint,
)
from phyweb.gateway import Gateway, GatewayConfig, GatewayServer
from phyweb.ruledsl import And, Not, Or, evaluate, format_ast, parse
from phyweb.simulator import Environment, SimNode, Trace, Waypoint, run_trace

from test_adapt import GEN_STATE, full_documents
from test_context import gps_track, window_with
from test_fingerprint import fingerprints, mac_pred, oracle_transitions, run_rssi_sequence
from test_gateway import SseReader
from test_ruledsl import any_asts, bool_asts, consistent_states


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}", file=sys.stderr)
        raise
    print(f"ACCEPTANCE PASS: {name}")


def count_flips(flags):
    return sum(1 for a, b in zip(flags, flags[1:]) if a != b) + (1 if flags and flags[0] else 0)


class TestFingerprintFidelity:
    def test_round_trip_1000_and_paper_keys(self):
        with criterion("fingerprint fidelity: 1000-case round trip, SSID/MAC/RSSI keys"):
            @settings(max_examples=1000, deadline=None)
            @given(fingerprints)
            def round_trip(fp):
                text = serialize_fingerprint(fp)
                assert parse_fingerprint(text, captured_at=fp.captured_at) == fp
                for obj in json.loads(text):
                    assert {"SSID", "MAC", "RSSI"} <= set(obj)

            round_trip()


class TestHysteresisAntiFlapping:
    SEQUENCE = [-72, -69, -68, -71, -69, -74, -76, -77]

    def test_fixed_sequence_and_dominance(self):
        with criterion("hysteresis: fixed sequence 2 vs 4 transitions; debounced <= raw over 500 sequences"):
            debounced = run_rssi_sequence(self.SEQUENCE, mac_pred(min_rssi=-70, margin=5, dwell=2))
            assert count_flips(debounced) == 2 == oracle_transitions(self.SEQUENCE, -70, 5, 2)
            raw = run_rssi_sequence(self.SEQUENCE, mac_pred(min_rssi=-70, margin=0, dwell=1))
            assert count_flips(raw) == 4 == oracle_transitions(self.SEQUENCE, -70, 0, 1)

            rng = random.Random(20260808)
            for _ in range(500):
                base = rng.uniform(-85, -55)
                seq = [round(base + rng.gauss(0, 4)) for _ in range(rng.randint(5, 60))]
                margin = rng.randint(0, 8)
                dwell = rng.randint(1, 4)
                deb = count_flips(run_rssi_sequence(seq, mac_pred(min_rssi=-70, margin=margin, dwell=dwell)))
                raw_n = count_flips(run_rssi_sequence(seq, mac_pred(min_rssi=-70, margin=0, dwell=1)))
                assert deb <= raw_n, (seq, margin, dwell)


class TestDslSoundness:
    def test_fixpoint_de_morgan_and_paper_expression(self):
        with criterion("DSL soundness: 2000-ast parse/format fixpoint, De Morgan, paper expression"):
            @settings(max_examples=2000, deadline=None)
            @given(any_asts)
            def fixpoint(ast):
                assert parse(format_ast(ast)) == ast

            fixpoint()

            @settings(max_examples=300, deadline=None)
            @given(bool_asts, bool_asts, consistent_states())
            def de_morgan(a, b, state):
                assert evaluate(Not(And(a, b)), state) == evaluate(Or(Not(a), Not(b)), state)

            de_morgan()

            ast = parse("user_movement_type == VEHICLE")
            for movement in Movement:
                state = ContextState(movement=movement)
                assert evaluate(ast, state) is (movement is Movement.VEHICLE)


class TestPathLossOracle:
    def test_reference_table(self):
        with criterion("path loss: (tx -40, n 2) at d in {1,5,10,100} -> {-40,-54,-60,-80} within 0.5 dB"):
            env = Environment(
                nodes=(SimNode(mac="aa:bb:cc:dd:ee:01", ssid="b", pos=(0.0, 0.0), tx_power_dbm=-40, path_loss_exponent=2.0),),
                noise_sigma_db=0.0,
                detect_floor_dbm=-1000.0,
            )
            expected = {1: -40, 5: -54, 10: -60, 100: -80}
            for d, want in expected.items():
                got = env.rssi_at(env.nodes[0], (float(d), 0.0))
                closed_form = -40 - 20 * math.log10(max(d, 1))
                assert abs(got - closed_form) <= 0.5
                assert got == want


class TestClassifierTable:
    def test_table(self):
        with criterion("classifier table: movement, noise, rotation, stability, light"):
            assert classify_movement(window_with(*gps_track([8.0, 8.0, 8.0]))) is Movement.VEHICLE
            assert classify_movement(window_with(*gps_track([1.2, 1.2, 1.2]))) is Movement.WALKING
            assert classify_movement(window_with(*gps_track([0.0, 0.0, 0.0]))) is Movement.STATIONARY
            db, level = noise_level(window_with(AudioSample(0.5, t=0)))
            assert level is NoiseLevel.LOUD
            assert db == pytest.approx(-6.0, abs=0.1)
            w = window_with(OrientSample(350, 0, 0, t=0), OrientSample(10, 0, 0, t=500))
            assert rotation_trend(w) is True
            w = window_with(*[AccelSample(0, 0, 9.81, t=i * 100) for i in range(4)])
            assert surface_stability(w) is True
            lux, level = light_level(window_with(LightSample(0.0, t=0)))
            assert level is LightLevel.DARK


BEACON_MAC = "aa:bb:cc:dd:ee:01"


def big_mall_predicate():
    return ProximityPredicate(
        id="BIG_MALL",
        conditions=(NodeCondition(MatchBy.MAC, BEACON_MAC, min_rssi=-70),),
        exit_margin_db=5,
        dwell_scans=2,
    )


class TestAdaptationEndToEnd:
    def test_big_mall_toggles_once_each_way(self):
        with criterion("adaptation: BIG_MALL zone toggles exactly once in and once out, dwell honored"):
            env = Environment(
                nodes=(SimNode(mac=BEACON_MAC, ssid="mall", pos=(5.0, 5.0), tx_power_dbm=-40, path_loss_exponent=2.0),),
                noise_sigma_db=0.0,
            )
            trace = Trace(
                waypoints=(Waypoint(0, 85, 5), Waypoint(10, 5, 5), Waypoint(20, 85, 5))
            )
            gateway = Gateway(predicates=[big_mall_predicate()], bindings={"BIG_MALL": "zone(BIG_MALL)"})
            page = '<html><head></head><body><div id="BIG_MALL">mall deals</div></body></html>'

            # independent oracle: closed-form rssi per step -> hand-simulated dwell
            def rssi(x):
                d = max(math.dist((x, 5), (5, 5)), 1.0)
                return round(-40 - 20 * math.log10(d))

            xs = [85 - 8 * t for t in range(11)] + [5 + 8 * (t - 10) for t in range(11, 21)]
            oracle_rssi = [rssi(x) for x in xs]
            oracle_flags = run_rssi_sequence(oracle_rssi, mac_pred(mac=BEACON_MAC, min_rssi=-70, margin=5, dwell=2))
            assert count_flips(oracle_flags) == 2  # the trace is built to enter and leave once

            zone_per_scan = []
            visibility = []

            def sink(payload):
                seq = gateway.ingest_scan(payload)
                state = gateway.snapshot()
                zone_per_scan.append(state.zones["BIG_MALL"])
                html, _ = adapt(page, state, state.networks, AdaptMode.CSS, gateway.bindings)
                visibility.append('class="phyweb-hidden"' not in html)
                return seq

            summary = run_trace(env, trace, 1000, sink)
            assert summary.steps == 21
            assert zone_per_scan == oracle_flags
            assert count_flips(zone_per_scan) == 2
            # the bound block became visible exactly once and hidden again exactly once
            assert visibility == zone_per_scan
            first_enter_scan = next(i for i, r in enumerate(oracle_rssi) if r >= -70)
            assert zone_per_scan[first_enter_scan] is False  # dwell of 2 held it back

    def test_css_idempotence_100_documents(self):
        with criterion("adaptation: CSS idempotence over 100 generated documents"):
            @settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
            @given(full_documents())
            def idempotent(html):
                once, _ = adapt(html, GEN_STATE, mode=AdaptMode.CSS)
                twice, _ = adapt(once, GEN_STATE, mode=AdaptMode.CSS)
                assert once == twice

            idempotent()

    def test_zero_site_documents_byte_identical(self):
        with criterion("adaptation: zero-site documents pass through byte-identical"):
            docs = [
                "",
                "plain text only",
                "<html><head><title>x</title></head><body><p>hi</p></body></html>",
                '<div class="a">nested <span>bits</span> and entities &amp; more</div>',
                "<script>var x = '<div data-phyweb-when=1>';</script>",
            ]
            for html in docs:
                out, report = adapt(html, GEN_STATE, mode=AdaptMode.CSS)
                assert out == html
                out, _ = adapt(html, GEN_STATE, mode=AdaptMode.PRUNE)
                assert out == html


class TestUrlEnrichment:
    def test_paper_form_and_noop(self):
        with criterion("url enrichment: paper's query form, re-application is a no-op"):
            state = ContextState(
                movement=Movement.VEHICLE,
                noise_db=-32.0,
                noise=NoiseLevel.MODERATE,
                lux=450.0,
                light=LightLevel.NORMAL,
                zones={"BIG_MALL": True},
            )
            once = enrich_url("http://some_domain.com/", state)
            assert once.url == (
                "http://some_domain.com/?pw_move=VEHICLE&pw_noise_db=-32&pw_light=NORMAL&pw_zones=BIG_MALL"
            )
            assert re.match(r"^http://some_domain\.com/\?(pw_\w+=[^&]*&)*pw_\w+=[^&]*$", once.url)
            again = enrich_url(once.url, state)
            assert again.url == once.url


class TestPullPushEquivalence:
    def test_sse_replay_notify_and_callback(self):
        with criterion("pull/push: SSE replay == snapshots, notify gap-free, callback == GET /context"):
            config = GatewayConfig(port=0, heartbeat_s=5.0)
            gateway = Gateway()
            server = GatewayServer(gateway, config)
            server.start()
            try:
                base = server.base_url
                push = SseReader(base, "push")
                notify = SseReader(base, "notify")
                initial_push = push.next_event()
                initial_notify = notify.next_event()
                assert json.loads(initial_push["data"])["seq"] == 0
                assert json.loads(initial_notify["data"]) == {"seq": 0}

                snapshots = []
                for i in range(1, 6):
                    payload = {
                        "fingerprint": [
                            {"SSID": f"net{i}", "MAC": f"aa:bb:cc:dd:ee:{i:02x}", "RSSI": -50 - i}
                        ],
                        "source": "acceptance",
                    }
                    r = requests.post(f"{base}/api/v1/scan", json=payload, timeout=5)
                    assert r.status_code == 204
                    snapshots.append(requests.get(f"{base}/api/v1/context", timeout=5).json())

                push_states = [json.loads(push.next_event()["data"]) for _ in range(5)]
                assert push_states == snapshots

                notify_seqs = [json.loads(notify.next_event()["data"])["seq"] for _ in range(5)]
                assert notify_seqs == list(range(1, 6))  # strictly increasing, gap-free

                r = requests.get(f"{base}/api/v1/context.js?callback=f_callback", timeout=5)
                match = re.fullmatch(r"f_callback\((.*)\);", r.text, re.S)
                assert match is not None
                embedded = json.loads(match.group(1))
                assert embedded == requests.get(f"{base}/api/v1/context", timeout=5).json()

                push.close()
                notify.close()
            finally:
                server.stop()
