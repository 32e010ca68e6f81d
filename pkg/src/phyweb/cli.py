"""Single executable: gateway server, simulator, and offline adaptation.

Exit codes are a stable contract: 0 success, 1 domain error (rule or
adaptation failures, unreachable sink), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .adapt import AdaptMode, HtmlStructureError, adapt, extract_rules, load_bindings
from .context import ContextState, ScanPayload
from .fingerprint import FingerprintError
from .gateway import Gateway, GatewayConfig, GatewayServer
from .ruledsl import RuleError
from .simulator import SimBridge, SinkError, load_environment, load_trace, run_trace

USAGE_ERROR = 2
DOMAIN_ERROR = 1

ENDPOINTS = [
    "POST /api/v1/scan",
    "GET  /api/v1/networks",
    "GET  /api/v1/context",
    "GET  /api/v1/context.js?callback=NAME",
    "GET  /api/v1/events?mode=push|notify",
    "POST /api/v1/predicates",
    "GET  /api/v1/predicates",
    "POST /api/v1/adapt?mode=css|prune&report=0|1",
    "GET  /api/v1/enrich?url=U",
]
SIM_ENDPOINTS = [
    "POST /api/v1/sim/position",
    "POST /api/v1/sim/ambient",
    "GET  /api/v1/sim/env",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phyweb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the localhost gateway")
    serve.add_argument("--port", type=int, help="listen port (default 8170)")
    serve.add_argument("--bind", help="bind address (default 127.0.0.1)")
    serve.add_argument("--config", help="JSON config file")
    serve.add_argument("--sim", metavar="ENV_JSON", help="enable the sim bridge with this environment")
    serve.add_argument("--interval", type=int, default=None, help="sim auto-emit interval ms (default 500)")
    serve.add_argument("--seed", type=int, default=None, help="sim random seed (default 0)")
    serve.add_argument("--start", default=None, metavar="X,Y", help="sim start position (default 0,0)")
    serve.add_argument("--predicates", help="proximity predicates JSON file")
    serve.add_argument("--bindings", help="element-id bindings JSON file")
    serve.add_argument("--ui", metavar="DIR", help="serve static UI files from this directory")
    serve.add_argument("-v", "--verbose", action="store_true", help="log requests")

    sim = sub.add_parser("sim", help="drive a scripted device trace")
    sim.add_argument("--env", help="environment JSON file")
    sim.add_argument("--trace", help="trace JSON file")
    sim.add_argument("--replay", metavar="JSONL", help="replay previously recorded scan payloads")
    sim.add_argument("--interval", type=int, default=1000, help="step interval ms (default 1000)")
    sim.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sim.add_argument("--post", metavar="URL", help="post scans to a gateway base URL")
    sim.add_argument("--out", metavar="JSONL", help="write scans to a JSONL file")
    sim.add_argument("--json", action="store_true", help="machine-readable summary")

    adapt_cmd = sub.add_parser("adapt", help="adapt an HTML file offline")
    adapt_cmd.add_argument("html", help="HTML file to adapt")
    adapt_cmd.add_argument("--context", required=True, help="ContextState JSON file")
    adapt_cmd.add_argument("--mode", choices=["css", "prune"], default="css")
    adapt_cmd.add_argument("--bindings", help="element-id bindings JSON file")
    adapt_cmd.add_argument("--json", action="store_true", help="emit {html, report} JSON on stdout")

    check = sub.add_parser("rules-check", help="lint condition expressions in HTML/bindings files")
    check.add_argument("paths", nargs="+", help="HTML or bindings JSON files")
    check.add_argument("--json", action="store_true", help="machine-readable report")
    return parser


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def cmd_serve(args) -> int:
    try:
        config = GatewayConfig.from_file(args.config) if args.config else GatewayConfig()
        if args.port is not None:
            config.port = args.port
        if args.bind is not None:
            config.bind = args.bind
        if args.predicates:
            from .fingerprint import predicates_from_json

            config.predicates = predicates_from_json(_read(args.predicates))
        if args.bindings:
            config.bindings = load_bindings(_read(args.bindings))
        if args.ui:
            config.ui_root = Path(args.ui)
        sim_conf = dict(config.sim or {})
        if args.sim:
            sim_conf["env_path"] = args.sim
        if args.interval is not None:
            sim_conf["interval_ms"] = args.interval
        if args.seed is not None:
            sim_conf["seed"] = args.seed
        if args.start is not None:
            x, y = (float(v) for v in args.start.split(","))
            sim_conf["start"] = [x, y]
        gateway = config.build_gateway()
        bridge = None
        if sim_conf.get("env_path"):
            env = load_environment(_read(sim_conf["env_path"]))
            start = sim_conf.get("start", [0.0, 0.0])
            bridge = SimBridge(
                env,
                sink=gateway.ingest_scan,
                interval_ms=int(sim_conf.get("interval_ms", 500)),
                seed=int(sim_conf.get("seed", 0)),
                start=(float(start[0]), float(start[1])),
            )
        server = GatewayServer(gateway, config, sim_bridge=bridge, quiet=not args.verbose)
    except (OSError, ValueError, FingerprintError) as exc:
        print(f"phyweb serve: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print(f"phyweb gateway listening on {server.base_url}", flush=True)
    for line in ENDPOINTS + (SIM_ENDPOINTS if bridge else []):
        print(f"  {line}")
    sys.stdout.flush()
    if config.ui_root:
        print(f"  static UI from {config.ui_root}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("stopping")
        server.stop()
    return 0


def _http_sink(base_url: str):
    scan_url = base_url.rstrip("/") + "/api/v1/scan"

    def post(payload: ScanPayload) -> int:
        data = json.dumps(payload.to_json_dict()).encode()
        req = urllib.request.Request(scan_url, data=data, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=10) as resp:
            return int(resp.headers.get("X-PhyWeb-Seq", 0))

    return post


def _gateway_seq(base_url: str) -> int:
    with urllib.request.urlopen(base_url.rstrip("/") + "/api/v1/context", timeout=10) as resp:
        return int(json.loads(resp.read())["seq"])


def cmd_sim(args) -> int:
    if bool(args.post) == bool(args.out):
        print("phyweb sim: exactly one of --post or --out is required", file=sys.stderr)
        return USAGE_ERROR
    if args.replay and (args.env or args.trace):
        print("phyweb sim: --replay does not take --env/--trace", file=sys.stderr)
        return USAGE_ERROR
    if not args.replay and not (args.env and args.trace):
        print("phyweb sim: --env and --trace are required (or --replay)", file=sys.stderr)
        return USAGE_ERROR

    out_file = None
    try:
        if args.post:
            sink = _http_sink(args.post)
            baseline = None
        else:
            out_file = open(args.out, "w", encoding="utf-8")

            def sink(payload: ScanPayload) -> None:
                out_file.write(json.dumps(payload.to_json_dict()) + "\n")

            baseline = 0

        if args.replay:
            try:
                lines = [line for line in _read(args.replay).splitlines() if line.strip()]
                payloads = [ScanPayload.from_json_dict(json.loads(line)) for line in lines]
            except (OSError, ValueError) as exc:
                print(f"phyweb sim: {exc}", file=sys.stderr)
                return USAGE_ERROR
            if baseline is None:
                baseline = _gateway_seq(args.post)
            steps = 0
            last_seq = None
            for i, payload in enumerate(payloads):
                try:
                    result = sink(payload)
                except Exception as exc:
                    print(f"phyweb sim: step {i}: {exc}", file=sys.stderr)
                    return DOMAIN_ERROR
                steps += 1
                if result is not None:
                    last_seq = result
            publishes = max(last_seq - baseline, 0) if last_seq is not None else 0
            summary = {"steps": steps, "publishes": publishes}
        else:
            try:
                env = load_environment(_read(args.env))
                trace = load_trace(_read(args.trace))
            except (OSError, ValueError) as exc:
                print(f"phyweb sim: {exc}", file=sys.stderr)
                return USAGE_ERROR
            if baseline is None:
                try:
                    baseline = _gateway_seq(args.post)
                except (OSError, urllib.error.URLError, ValueError) as exc:
                    print(f"phyweb sim: gateway unreachable: {exc}", file=sys.stderr)
                    return DOMAIN_ERROR
            try:
                result = run_trace(
                    env, trace, args.interval, sink, rng=random.Random(args.seed), baseline_seq=baseline
                )
            except SinkError as exc:
                print(f"phyweb sim: {exc}", file=sys.stderr)
                return DOMAIN_ERROR
            summary = result.to_json_dict()
    finally:
        if out_file is not None:
            out_file.close()

    if args.json:
        print(json.dumps(summary))
    else:
        print(f"steps={summary['steps']} publishes={summary['publishes']}")
    return 0


def cmd_adapt(args) -> int:
    try:
        html = _read(args.html)
        state = ContextState.from_json_dict(json.loads(_read(args.context)))
        bindings = load_bindings(_read(args.bindings)) if args.bindings else {}
    except (OSError, ValueError) as exc:
        print(f"phyweb adapt: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        out, report = adapt(html, state, state.networks, AdaptMode(args.mode), bindings)
    except HtmlStructureError as exc:
        print(f"phyweb adapt: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    if args.json:
        print(json.dumps({"html": out, "report": report.to_json_dict()}))
    else:
        sys.stdout.write(out)
        for ref, message in report.errors:
            print(f"rule error at {ref.id or ref.span}: {message}", file=sys.stderr)
        print(
            f"adapt: {len(report.shown)} shown, {len(report.hidden)} hidden, {len(report.errors)} errors",
            file=sys.stderr,
        )
    return DOMAIN_ERROR if report.errors else 0


def _check_bindings_file(path: str, text: str) -> list[dict]:
    results = []
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("bindings must be a JSON object of id -> expression")
    for element_id, expr in data.items():
        entry = {"file": path, "id": element_id, "expr": str(expr), "ok": True, "error": None}
        try:
            from .ruledsl import parse as parse_rule

            parse_rule(str(expr))
        except RuleError as exc:
            entry["ok"] = False
            entry["error"] = str(exc)
        results.append(entry)
    return results


def _check_html_file(path: str, text: str) -> list[dict]:
    results = []
    for site in extract_rules(text, {}):
        entry = {
            "file": path,
            "offset": site.element_span[0],
            "expr": site.expr_text,
            "ok": site.error is None,
            "error": site.error,
        }
        results.append(entry)
    return results


def cmd_rules_check(args) -> int:
    all_results: list[dict] = []
    ok = True
    for path in args.paths:
        try:
            text = _read(path)
        except OSError as exc:
            print(f"phyweb rules-check: {exc}", file=sys.stderr)
            return USAGE_ERROR
        try:
            if path.endswith(".json"):
                results = _check_bindings_file(path, text)
            else:
                results = _check_html_file(path, text)
        except (HtmlStructureError, ValueError) as exc:
            all_results.append({"file": path, "ok": False, "error": str(exc), "expr": None})
            ok = False
            continue
        all_results.extend(results)
        ok = ok and all(r["ok"] for r in results)
    if args.json:
        print(json.dumps({"ok": ok, "rules": all_results}))
    else:
        for r in all_results:
            where = r.get("id") or r.get("offset", "")
            status = "OK" if r["ok"] else f"ERROR {r['error']}"
            print(f"{r['file']}:{where}: {status} {r['expr'] or ''}".rstrip())
        print(f"rules-check: {len(all_results)} rules, {'all OK' if ok else 'errors found'}")
    return 0 if ok else DOMAIN_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "sim":
        return cmd_sim(args)
    if args.command == "adapt":
        return cmd_adapt(args)
    return cmd_rules_check(args)


if __name__ == "__main__":
    sys.exit(main())
