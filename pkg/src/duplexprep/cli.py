"""Command-line entry points.

Verbs: run (batch pipeline), evaluate (diarization/ASR metrics from RTTM
and text files), synth-fixtures (generate the synthetic corpus),
validate-manifest, backend-conformance, and mock-worker (host the mock
backends over stdio or TCP for out-of-process runs).

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _cmd_run(args) -> int:
    from duplexprep.config import ConfigError, PipelineConfig
    from duplexprep.pipeline import run_pipeline

    try:
        config = PipelineConfig.load(args.config, overrides=args.set or [])
        if args.inputs:
            config.raw["inputs"] = list(args.inputs)
        if args.output_dir:
            config.raw["output_dir"] = args.output_dir
        config.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        summary = run_pipeline(config)
    except ValueError as exc:
        # e.g. manifest schema version mismatch on resume
        print(f"refusing to run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(config["output_dir"])
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary.as_dict(), sort_keys=True, indent=2) + "\n")
    report = summary.rtf()
    if report is not None:
        print(report.render())
    print(f"manifests: {len(summary.manifests)}  failed: {len(summary.failed)}  "
          f"wall: {summary.wall_s:.2f}s", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_PARTIAL


def _cmd_evaluate(args) -> int:
    from duplexprep.metrics import der, der_short, der_turn, jer, load_rttm, wer

    result: dict = {}
    if args.ref_rttm and args.hyp_rttm:
        ref = load_rttm(args.ref_rttm)
        hyp = load_rttm(args.hyp_rttm)
        by_rec: dict = {}
        for seg in ref:
            by_rec.setdefault(seg.recording_id, ([], []))[0].append(seg)
        for seg in hyp:
            by_rec.setdefault(seg.recording_id, ([], []))[1].append(seg)
        recordings = {}
        for rec_id, (r, h) in sorted(by_rec.items()):
            if not r:
                continue
            breakdown = der(r, h, collar_s=args.collar)
            entry = {
                "der": breakdown.der,
                "missed_s": round(breakdown.missed_s, 6),
                "false_alarm_s": round(breakdown.false_alarm_s, 6),
                "confusion_s": round(breakdown.confusion_s, 6),
                "total_ref_speech_s": round(breakdown.total_ref_speech_s, 6),
                "jer": jer(r, h, collar_s=args.collar),
            }
            for max_dur, key in ((0.5, "der_short_0.5"), (1.0, "der_short_1.0")):
                short = der_short(r, h, max_dur_s=max_dur, collar_s=args.collar)
                entry[key] = short.der
            turn = der_turn(r, h, collar_s=args.collar)
            entry["der_turn"] = turn.der
            recordings[rec_id] = entry
        result["diarization"] = recordings

    if args.ref_text and args.hyp_text:
        ref_tokens = Path(args.ref_text).read_text().split()
        hyp_tokens = Path(args.hyp_text).read_text().split()
        breakdown = wer(ref_tokens, hyp_tokens)
        result["wer"] = {
            "wer": breakdown.wer,
            "substitutions": breakdown.substitutions,
            "deletions": breakdown.deletions,
            "insertions": breakdown.insertions,
            "ref_count": breakdown.ref_count,
        }

    if not result:
        print("nothing to evaluate: pass --ref-rttm/--hyp-rttm or --ref-text/--hyp-text",
              file=sys.stderr)
        return EXIT_CONFIG

    text = json.dumps(result, sort_keys=True, indent=2)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    print(text)
    # plain-text table
    for rec_id, entry in result.get("diarization", {}).items():
        def fmt(v):
            return "n/a" if v is None else f"{100 * v:6.2f}%"
        print(f"\n{rec_id}:")
        print(f"  DER          {fmt(entry['der'])}")
        print(f"  JER          {fmt(entry['jer'])}")
        print(f"  DER <=0.5s   {fmt(entry['der_short_0.5'])}")
        print(f"  DER <=1.0s   {fmt(entry['der_short_1.0'])}")
        print(f"  DER turn     {fmt(entry['der_turn'])}")
    return EXIT_OK


def _cmd_synth_fixtures(args) -> int:
    from duplexprep.synthfix import build_conversation_fixture, build_overlap_grid

    out = Path(args.out_dir)
    written = []
    for i in range(args.conversations):
        stem = f"conv{i:02d}"
        written.append(
            build_conversation_fixture(
                out, stem, seed=args.seed + i, n_turns=args.turns,
                with_music=(i % 2 == 0),
            )
        )
    if args.grid:
        written.extend(build_overlap_grid(out, variants=args.grid_variants, seed=args.seed))
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_validate_manifest(args) -> int:
    from duplexprep.manifest import load_manifest, validate_manifest

    failures = 0
    for path in args.manifests:
        path = Path(path)
        try:
            manifest = load_manifest(path)
        except Exception as exc:
            print(f"FAIL {path}: unreadable ({exc})")
            failures += 1
            continue
        problems = validate_manifest(manifest, base_dir=path.parent)
        if problems:
            failures += 1
            print(f"FAIL {path}")
            for p in problems:
                print(f"  - {p}")
        else:
            print(f"PASS {path}")
    return EXIT_OK if failures == 0 else EXIT_PARTIAL


def _cmd_backend_conformance(args) -> int:
    from duplexprep.backend.conformance import fixture_context, run_conformance
    from duplexprep.backend.dispatch import InProcessHandle, SubprocessHandle, TcpHandle
    from duplexprep.backend.mocks import MockWorker

    context = {}
    if args.fixtures:
        context = fixture_context(args.fixtures)

    if args.cmd:
        import shlex

        handle = SubprocessHandle(shlex.split(args.cmd))
    elif args.tcp:
        host, _, port = args.tcp.rpartition(":")
        handle = TcpHandle(host or "127.0.0.1", int(port))
    elif args.mock:
        handle = InProcessHandle(MockWorker(args.mock))
        context = context or fixture_context(args.mock)
    else:
        print("pass one of --cmd, --tcp, --mock", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_conformance(handle, context)
    finally:
        handle.close()
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n"
        )
    print(report.render())
    return EXIT_OK if report.passed else EXIT_PARTIAL


def _cmd_mock_worker(args) -> int:
    from duplexprep.backend.mocks import MockWorker
    from duplexprep.backend.server import serve_stdio, serve_tcp

    worker = MockWorker(
        args.fixtures,
        seed=args.seed,
        asr_noise_rate=args.asr_noise_rate,
    )
    if args.tcp is not None:
        serve_tcp(worker, port=args.tcp, name="duplexprep-mock")
    else:
        serve_stdio(worker, name="duplexprep-mock")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duplexprep",
        description="Batch curation of conversational audio into duplex-ready manifests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline over configured inputs")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--inputs", nargs="*", help="input wav paths or globs (overrides config)")
    p.add_argument("--output-dir", help="output directory (overrides config)")
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                   help="config override, value parsed as JSON")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="diarization and ASR metrics")
    p.add_argument("--ref-rttm")
    p.add_argument("--hyp-rttm")
    p.add_argument("--collar", type=float, default=0.25)
    p.add_argument("--ref-text")
    p.add_argument("--hyp-text")
    p.add_argument("--json-out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth-fixtures", help="generate the synthetic fixture corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--conversations", type=int, default=2)
    p.add_argument("--turns", type=int, default=10)
    p.add_argument("--grid", action="store_true", help="also build the SIR x ratio grid")
    p.add_argument("--grid-variants", type=int, default=3)
    p.set_defaults(func=_cmd_synth_fixtures)

    p = sub.add_parser("validate-manifest", help="schema-check manifest files")
    p.add_argument("manifests", nargs="+")
    p.set_defaults(func=_cmd_validate_manifest)

    p = sub.add_parser("backend-conformance", help="protocol conformance against an endpoint")
    p.add_argument("--cmd", help="worker command served over stdio")
    p.add_argument("--tcp", help="host:port of a serving worker")
    p.add_argument("--mock", help="fixture dir: run against in-process mocks")
    p.add_argument("--fixtures", help="fixture dir supplying the request context")
    p.add_argument("--json-out")
    p.set_defaults(func=_cmd_backend_conformance)

    p = sub.add_parser("mock-worker", help="serve mock backends over stdio or TCP")
    p.add_argument("--fixtures", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--asr-noise-rate", type=float, default=0.0)
    p.add_argument("--tcp", type=int, help="listen on this TCP port instead of stdio")
    p.set_defaults(func=_cmd_mock_worker)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
