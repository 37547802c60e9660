"""inference-worker command line: serve over stdio or TCP."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from inference_worker.server import serve_stdio, serve_tcp
from inference_worker.worker import ReferenceWorker, WorkerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inference-worker",
        description="Reference inference worker for the duplexprep wire protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the protocol endpoint")
    p.add_argument("--config", help="JSON worker config")
    p.add_argument("--kinds", help="comma-separated task kinds to enable")
    p.add_argument("--stdio", action="store_true", help="serve on stdio (default)")
    p.add_argument("--tcp", type=int, metavar="PORT", help="serve on this TCP port")
    p.add_argument("--name", default="inference-worker")
    p.set_defaults(func=_cmd_serve)
    return parser


def _cmd_serve(args) -> int:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    if args.kinds:
        raw["task_kinds"] = [k.strip() for k in args.kinds.split(",") if k.strip()]
    try:
        config = WorkerConfig(raw)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    worker = ReferenceWorker(config)
    if not worker.capabilities:
        print("no task kind could be enabled; refusing to serve", file=sys.stderr)
        return 2
    if args.tcp is not None:
        serve_tcp(worker, port=args.tcp, name=args.name)
    else:
        serve_stdio(worker, name=args.name)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
