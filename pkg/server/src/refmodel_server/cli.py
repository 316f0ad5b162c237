"""Command line for the reference server."""

from __future__ import annotations

import argparse
import sys

from .rules import BrightnessRule, FixedTableRule, PretrainedRule
from .server import serve_http, serve_stdio


def build_rule(args: argparse.Namespace):
    if args.mode == "pretrained":
        if not args.model_path:
            raise SystemExit("pretrained mode needs --model-path")
        return PretrainedRule(args.model_path)
    if args.rule == "table":
        probs = [float(v) for v in args.probs.split(",")]
        return FixedTableRule(probs)
    return BrightnessRule()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="refmodel-server",
        description="answer base64-PNG prediction requests over stdio or HTTP",
    )
    parser.add_argument("--mode", choices=["stub", "pretrained"], default="stub")
    parser.add_argument("--rule", choices=["brightness", "table"], default="brightness",
                        help="stub rule (stub mode only)")
    parser.add_argument("--probs", default="0.5,0.5", help="comma-separated table for --rule table")
    parser.add_argument("--model-path", help="saved Keras model (pretrained mode)")
    parser.add_argument("--http", type=int, metavar="PORT",
                        help="serve HTTP on this port instead of stdio (0 picks a free one)")
    args = parser.parse_args(argv)

    rule = build_rule(args)
    if args.http is not None:
        serve_http(rule, args.http)
    else:
        serve_stdio(rule)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
