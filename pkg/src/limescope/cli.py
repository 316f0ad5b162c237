"""Command-line surface: segment, explain, evaluate.

Exit codes are a stable scripting contract: 0 success, 2 usage or input
error, 3 external-model transport error. Flag values override an optional
--config JSON file, which overrides built-in defaults. All file outputs are
written atomically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adapters import ProcessAdapter, model_from_spec
from .dataset import ClassLabel, DatasetManifest
from .errors import (
    BatchPredictionError,
    ContractError,
    LimescopeError,
    ModelProtocolError,
    ModelTransportError,
    ModelValidationError,
)
from .explainer import LocalSurrogateExplainer
from .fileio import canonical_json, read_json, atomic_write_text
from .image import load_image, save_image
from .overlay import render_overlay
from .segmentation import SegmentationParams, segment_grid, segment_slic
from .evaluate import misclassification_report, read_prediction_log

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRANSPORT = 3

DEFAULT_SEED = 7

_DEFAULTS = {
    "segment": {
        "method": "slic",
        "segments": 50,
        "compactness": 10.0,
        "iterations": 10,
        "rows": 2,
        "cols": 4,
        "seed": DEFAULT_SEED,
        "png": None,
        "json": False,
    },
    "explain": {
        "method": "slic",
        "segments": 50,
        "compactness": 10.0,
        "iterations": 10,
        "rows": 2,
        "cols": 4,
        "samples": 1000,
        "seed": DEFAULT_SEED,
        "sigma": 0.25,
        "ridge_lambda": 1.0,
        "top_k": 5,
        "fusion": "segment-mean",
        "fixed_color": "0.5,0.5,0.5",
        "workers": 1,
        "overlay": None,
        "target_class": None,
        "json": False,
    },
    "evaluate": {
        "model_id": "",
        "split": "valid",
        "out": None,
        "json": False,
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limescope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="write a superpixel map for an image")
    seg.add_argument("--image", required=True, help="input PNG/JPEG/BMP")
    seg.add_argument("--out", required=True, help="segment map JSON path")
    seg.add_argument("--png", help="label PNG path (default: --out with .png)")
    seg.add_argument("--method", choices=["slic", "grid"])
    seg.add_argument("--segments", type=int, help="SLIC target segment count")
    seg.add_argument("--compactness", type=float)
    seg.add_argument("--iterations", type=int)
    seg.add_argument("--rows", type=int, help="grid rows (grid method)")
    seg.add_argument("--cols", type=int, help="grid cols (grid method)")
    seg.add_argument("--seed", type=int)
    seg.add_argument("--config", help="JSON file with defaults for any flag")
    seg.add_argument("--json", action="store_true", help="machine-readable stdout")

    exp = sub.add_parser("explain", help="explain one prediction with a surrogate fit")
    exp.add_argument("--image", required=True)
    exp.add_argument("--model", required=True, help="oracle:<map>:<seg> | tinycnn:<spec> | proc:<cmd> | http:<url>")
    exp.add_argument("--out", required=True, help="explanation JSON path")
    exp.add_argument("--overlay", help="overlay PNG path")
    exp.add_argument("--samples", type=int)
    exp.add_argument("--seed", type=int)
    exp.add_argument("--sigma", type=float, help="locality kernel width")
    exp.add_argument("--lambda", dest="ridge_lambda", type=float, help="ridge penalty")
    exp.add_argument("--top-k", dest="top_k", type=int)
    exp.add_argument("--method", choices=["slic", "grid"])
    exp.add_argument("--segments", type=int)
    exp.add_argument("--compactness", type=float)
    exp.add_argument("--iterations", type=int)
    exp.add_argument("--rows", type=int)
    exp.add_argument("--cols", type=int)
    exp.add_argument("--fusion", choices=["segment-mean", "fixed-color"])
    exp.add_argument("--fixed-color", dest="fixed_color", help="R,G,B in [0,1] for fixed-color fusion")
    exp.add_argument("--target-class", dest="target_class", type=int, help="class id to explain")
    exp.add_argument("--workers", type=int, help="parallel model-query threads")
    exp.add_argument("--config")
    exp.add_argument("--json", action="store_true")

    ev = sub.add_parser("evaluate", help="metrics report from a prediction log")
    ev.add_argument("--log", required=True, help="JSON Lines prediction log")
    ev.add_argument("--manifest", required=True, help="dataset manifest JSON")
    ev.add_argument("--model-id", dest="model_id")
    ev.add_argument("--split", choices=["train", "valid", "test"])
    ev.add_argument("--out", help="report JSON path")
    ev.add_argument("--config")
    ev.add_argument("--json", action="store_true")
    return parser


def _merge_config(args: argparse.Namespace, command: str) -> argparse.Namespace:
    """Resolve each optional value as flag > config file > default.

    store_true flags count as "not passed" while still False, so a config
    file may switch them on.
    """
    config = {}
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = read_json(config_path)
        if not isinstance(loaded, dict):
            raise ContractError(f"config file {config_path} must hold a JSON object")
        config = loaded
    for key, fallback in _DEFAULTS[command].items():
        current = getattr(args, key, None)
        if current is None or current is False:
            setattr(args, key, config.get(key, fallback))
    return args


def _parse_fixed_color(text) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        parts = [float(v) for v in text]
    else:
        parts = [float(v) for v in str(text).split(",")]
    if len(parts) != 3:
        raise ContractError(f"fixed color needs three channels, got {text!r}")
    return (parts[0], parts[1], parts[2])


def _print(args, human: str, payload: dict) -> None:
    if args.json:
        sys.stdout.write(canonical_json(payload))
    else:
        sys.stdout.write(human)


def _make_segment_map(args: argparse.Namespace, image):
    if args.method == "grid":
        return segment_grid(image, args.rows, args.cols)
    params = SegmentationParams(
        target_segments=args.segments,
        compactness=args.compactness,
        max_iterations=args.iterations,
        seed=args.seed,
    )
    return segment_slic(image, params)


def cmd_segment(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    segment_map = _make_segment_map(args, image)
    out = Path(args.out)
    segment_map.save(out)
    png = Path(args.png) if args.png else out.with_suffix(".png")
    segment_map.save_label_png(png)
    _print(
        args,
        f"wrote {segment_map.n_segments} segments to {out} and {png}\n",
        {"map": str(out), "png": str(png), "n_segments": segment_map.n_segments},
    )
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    explainer = LocalSurrogateExplainer(
        n_samples=args.samples,
        kernel_width=args.sigma,
        ridge_lambda=args.ridge_lambda,
        top_k=args.top_k,
        segmenter=args.method,
        n_segments=args.segments,
        compactness=args.compactness,
        max_iterations=args.iterations,
        grid_rows=args.rows,
        grid_cols=args.cols,
        fusion_mode=args.fusion,
        fixed_color=_parse_fixed_color(args.fixed_color),
        seed=args.seed,
        workers=args.workers,
    )
    model = model_from_spec(args.model, reference=image)
    try:
        target = None
        if args.target_class is not None:
            names = model.class_names
            if not 0 <= args.target_class < len(names):
                raise ContractError(f"target class {args.target_class} out of range")
            target = ClassLabel(args.target_class, names[args.target_class])
        explainer.fit(image, model, target_class=target)
    finally:
        if isinstance(model, ProcessAdapter):
            model.close()
    explanation = explainer.explanation_

    out = Path(args.out)
    atomic_write_text(out, canonical_json(explanation.to_json_dict()))
    overlay_path = None
    if args.overlay:
        overlay_path = Path(args.overlay)
        rendered = render_overlay(image, explainer.segments_, explanation, args.top_k)
        save_image(rendered, overlay_path)

    payload = explanation.to_json_dict()
    payload["out"] = str(out)
    if overlay_path:
        payload["overlay"] = str(overlay_path)
    _print(args, explanation.render_text(), payload)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    records = read_prediction_log(args.log, classes=manifest.classes)
    report = misclassification_report(records, manifest, model_id=args.model_id, split=args.split)
    if args.out:
        report.save(args.out)
    _print(args, report.render_text(), report.to_json_dict())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, args.command)
        if args.command == "segment":
            return cmd_segment(args)
        if args.command == "explain":
            return cmd_explain(args)
        return cmd_evaluate(args)
    except (ModelTransportError, ModelProtocolError, ModelValidationError, BatchPredictionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (LimescopeError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
