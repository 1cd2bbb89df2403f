"""Command line driver: ``trussketch analyze`` and ``trussketch synth``."""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from . import annotator, pipeline, raster, synth, trussmodel
from .config import ConfigError, load_config
from .trussmodel import CorrectionError, ModelError, dumps

EXIT_OK, EXIT_FAIL, EXIT_ISSUES = 0, 1, 2

_SCALE_RE = re.compile(r"^\s*(\d+)\s*,\s*(\d+)\s*=\s*([0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s*$")


def parse_scale(text: str) -> tuple[int, int, float]:
    """``"I,J=M"`` -> (I, J, M)."""
    m = _SCALE_RE.match(text or "")
    if not m:
        raise argparse.ArgumentTypeError(f"bad --scale {text!r}, expected I,J=METERS")
    return int(m.group(1)), int(m.group(2)), float(m.group(3))


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_FAIL


def _print_issues(issues, status: str) -> None:
    for i in issues:
        line = f"{i.severity}: {i.code} [{i.subject}] {i.message}"
        if i.remedy:
            line += f"\n    fix: {i.remedy}"
        print(line, file=sys.stderr)
    sys.stdout.write(dumps({"status": status, "issues": [i.to_dict() for i in issues]}))


def cmd_analyze(args) -> int:
    image = Path(args.image)
    if not image.is_file():
        return _fail(f"no such image: {image}")
    try:
        cfg = load_config(args.config)
        corrections = trussmodel.load_corrections(args.corrections) if args.corrections else []
        gray = raster.load_image(image)
    except (ConfigError, CorrectionError, raster.RasterError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))

    try:
        analysis = pipeline.analyze(gray, cfg, corrections, args.scale)
    except (CorrectionError, ModelError) as exc:
        return _fail(str(exc))

    out_png = Path(args.out) if args.out else image.with_name(image.stem + "_overlay.png")
    out_json = Path(args.model) if args.model else image.with_name(image.stem + "_model.json")
    try:
        overlay = annotator.render_overlay(gray, analysis.model, analysis.result)
        annotator.save_png(overlay, out_png)
        annotator.write_results(out_json, analysis.model, analysis.result, analysis.issues)
        if args.debug_masks:
            _write_stages(Path(args.debug_masks), analysis.stages)
        if args.report and analysis.result is not None:
            _write_report(Path(args.report), analysis)
    except OSError as exc:
        return _fail(str(exc))

    status = "solved" if analysis.ok else "needs-corrections"
    _print_issues(analysis.issues, status)
    return EXIT_OK if analysis.ok else EXIT_ISSUES


def _write_stages(folder: Path, stages: dict) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    names = []
    for k, (name, mask) in enumerate(stages.items(), start=1):
        raster.save_binary(mask, folder / f"stage-{k}.png")
        names.append({"file": f"stage-{k}.png", "stage": name})
    (folder / "stages.json").write_text(dumps({"stages": names}), encoding="utf-8")


def _write_report(folder: Path, analysis) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    (folder / "forces.csv").write_text(annotator.forces_table(analysis.model, analysis.result), encoding="utf-8")
    annotator.report_figure(analysis.model, analysis.result, folder / "forces.png")


def cmd_synth(args) -> int:
    params = synth.RenderParams()
    try:
        if args.model:
            model = trussmodel.load_model(args.model)
            sketch = synth.render_sketch(model, params, args.seed)
        elif args.random:
            model, sketch = synth.random_sketch_model(args.seed, args.joints, params)
        else:
            return _fail("synth needs --random or --model")
    except (ModelError, synth.LayoutError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    try:
        raster.save_gray(sketch.gray, args.out_image)
        trussmodel.save_model(model, args.out_truth)
    except OSError as exc:
        return _fail(str(exc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trussketch", description="Planar truss sketches to member forces.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="read a sketch, solve it, overlay the forces")
    a.add_argument("image")
    a.add_argument("--out", help="overlay PNG (default: <image>_overlay.png)")
    a.add_argument("--model", help="model JSON with results (default: <image>_model.json)")
    a.add_argument("--config", help="JSON settings file (else $TRUSSKETCH_CONFIG, else defaults)")
    a.add_argument("--corrections", help="JSON corrections file")
    a.add_argument("--scale", type=parse_scale, help="reference length I,J=METERS between nodes I and J")
    a.add_argument("--debug-masks", metavar="DIR", help="write per-stage masks as stage-N.png")
    a.add_argument("--report", metavar="DIR", help="write forces.csv and a forces.png figure")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="render a sketch from a model or a random truss")
    s.add_argument("--random", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--joints", type=int)
    s.add_argument("--model", help="model JSON with pixel positions")
    s.add_argument("--out-image", required=True)
    s.add_argument("--out-truth", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # internal error: report it, exit 1
        return _fail(f"internal error: {exc!r}")


if __name__ == "__main__":
    sys.exit(main())
