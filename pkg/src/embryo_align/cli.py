"""Command-line interface.

Exit codes: 0 success, 1 I/O or file-content failure, 2 usage/validation
error, 3 alignment Failure (no candidate selected; diagnostics still
written when requested).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import kernels
from .errors import AlignError, ArgumentError, ParseError
from .evaluation import build_report, render_table, report_to_dict
from .forest import load_model, save_model
from .nrrd_io import read_volume, write_volume
from .phantom import build_phantom_atlases, generate_dataset
from .pipeline import (
    align_image,
    evaluate_dataset,
    selectors_needed,
    train_from_dataset,
)
from .render import render_planes, write_pgm
from .selectors import load_atlases
from .volume import Mask3D, Volume3D

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_FAILURE = 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _week_range(text: str) -> tuple[int, int]:
    try:
        first, _, last = text.partition("-")
        lo, hi = int(first), int(last if last else first)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad week range {text!r}")
    if lo > hi or lo < 7 or hi > 12:
        raise argparse.ArgumentTypeError(
            f"weeks must satisfy 7 <= A <= B <= 12, got {text!r}")
    return lo, hi


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embryo-align",
        description="Align embryo-like volumes into standard orientation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument("--threads", type=_positive_int, default=None,
                       help="worker threads (default: ALIGN_THREADS or all cores)")

    p = sub.add_parser("gen-phantoms", help="generate a phantom dataset")
    p.add_argument("--count", type=_positive_int, required=True,
                   help="samples per week")
    p.add_argument("--weeks", type=_week_range, required=True,
                   help="inclusive week range A-B within 7..12")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", type=_non_negative_float, default=0.0)
    add_threads(p)

    p = sub.add_parser("gen-atlases", help="build the phantom atlas directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    add_threads(p)

    p = sub.add_parser("align", help="align one image/mask pair")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--method", required=True,
                   choices=["default", "pearson", "atlas", "forest", "majority"])
    p.add_argument("--out", required=True,
                   help="path for the selected aligned candidate (NRRD)")
    p.add_argument("--atlas-dir")
    p.add_argument("--model")
    p.add_argument("--emit-planes", metavar="DIR",
                   help="also write mid-plane PGM renders of the result")
    p.add_argument("--emit-json", metavar="PATH",
                   help="write a diagnostic JSON with rotations and verdicts")
    add_threads(p)

    p = sub.add_parser("train-forest", help="train the selector forest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    add_threads(p)

    p = sub.add_parser("evaluate", help="evaluate methods on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--atlas-dir")
    p.add_argument("--model")
    p.add_argument("--methods", default="default,pearson,atlas,forest,majority")
    p.add_argument("--report", required=True)
    p.add_argument("--tolerance", type=_non_negative_float, default=15.0)
    add_threads(p)

    p = sub.add_parser("render-planes", help="render mid-plane PGMs")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    add_threads(p)

    return parser


def _apply_threads(args) -> None:
    n = args.threads
    if n is None:
        env = os.environ.get("ALIGN_THREADS", "")
        if env:
            try:
                n = int(env)
            except ValueError as e:
                raise ArgumentError(f"bad ALIGN_THREADS value {env!r}") from e
            if n < 1:
                raise ArgumentError("ALIGN_THREADS must be >= 1")
    if n is None:
        n = os.cpu_count() or 1
    kernels.set_threads(n)


def _load_resources(method_or_methods, atlas_dir, model_path):
    needed = set()
    methods = (method_or_methods if isinstance(method_or_methods, list)
               else [method_or_methods])
    for m in methods:
        needed |= selectors_needed(m)
    atlases = None
    model = None
    if "atlas" in needed:
        if not atlas_dir:
            raise ArgumentError(f"method(s) {','.join(methods)} require --atlas-dir")
        atlases = load_atlases(atlas_dir)
    if "forest" in needed:
        if not model_path:
            raise ArgumentError(f"method(s) {','.join(methods)} require --model")
        model = load_model(model_path)
    return atlases, model


def _read_pair(image_path, mask_path):
    image = read_volume(image_path)
    mask = read_volume(mask_path)
    if not isinstance(image, Volume3D):
        raise ArgumentError(f"{image_path} is a mask file, expected intensities")
    if not isinstance(mask, Mask3D):
        raise ArgumentError(f"{mask_path} is not a mask file")
    return image, mask


def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _cmd_gen_phantoms(args) -> int:
    lo, hi = args.weeks
    generate_dataset(args.count, range(lo, hi + 1), args.seed, args.out,
                     noise_sigma=args.noise)
    return EXIT_OK


def _cmd_gen_atlases(args) -> int:
    build_phantom_atlases(args.out, args.seed)
    return EXIT_OK


def _cmd_align(args) -> int:
    atlases, model = _load_resources(args.method, args.atlas_dir, args.model)
    image, mask = _read_pair(args.image, args.mask)
    cset, chosen, verdicts = align_image(image, mask, args.method,
                                         atlases, model)
    if args.emit_json:
        doc = {
            "image": str(args.image),
            "mask": str(args.mask),
            "rotations": [[float(v) for v in r.ravel()]
                          for r in cset.rotations],
            "verdicts": [
                {"selector": v.selector, "choice": v.choice,
                 "scores": list(v.scores)}
                for _, v in sorted(verdicts.items())
            ],
            "final": chosen,
            "failure": chosen is None,
        }
        _write_json(args.emit_json, doc)
    if chosen is None:
        print("alignment failure: no candidate selected", file=sys.stderr)
        return EXIT_FAILURE
    aligned = cset.volumes[chosen]
    write_volume(args.out, aligned)
    if args.emit_planes:
        out_dir = Path(args.emit_planes)
        out_dir.mkdir(parents=True, exist_ok=True)
        sagittal, coronal = render_planes(aligned)
        write_pgm(out_dir / "mid_sagittal.pgm", sagittal)
        write_pgm(out_dir / "mid_coronal.pgm", coronal)
    print(f"selected candidate {chosen}", file=sys.stderr)
    return EXIT_OK


def _cmd_train_forest(args) -> int:
    if not (Path(args.dataset) / "manifest.json").is_file():
        raise ArgumentError(f"{args.dataset} has no manifest.json")
    model, info = train_from_dataset(args.dataset, n_trees=args.trees,
                                     seed=args.seed)
    save_model(args.out, model)
    print(f"trained {args.trees} trees on {info['n_training_rows']} rows "
          f"from {info['n_images']} images ({info['n_skipped']} skipped); "
          f"training selection accuracy "
          f"{info['training_selection_accuracy']:.4f}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ArgumentError("no methods requested")
    atlases, model = _load_resources(methods, args.atlas_dir, args.model)
    results = evaluate_dataset(args.dataset, methods, atlases, model,
                               tolerance_deg=args.tolerance)
    report = build_report(results)
    _write_json(args.report, report_to_dict(report))
    sys.stdout.write(render_table(report))
    return EXIT_OK


def _cmd_render_planes(args) -> int:
    vol = read_volume(args.image)
    if isinstance(vol, Mask3D):
        vol = Volume3D._wrap_trusted(vol.data.astype("float32"), vol.spacing)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sagittal, coronal = render_planes(vol)
    write_pgm(out_dir / "mid_sagittal.pgm", sagittal)
    write_pgm(out_dir / "mid_coronal.pgm", coronal)
    return EXIT_OK


_COMMANDS = {
    "gen-phantoms": _cmd_gen_phantoms,
    "gen-atlases": _cmd_gen_atlases,
    "align": _cmd_align,
    "train-forest": _cmd_train_forest,
    "evaluate": _cmd_evaluate,
    "render-planes": _cmd_render_planes,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        _apply_threads(args)
        return _COMMANDS[args.command](args)
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except AlignError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
