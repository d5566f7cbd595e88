"""Command-line surface.

Subcommands: calibrate, simulate, train, translate, composite, eval, swap.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import calibrate as cal
from . import imgio, metrics, pipesim, training, weights_io
from .compositing import RenderedObject, composite_object
from .errors import ContractViolation, DataError, NumericalFailure


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parse_rgb(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected R,G,B, got {text!r}")
    return np.array([float(p) for p in parts])


def cmd_calibrate(args) -> int:
    patches = cal.read_patch_file(args.patches)
    patches.black_level = _parse_rgb(args.black)
    matrix, rms = cal.fit_color_matrix(patches)
    cal.write_matrix_file(args.out, matrix, rms)
    print(f"fitted 3x4 matrix from {patches.raw_colors.shape[0]} patches, "
          f"rms residual {rms:.6g} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    if args.pipelines < 1:
        raise UsageError("--pipelines must be >= 1")
    raw_paths = sorted(Path(args.raw_dir).glob("*.png"))
    if not raw_paths:
        raise DataError(f"no .png canonical images in {args.raw_dir}")
    raws = [imgio.read_image_16bit(p) for p in raw_paths]
    specs = pipesim.sample_pipelines(args.pipelines, args.seed)
    pipesim.write_dataset(args.out, raws, specs)
    print(f"wrote {len(raws)} x {len(specs)} pairs to {args.out}")
    return 0


def cmd_train(args) -> int:
    try:
        fields = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read training config {args.config}: {exc}")
    known = {f.name for f in dataclasses.fields(training.TrainConfig)}
    unknown = set(fields) - known
    if unknown:
        raise UsageError(f"unknown training config fields: {sorted(unknown)}")
    config = training.TrainConfig(**fields)
    pairs, _ = pipesim.load_dataset(args.data)
    log_path = args.log if args.log else str(args.out) + ".log.csv"
    Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    Path(log_path).write_text("")  # fresh log per run; lines append during it
    result = training.train(pairs, config, log_path=log_path)
    weights_io.save_weights(args.out, result.pair)
    last = result.history[-1]
    print(f"trained {config.steps} steps; best step {result.best_step}; "
          f"final val PSNR r2j/j2r/cycle = {last[2]:.2f}/{last[3]:.2f}/"
          f"{last[4]:.2f} dB; weights -> {args.out}; log -> {log_path}")
    return 0


def cmd_translate(args) -> int:
    pair = weights_io.load_weights(args.weights)
    if args.direction == "jpeg2raw":
        img = imgio.read_image_8bit(args.infile)
        raw_pred, _ = pair.jpeg_to_raw(img)
        imgio.write_image_16bit(args.out, raw_pred)
    elif args.direction == "cycle":
        img = imgio.read_image_8bit(args.infile)
        imgio.write_image_8bit(args.out, metrics.cycle_predict(img, pair))
    else:  # raw2jpeg
        img = imgio.read_image_16bit(args.infile)
        shared = None
        if pair.sharing is not None:
            if not args.condition:
                raise UsageError(
                    "raw2jpeg with feature sharing needs --condition PHOTO "
                    "(or --condition self)")
            cond = img if args.condition == "self" \
                else imgio.read_image_8bit(args.condition)
            _, shared = pair.jpeg_to_raw(cond)
        imgio.write_image_8bit(args.out, pair.raw_to_jpeg(img, shared))
    print(f"{args.direction}: {args.infile} -> {args.out}")
    return 0


def cmd_composite(args) -> int:
    photo = imgio.read_image_8bit(args.photo)
    obj = RenderedObject(rgb=imgio.read_image_16bit(args.object),
                         mask=imgio.read_mask_8bit(args.mask))
    if photo.shape != obj.rgb.shape:
        raise DataError(f"photo {photo.shape[:2]} and object "
                        f"{obj.rgb.shape[:2]} sizes differ")
    pair = weights_io.load_weights(args.weights)
    result = composite_object(photo, obj, pair)
    imgio.write_image_8bit(args.out, result.final)
    if args.dump_intermediates:
        dump = Path(args.dump_intermediates)
        imgio.write_image_16bit(dump / "raw_pred.png", result.raw_pred)
        imgio.write_image_16bit(dump / "blended_raw.png", result.blended_raw)
        imgio.write_image_8bit(dump / "jpeg_pred.png", result.jpeg_pred)
    print(f"composited -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    pair = weights_io.load_weights(args.weights)
    samples, _ = pipesim.load_dataset(args.data)
    reports = metrics.evaluate_pairs(pair, samples)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(metrics.reports_to_csv(reports))
    print(metrics.reports_to_table(reports), end="")
    return 0


def cmd_swap(args) -> int:
    pair = weights_io.load_weights(args.weights)
    img_a = imgio.read_image_8bit(args.a)
    img_b = imgio.read_image_8bit(args.b)
    if img_a.shape != img_b.shape:
        raise DataError(f"images differ in size: {img_a.shape} vs {img_b.shape}")
    pred_a, pred_b = metrics.feature_swap(img_a, img_b, pair)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imgio.write_image_8bit(out / "a_with_b_features.png", pred_a)
    imgio.write_image_8bit(out / "b_with_a_features.png", pred_b)
    print(f"feature-swapped predictions -> {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="camcolor",
                     description="Learned camera color pipeline translation "
                                 "and object compositing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit a camera->canonical color matrix")
    p.add_argument("--patches", required=True, help="plain-text patch table")
    p.add_argument("--black", default="0,0,0", help="black level R,G,B")
    p.add_argument("--out", required=True, help="matrix file to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="render canonical images through "
                                        "sampled pipelines")
    p.add_argument("--raw-dir", required=True)
    p.add_argument("--pipelines", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the translator pair")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", required=True, help="JSON file of TrainConfig fields")
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--log", default=None, help="metrics log path "
                                               "(default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="run one translation direction")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--direction", required=True,
                   choices=["raw2jpeg", "jpeg2raw", "cycle"])
    p.add_argument("--condition", default=None,
                   help="photo supplying shared features for raw2jpeg, "
                        "or 'self'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("composite", help="composite an object into a photo")
    p.add_argument("--weights", required=True)
    p.add_argument("--photo", required=True, help="8-bit photo")
    p.add_argument("--object", required=True, help="16-bit canonical object rgb")
    p.add_argument("--mask", required=True, help="8-bit grayscale mask")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-intermediates", default=None, metavar="DIR")
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("eval", help="PSNR/deltaE table over a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("swap", help="swap shared features between two photos")
    p.add_argument("--weights", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_swap)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ContractViolation, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
