"""Command-line surface: single attacks, batch evaluation reports, image
quality metrics, colorfulness histograms, the chroma-subsampling defense,
and toy-model training.

Exit codes: 0 success, 2 usage/format error, 3 attack failed, 4 internal
numeric failure.  Every command is deterministic under a fixed --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .core import FormatError, NumericError, Rng, UsageError, derive_seed
from . import attack as atk
from . import colorspace as cs
from . import datasets
from . import io_media
from . import metrics as metrics_mod
from . import model as model_mod

__all__ = ["main", "build_parser", "read_manifest", "evaluate_grid"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ATTACK_FAILED = 3
EXIT_NUMERIC = 4

_METRIC_KEYS = ("ssim", "ms_ssim", "one_minus_ssim", "one_minus_ms_ssim",
                "l0", "l2", "linf", "colorfulness_benign")
_SUMMARY_MEANS = ("one_minus_ssim", "one_minus_ms_ssim", "l0", "l2", "linf")


def _fmt(v) -> str:
    """Stable text form for report cells (reports must diff byte-identically)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_list(text: str, convert):
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    if not items:
        raise UsageError(f"empty list argument {text!r}")
    return [convert(t) for t in items]


def read_manifest(path, num_classes: int):
    """Rows of (image_path, true_class, target_class); validates each line."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image_path", "true_class", "target_class"]:
            raise FormatError(f"{path}: line 1: expected header "
                              "'image_path,true_class,target_class'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            img_path = row[0].strip()
            try:
                true_class, target_class = int(row[1]), int(row[2])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: classes must be integers") from None
            if target_class == true_class:
                raise FormatError(f"{path}: line {lineno}: target_class equals true_class")
            for name, value in (("true_class", true_class), ("target_class", target_class)):
                if not 0 <= value < num_classes:
                    raise FormatError(f"{path}: line {lineno}: {name} {value} outside "
                                      f"[0, {num_classes})")
            rows.append((img_path, true_class, target_class))
    if not rows:
        raise FormatError(f"{path}: manifest has no data rows")
    return rows


def cmd_attack(args) -> int:
    model = model_mod.load_weights(args.model)
    image = io_media.read_image(args.image)
    cfg = atk.AttackConfig(mode=args.mode, restricted=args.restricted,
                           kappa=args.kappa, max_iters=args.max_iters,
                           lr=args.lr, init_scale=args.init_scale, seed=args.seed)
    result = atk.run_attack(image, args.target, model, cfg)
    io_media.write_image(result.adversarial, args.out)
    sidecar = {
        "success": result.success,
        "iterations": result.iterations_used,
        "final_loss": result.final_loss,
        "logits": [float(v) for v in result.final_logits],
        "metrics": result.metrics,
    }
    with open(str(args.out) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    print(f"success={_fmt(result.success)} iterations={result.iterations_used} "
          f"final_loss={_fmt(result.final_loss)}")
    return EXIT_OK if result.success else EXIT_ATTACK_FAILED


def evaluate_grid(model, images, rows, modes, kappas, restrictions, seed,
                  max_iters=500, lr=0.01, init_scale=0.01):
    """Run the full settings grid.

    Returns (per_image_rows, summary_rows, attack_results) with the results
    list aligned to the per-image rows.  Per-attack seeds derive from
    (seed, channel mode, row index) only: kappa and the subpixel
    restriction deliberately do not enter, so matched cells share flow
    initializations and the kappa=0 run of an image succeeds whenever its
    kappa=10 run does (identical trajectory prefix).  Any cell subset
    reproduces the exact same attacks.
    """
    per_image = []
    summary = []
    kept = []
    cells = [(m, k, r) for m in modes for k in kappas for r in restrictions]
    for mode, kappa, restricted in cells:
        results = []
        for row_idx, (img, (img_path, true_class, target_class)) in enumerate(zip(images, rows)):
            cfg = atk.AttackConfig(mode=mode, restricted=restricted, kappa=kappa,
                                   max_iters=max_iters, lr=lr, init_scale=init_scale,
                                   seed=derive_seed(seed, atk.MODES.index(mode), row_idx))
            result = atk.run_attack(img, target_class, model, cfg)
            results.append(result)
            per_image.append({
                "mode": mode, "kappa": kappa, "restricted": restricted,
                "image_path": img_path, "true_class": true_class,
                "target_class": target_class, "success": result.success,
                "iterations": result.iterations_used,
                "final_loss": result.final_loss,
                **{k: result.metrics[k] for k in _METRIC_KEYS},
            })
        wins = [r for r in results if r.success]
        cell = {
            "mode": mode, "kappa": kappa, "restricted": restricted,
            "images": len(results), "successes": len(wins),
            "success_rate": len(wins) / len(results),
            "mean_iterations": (np.mean([r.iterations_used for r in wins]) if wins else ""),
        }
        for key in _SUMMARY_MEANS:
            cell["mean_" + key] = (np.mean([r.metrics[key] for r in wins]) if wins else "")
        summary.append(cell)
        kept.extend(results)
    return per_image, summary, kept


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])


def cmd_evaluate(args) -> int:
    model = model_mod.load_weights(args.model)
    rows = read_manifest(args.manifest, model.num_classes)
    modes = _parse_list(args.modes, str)
    for m in modes:
        if m not in atk.MODES:
            raise UsageError(f"unknown mode {m!r}; choose from {', '.join(atk.MODES)}")
    kappas = _parse_list(args.kappas, float)
    restrictions = _parse_list(args.restricted, _parse_bool)
    images = [io_media.read_image(p) for p, _, _ in rows]

    per_image, summary, _ = evaluate_grid(model, images, rows, modes, kappas,
                                          restrictions, args.seed,
                                          max_iters=args.max_iters, lr=args.lr,
                                          init_scale=args.init_scale)
    os.makedirs(args.out_dir, exist_ok=True)
    per_image_fields = ["mode", "kappa", "restricted", "image_path", "true_class",
                        "target_class", "success", "iterations", "final_loss",
                        *_METRIC_KEYS]
    summary_fields = ["mode", "kappa", "restricted", "images", "successes",
                      "success_rate", "mean_iterations",
                      *("mean_" + k for k in _SUMMARY_MEANS)]
    _write_csv(os.path.join(args.out_dir, "per_image.csv"), per_image_fields, per_image)
    _write_csv(os.path.join(args.out_dir, "summary.csv"), summary_fields, summary)

    print(f"{'mode':>6} {'kappa':>6} {'restricted':>10} {'success':>8} {'rate':>7}")
    for cell in summary:
        print(f"{cell['mode']:>6} {_fmt(cell['kappa']):>6} {_fmt(cell['restricted']):>10} "
              f"{cell['successes']:>4}/{cell['images']:<3} {_fmt(cell['success_rate']):>7}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = io_media.read_image(args.ref)
    test = io_media.read_image(args.test)
    report = metrics_mod.measure(ref, test)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _image_files(directory):
    try:
        names = sorted(os.listdir(directory))
    except FileNotFoundError:
        raise UsageError(f"{directory}: no such directory") from None
    return [os.path.join(directory, n) for n in names
            if n.lower().endswith((".ppm", ".png"))]


def cmd_colorhist(args) -> int:
    files = _image_files(args.dir)
    if not files:
        raise UsageError(f"{args.dir}: no .ppm/.png images found")
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    values = np.array([metrics_mod.colorfulness(io_media.read_image(p)) for p in files])
    hi = float(values.max()) if values.max() > 0 else 1.0
    counts, edges = np.histogram(values, bins=args.bins, range=(0.0, hi))
    _write_csv(args.out, ["bin_lo", "bin_hi", "count"],
               [{"bin_lo": edges[i], "bin_hi": edges[i + 1], "count": int(counts[i])}
                for i in range(args.bins)])

    if args.report:
        curve = _exclusion_curve(args.report, edges)
        out = args.curve_out or (str(args.out).rsplit(".", 1)[0] + "_curve.csv")
        _write_csv(out, ["mode", "kappa", "restricted", "threshold", "images",
                         "successes", "success_rate"], curve)
    print(f"histogram over {len(files)} images -> {args.out}")
    return EXIT_OK


def _exclusion_curve(report_path, edges):
    """Success rate per settings cell after excluding images whose benign
    colorfulness falls below each threshold."""
    with open(report_path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"mode", "kappa", "restricted", "success", "colorfulness_benign"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise FormatError(f"{report_path}: expected a per-image report with "
                              f"columns {sorted(needed)}")
        rows = list(reader)
    if not rows:
        raise FormatError(f"{report_path}: report has no rows")
    cells = sorted({(r["mode"], r["kappa"], r["restricted"]) for r in rows})
    curve = []
    for mode, kappa, restricted in cells:
        members = [r for r in rows if (r["mode"], r["kappa"], r["restricted"])
                   == (mode, kappa, restricted)]
        for threshold in edges[:-1]:
            kept = [r for r in members if float(r["colorfulness_benign"]) >= threshold]
            wins = sum(1 for r in kept if r["success"] == "true")
            curve.append({
                "mode": mode, "kappa": kappa, "restricted": restricted,
                "threshold": float(threshold), "images": len(kept),
                "successes": wins,
                "success_rate": (wins / len(kept)) if kept else "",
            })
    return curve


def cmd_defend(args) -> int:
    image = io_media.read_image(args.image)
    defended = io_media.chroma_subsample_420(image, args.space)
    io_media.write_image(defended, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    rng = Rng(args.seed)
    if args.synthetic:
        images, labels = datasets.synthetic_dataset(rng, per_class=args.per_class)
    elif args.data:
        images, labels = datasets.load_ppm_directory(args.data)
    else:
        raise UsageError("pass --synthetic or --data DIR")
    num_classes = int(labels.max()) + 1
    arch = [dict(spec) for spec in model_mod.REFERENCE_ARCH]
    arch[-1]["out_features"] = num_classes
    model = model_mod.init_model(arch, images.shape[1:], rng)
    model = model_mod.train_toy(model, images, labels, args.epochs, args.lr, rng)
    model_mod.save_weights(model, args.out)
    acc = model_mod.accuracy(model, images, labels)
    print(f"train_accuracy={_fmt(acc)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromawarp",
        description="Chrominance spatial-warp adversarial attacks and measurement tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one image")
    p.add_argument("--image", required=True)
    p.add_argument("--target", required=True, type=int)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", default="ycbcr", choices=atk.MODES)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--restricted", type=_parse_bool, default=False)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="grid evaluation over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--modes", default="ycbcr,lab,rgb")
    p.add_argument("--kappas", default="0")
    p.add_argument("--restricted", default="false")
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("metrics", help="distortion metrics between two images")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("colorhist", help="colorfulness histogram over a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="per-image evaluation CSV for the exclusion curve")
    p.add_argument("--curve-out")
    p.set_defaults(func=cmd_colorhist)

    p = sub.add_parser("defend", help="4:2:0 chroma subsampling defense")
    p.add_argument("--image", required=True)
    p.add_argument("--space", default="ycbcr", choices=(cs.YCBCR, cs.LAB))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("train", help="train the reference CNN")
    p.add_argument("--data", help="directory of <class_index>/<name>.ppm")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
