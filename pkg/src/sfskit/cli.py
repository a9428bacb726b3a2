"""Command-line interface.

All numeric imports happen inside the command handlers: SFSKIT_THREADS must
be applied to the BLAS thread-count variables before numpy first loads, or
the setting silently does nothing. Keep this module free of top-level
imports of numpy or of any sfskit module that uses it.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

logger = logging.getLogger(__name__)

_THREAD_ENV_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

# Kept in sync with datagen.FAMILIES / trainer.PARADIGMS (asserted in tests);
# importing those here would pull in numpy before the thread setup runs.
_FAMILY_CHOICES = ("synthetic", "pseudo-real")
_PARADIGM_CHOICES = ("skipnet-syn", "sfsnet-syn", "sfsnet-full", "skipnet-plus-full")

UNIFORM_ALBEDO = 0.75


class CliError(Exception):
    """User-facing failure; message printed, exit code 1."""


def apply_thread_env() -> None:
    """Propagate SFSKIT_THREADS to the BLAS pools; 0 means single-threaded."""
    raw = os.environ.get("SFSKIT_THREADS")
    if raw is None:
        return
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"SFSKIT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise CliError(f"SFSKIT_THREADS must be >= 0, got {n}")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(max(n, 1))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(path):
    from . import nets

    path = Path(path)
    if not path.exists():
        raise CliError(f"model checkpoint not found: {path}")
    if not Path(str(path) + ".json").exists():
        raise CliError(f"model sidecar not found: {path}.json")
    model, _ = nets.load_model(path)
    return model


def _load_image(path):
    from . import io
    from .types import ColorMap

    path = Path(path)
    if not path.exists():
        raise CliError(f"image not found: {path}")
    if path.suffix == ".fmap":
        arr = io.read_fmap(path)
        if arr.shape[2] != 3:
            raise CliError(f"{path}: image FMAP must have 3 channels, got {arr.shape[2]}")
    else:
        arr = io.load_png(path)
    return ColorMap(arr, role="image")


def _load_mask_file(path):
    from . import io
    from .types import Mask

    path = Path(path)
    if not path.exists():
        raise CliError(f"mask not found: {path}")
    if path.suffix == ".fmap":
        return io.read_mask_fmap(path)
    return Mask(io.load_png(path)[:, :, 0] > 0.5)


def _load_decomposition(dirpath):
    from . import io
    from .types import ColorMap, Decomposition, VectorFieldMap

    d = Path(dirpath)
    for name in ("normal.fmap", "albedo.fmap", "mask.fmap", "light.json"):
        if not (d / name).exists():
            raise CliError(f"decomposition file not found: {d / name}")
    return Decomposition(
        normal=VectorFieldMap(io.read_fmap(d / "normal.fmap"), role="normal"),
        albedo=ColorMap(io.read_fmap(d / "albedo.fmap"), role="albedo"),
        light=io.load_light(d / "light.json"),
        mask=io.read_mask_fmap(d / "mask.fmap"),
    )


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    from . import datagen

    out = _outdir(args)
    samples = datagen.make_dataset(
        args.n, args.seed, args.family, args.noise_sigma, size=args.size
    )
    datagen.save_dataset(samples, out)
    print(f"wrote {len(samples)} {args.family} samples to {out}")
    return 0


def cmd_train(args) -> int:
    from . import reporting, runconfig, trainer
    from dataclasses import replace

    rc = runconfig.load_run_config(args.config, args.set)
    out = _outdir(args)
    runconfig.write_resolved_config(rc, out / "config.ini")
    cfg = replace(rc.train, checkpoint_dir=str(out / "checkpoints"))

    report = trainer.run_paradigm(
        args.paradigm,
        cfg,
        rc.net,
        n_synthetic=rc.data.n_synthetic,
        n_pseudo_real=rc.data.n_pseudo_real,
        n_holdout=rc.data.n_holdout,
        bench_shapes=rc.data.bench_shapes,
        bench_train_shapes=rc.data.bench_train_shapes,
        data_seed=rc.data.data_seed,
        noise_sigma=rc.data.noise_sigma,
        workspace=args.workspace,
        save_model=out / "model.sfsckpt",
    )
    reporting.write_tables([report.row()], out)
    reporting.save_loss_curves(report.stages, out / "loss_curves.png")
    reporting.save_confusion(report.lighting.confusion, out / "confusion.png")
    _write_json(out / "report.json", reporting.report_to_dict(report))
    print(reporting.format_table([report.row()]), end="")
    return 0


def cmd_pseudo_label(args) -> int:
    from . import datagen

    model = _load_model(args.model)
    data = Path(args.data)
    if not (data / datagen.MANIFEST_NAME).exists():
        raise CliError(f"dataset manifest not found: {data / datagen.MANIFEST_NAME}")
    samples = datagen.load_dataset(data)
    labeled = datagen.pseudo_label(model, samples)
    out = _outdir(args)
    datagen.save_dataset(labeled, out)
    print(f"wrote {len(labeled)} pseudo-labeled samples to {out}")
    return 0


def cmd_decompose(args) -> int:
    from . import io, nets, shcore
    from .types import Mask

    model = _load_model(args.model)
    image = _load_image(args.image)
    if args.mask is not None:
        mask = _load_mask_file(args.mask)
        if mask.bits.shape != image.values.shape[:2]:
            raise CliError(
                f"mask {mask.bits.shape} does not match image "
                f"{image.values.shape[:2]}"
            )
    else:
        logger.warning("no --mask given; decomposing the full frame")
        mask = Mask.full(image.height, image.width)
    size = model.cfg.input_size
    if image.values.shape[:2] != (size, size):
        raise CliError(
            f"model expects {size}x{size} input, image is "
            f"{image.height}x{image.width}"
        )

    dec = nets.decompose(
        model, image.values.transpose(2, 0, 1)[None], mask.bits[None]
    )[0]
    shading = shcore.shading(dec.normal, dec.light, mask)
    recon = shcore.render(dec.normal, dec.albedo, dec.light, mask)

    out = _outdir(args)
    io.write_fmap(out / "normal.fmap", dec.normal.vectors)
    io.write_fmap(out / "albedo.fmap", dec.albedo.values)
    io.write_fmap(out / "shading.fmap", shading.values)
    io.write_fmap(out / "recon.fmap", recon.values)
    io.write_mask_fmap(out / "mask.fmap", mask)
    io.save_light(out / "light.json", dec.light, note="predicted")
    io.save_png(out / "normal.png", io.normal_to_rgb(dec.normal.vectors))
    io.save_png(out / "albedo.png", dec.albedo.values)
    io.save_png(out / "shading.png", shading.values)
    io.save_png(out / "recon.png", recon.values)
    print(f"wrote decomposition to {out}")
    return 0


def _parse_direction(text: str):
    import numpy as np

    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"--light-dir expects x,y,z, got {text!r}")
    try:
        d = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise CliError(f"--light-dir expects three numbers, got {text!r}") from None
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise CliError("--light-dir must be a nonzero vector")
    return d / norm


def cmd_relight(args) -> int:
    import numpy as np

    from . import io, shcore
    from .types import ColorMap

    dec = _load_decomposition(args.decomp_dir)
    direction = _parse_direction(args.light_dir)
    light = shcore.dir_light_to_sh(direction, args.intensity, args.ambient)
    if args.uniform_albedo:
        albedo = ColorMap(
            np.full_like(dec.albedo.values, UNIFORM_ALBEDO), role="albedo"
        )
    else:
        albedo = dec.albedo
    shading = shcore.shading(dec.normal, light, dec.mask)
    relit = shcore.render(dec.normal, albedo, light, dec.mask)

    out = _outdir(args)
    io.write_fmap(out / "relit.fmap", relit.values)
    io.write_fmap(out / "shading.fmap", shading.values)
    io.save_light(out / "light.json", light, note="relight")
    io.save_png(out / "relit.png", relit.values)
    io.save_png(out / "shading.png", shading.values)
    print(f"wrote relit image to {out}")
    return 0


def cmd_transfer_light(args) -> int:
    from . import io, photometrics

    source = _load_decomposition(args.source_dir)
    target = _load_decomposition(args.target_dir)
    image, shading = photometrics.transfer_light(source, target)

    out = _outdir(args)
    io.write_fmap(out / "transfer.fmap", image.values)
    io.write_fmap(out / "shading.fmap", shading.values)
    io.save_png(out / "transfer.png", image.values)
    io.save_png(out / "shading.png", shading.values)
    print(f"wrote light transfer to {out}")
    return 0


def _load_eval_pair(args):
    from . import datagen

    pred = datagen.load_dataset(args.pred)
    gt = datagen.load_dataset(args.gt)
    if len(pred) != len(gt):
        raise CliError(
            f"--pred has {len(pred)} samples but --gt has {len(gt)}"
        )
    if not gt:
        raise CliError("evaluation needs at least one sample")
    return pred, gt


def cmd_eval(args) -> int:
    import numpy as np

    from . import photometrics, reporting

    pred, gt = _load_eval_pair(args)
    out = _outdir(args)

    if args.task == "normals":
        degrees = np.concatenate(
            [
                photometrics.angular_errors(p.normal, g.normal, g.mask)
                for p, g in zip(pred, gt)
            ]
        )
        stats = photometrics.stats_from_degrees(degrees)
        payload = {
            "task": "normals",
            "mean_deg": stats.mean_deg,
            "std_deg": stats.std_deg,
            "pct_under_20": stats.pct_under_20,
            "pct_under_25": stats.pct_under_25,
            "pct_under_30": stats.pct_under_30,
        }
        reporting.save_error_histogram(degrees, out / "error_hist.png")
        print(
            f"normals: mean {stats.mean_deg:.2f} deg, std {stats.std_deg:.2f}, "
            f"<20/25/30 deg: {stats.pct_under_20:.2f}/"
            f"{stats.pct_under_25:.2f}/{stats.pct_under_30:.2f}%"
        )
    elif args.task == "recon":
        abs_sum = sq_sum = count = 0.0
        for p, g in zip(pred, gt):
            diff = (
                p.image.values[g.mask.bits].astype(np.float64)
                - g.image.values[g.mask.bits].astype(np.float64)
            ) * 255.0
            abs_sum += np.abs(diff).sum()
            sq_sum += (diff * diff).sum()
            count += diff.size
        if count == 0:
            raise CliError("recon evaluation: all masks are empty")
        payload = {
            "task": "recon",
            "mae": abs_sum / count,
            "rmse": float(np.sqrt(sq_sum / count)),
        }
        print(f"recon: MAE {payload['mae']:.2f}, RMSE {payload['rmse']:.2f}")
    else:  # light
        for s in gt:
            if s.light_class is None:
                raise CliError("--gt samples must carry light_class labels")
        train = [(g.light, g.light_class) for g in gt]
        test = [(p.light, g.light_class) for p, g in zip(pred, gt)]
        report = photometrics.light_classify(train, test)
        payload = {
            "task": "light",
            "top1": report.top1,
            "top2": report.top2,
            "top3": report.top3,
            "confusion": report.confusion.tolist(),
        }
        reporting.save_confusion(report.confusion, out / "confusion.png")
        print(
            f"light: top-1 {report.top1:.2f}%, top-2 {report.top2:.2f}%, "
            f"top-3 {report.top3:.2f}%"
        )

    _write_json(out / "report.json", payload)
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradchecks

    ops = args.ops.split(",") if args.ops else None
    reports = gradchecks.run_suite(
        ops=ops, seeds=args.seeds, tol=args.tol, base_seed=args.seed
    )
    failed = 0
    for name in sorted(reports):
        rep = reports[name]
        verdict = "PASS" if rep.passed else "FAIL"
        failed += not rep.passed
        print(f"{verdict} {name} (max rel err {rep.max_rel_err:.3e})")
    if failed:
        print(f"{failed} of {len(reports)} ops failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfskit",
        description="Inverse rendering of lambertian scenes: generate data, "
        "train decomposition networks, decompose, relight, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(
            name,
            help=help_text,
            description=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "Generate a procedural dataset.")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.add_argument(
        "--family", choices=_FAMILY_CHOICES, default="synthetic", help="sample family"
    )
    p.add_argument("--size", type=int, default=64, help="image side length")
    p.add_argument(
        "--noise-sigma",
        type=float,
        default=0.01,
        help="pseudo-real image noise level",
    )
    p.add_argument("--out", required=True, help="output dataset directory")

    p = add("train", cmd_train, "Run one training paradigm and its evaluation.")
    p.add_argument(
        "--paradigm", choices=_PARADIGM_CHOICES, required=True, help="training paradigm"
    )
    p.add_argument("--config", default=None, help="INI configuration file")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    p.add_argument(
        "--workspace",
        default=None,
        help="cache directory for datasets and the stage-A model, "
        "shared between paradigms",
    )
    p.add_argument("--out", required=True, help="output directory")

    p = add("pseudo-label", cmd_pseudo_label, "Label a dataset with a trained model.")
    p.add_argument("--model", required=True, help="model checkpoint (.sfsckpt)")
    p.add_argument("--data", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = add("decompose", cmd_decompose, "Decompose one image into its components.")
    p.add_argument("--model", required=True, help="model checkpoint (.sfsckpt)")
    p.add_argument("--image", required=True, help="input image (PNG or FMAP)")
    p.add_argument(
        "--mask", default=None, help="mask (FMAP or PNG); full frame if omitted"
    )
    p.add_argument("--out", required=True, help="output directory")

    p = add("relight", cmd_relight, "Re-render a decomposition under a new light.")
    p.add_argument(
        "--decomp-dir", required=True, help="directory written by decompose"
    )
    p.add_argument("--light-dir", required=True, metavar="X,Y,Z", help="light direction")
    p.add_argument("--intensity", type=float, default=0.7, help="directional intensity")
    p.add_argument("--ambient", type=float, default=0.3, help="ambient level")
    p.add_argument(
        "--uniform-albedo",
        action="store_true",
        help=f"replace the albedo with a uniform {UNIFORM_ALBEDO}",
    )
    p.add_argument("--out", required=True, help="output directory")

    p = add(
        "transfer-light",
        cmd_transfer_light,
        "Render the target decomposition under the source's light.",
    )
    p.add_argument(
        "--source-dir", required=True, help="decomposition supplying the light"
    )
    p.add_argument(
        "--target-dir", required=True, help="decomposition supplying shape and albedo"
    )
    p.add_argument("--out", required=True, help="output directory")

    p = add("eval", cmd_eval, "Compare a predicted dataset against ground truth.")
    p.add_argument(
        "--task", choices=("normals", "light", "recon"), required=True, help="metric"
    )
    p.add_argument("--pred", required=True, help="predicted dataset directory")
    p.add_argument("--gt", required=True, help="ground-truth dataset directory")
    p.add_argument("--out", required=True, help="output directory")

    p = add("gradcheck", cmd_gradcheck, "Finite-difference check of every autodiff op.")
    p.add_argument(
        "--ops", default=None, help="comma-separated op names (default: all)"
    )
    p.add_argument("--seeds", type=int, default=3, help="random shapes per op")
    p.add_argument("--tol", type=float, default=1e-5, help="relative error tolerance")
    p.add_argument("--seed", type=int, default=0, help="base seed")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        apply_thread_env()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as err:
        print(f"sfskit: error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"sfskit: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
