"""Multi-stage mixed-supervision training.

Stage A trains a supervised model on synthetic ground truth with all four
loss terms. Stage B (datagen.pseudo_label) freezes that model's outputs as
pseudo labels on the pseudo-real pool. Stage C trains a fresh network on
mixed mini-batches, each sample supervised by its own labels, with the
reconstruction term always computed against the original image.

Shuffles are derived from (seed, stage, epoch) only, so a run resumed from
an epoch-boundary checkpoint reproduces the uninterrupted trajectory
bit for bit (single-threaded).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import datagen, nets, photometrics, shcore
from .photometrics import LightClassReport, NormalErrorStats, ReconErrorStats
from .types import LossWeights, Sample

logger = logging.getLogger(__name__)

LOSS_TERMS = ("total", "recon", "normal", "albedo", "light")
_STAGE_IDS = {"a": 0, "c": 1}

PARADIGMS = ("skipnet-syn", "sfsnet-syn", "sfsnet-full", "skipnet-plus-full")


class TrainingDivergedError(RuntimeError):
    """Raised when a loss term stops being finite; carries a snapshot dict."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    batch_size: int = 16
    mix_ratio: float = 0.5
    lr: float = 1e-3
    epochs_a: int = 30
    epochs_c: int = 40
    seed: int = 0
    checkpoint_every: int = 0  # epochs between saves; 0 = final only
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError(f"mix_ratio must lie in [0, 1], got {self.mix_ratio}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if min(self.epochs_a, self.epochs_c) < 0 or self.checkpoint_every < 0:
            raise ValueError("epoch counts must be nonnegative")


@dataclass
class StageReport:
    stage: str
    epochs: int
    curves: dict[str, list[float]]  # one entry per epoch run, per loss term
    final_eval: dict[str, float]
    wall_clock: float


def _check_supervision(cfg: TrainConfig, will_step: bool) -> None:
    w = cfg.weights
    if will_step and w.w_normal == w.w_albedo == w.w_light == 0.0:
        raise ValueError(
            "refusing to train with zero supervision terms: reconstruction "
            "alone admits a trivial decomposition"
        )


def _epoch_rng(seed: int, stage: str, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, _STAGE_IDS[stage], epoch)))


def _stack_batch(samples: list[Sample], idx) -> dict[str, np.ndarray]:
    pick = [samples[i] for i in idx]
    return {
        "image": np.stack([s.image.values.transpose(2, 0, 1) for s in pick]),
        "mask": np.stack([s.mask.bits for s in pick])[:, None].astype(np.float32),
        "normal": np.stack([s.normal.vectors.transpose(2, 0, 1) for s in pick]),
        "albedo": np.stack([s.albedo.values.transpose(2, 0, 1) for s in pick]),
        "light": np.stack([s.light.coeffs for s in pick]),
    }


def _loss_terms(model: nets.Model, batch: dict, train: bool):
    """Forward pass plus the four loss Tensors; also returns the raw output."""
    out = model.forward(ad.Tensor(batch["image"]), train=train)
    n_hat = ad.normalize_vec3(out.normal)
    shading = ad.sh_shading(n_hat, out.light)
    recon = ad.mul(out.albedo, shading)
    terms = {
        "recon": ad.masked_l1(recon, batch["image"], batch["mask"]),
        "normal": ad.masked_l1(n_hat, batch["normal"], batch["mask"]),
        "albedo": ad.masked_l1(out.albedo, batch["albedo"], batch["mask"]),
        "light": ad.l2_loss(out.light, batch["light"]),
    }
    return terms, out


def _weighted_total(terms: dict, weights: LossWeights):
    parts = [
        ad.scale(terms[name], w)
        for name, w in (
            ("recon", weights.w_recon),
            ("normal", weights.w_normal),
            ("albedo", weights.w_albedo),
            ("light", weights.w_light),
        )
        if w != 0.0
    ]
    return reduce(ad.add, parts)


def _train_step(model, params, batch, cfg: TrainConfig, context: tuple) -> dict[str, float]:
    with ad.Tape() as tape:
        terms, _ = _loss_terms(model, batch, train=True)
        total = _weighted_total(terms, cfg.weights)
        values = {k: float(t.data) for k, t in terms.items()}
        values["total"] = float(total.data)
        if not all(np.isfinite(v) for v in values.values()):
            stage, epoch, step = context
            snapshot = {"stage": stage, "epoch": epoch, "step": step, "terms": values}
            if cfg.checkpoint_dir:
                path = Path(cfg.checkpoint_dir) / f"stage_{stage}_diverged.sfsckpt"
                nets.save_model(path, model, _train_state_entries(model, epoch))
                snapshot["checkpoint"] = str(path)
            raise TrainingDivergedError(
                f"non-finite loss at stage {stage} epoch {epoch} step {step}: {values}",
                snapshot,
            )
        tape.backward(total)
    ad.adam_step(params, lr=cfg.lr)
    ad.zero_grads(params)
    return values


def _train_state_entries(model: nets.Model, epoch: int) -> dict[str, np.ndarray]:
    """Adam moments and the epoch counter, for exact resume."""
    entries = {"adam.t": np.float32(0), "trainer.epoch": np.float32(epoch)}
    for p in model.params():
        entries[f"adam.m.{p.name}"] = p.m
        entries[f"adam.v.{p.name}"] = p.v
        entries["adam.t"] = np.float32(p.t)
    return entries


def restore_train_state(model: nets.Model, leftovers: dict[str, np.ndarray]) -> int:
    """Load Adam state saved by the trainer; returns the next epoch index."""
    t = int(leftovers.get("adam.t", np.float32(0)))
    for p in model.params():
        m = leftovers.get(f"adam.m.{p.name}")
        v = leftovers.get(f"adam.v.{p.name}")
        if m is not None and m.shape == p.data.shape:
            p.m = m.astype(np.float32)
        if v is not None and v.shape == p.data.shape:
            p.v = v.astype(np.float32)
        p.t = t
    return int(leftovers.get("trainer.epoch", np.float32(0)))


def save_training_checkpoint(path, model: nets.Model, epoch: int) -> None:
    nets.save_model(path, model, _train_state_entries(model, epoch))


def _full_batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    n = len(order)
    if n < batch_size:
        return [order]  # smaller-than-batch sets train as one batch
    return [order[i : i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def _run_epochs(model, cfg, stage, start_epoch, epochs_total, make_batches) -> StageReport:
    params = model.params()
    curves: dict[str, list[float]] = {k: [] for k in LOSS_TERMS}
    t0 = time.perf_counter()
    for epoch in range(start_epoch, epochs_total):
        rng = _epoch_rng(cfg.seed, stage, epoch)
        batches = make_batches(rng)
        sums = dict.fromkeys(LOSS_TERMS, 0.0)
        for step, (pool, idx) in enumerate(batches):
            values = _train_step(model, params, _stack_batch(pool, idx), cfg, (stage, epoch, step))
            for k in LOSS_TERMS:
                sums[k] += values[k]
        for k in LOSS_TERMS:
            curves[k].append(sums[k] / len(batches))
        logger.info(
            "stage %s epoch %d/%d: total %.5f recon %.5f normal %.5f albedo %.5f light %.5f",
            stage, epoch + 1, epochs_total, *(curves[k][-1] for k in LOSS_TERMS),
        )
        if (
            cfg.checkpoint_dir
            and cfg.checkpoint_every
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            path = Path(cfg.checkpoint_dir) / f"stage_{stage}_{epoch + 1:04d}.sfsckpt"
            save_training_checkpoint(path, model, epoch + 1)
    final = {k: curves[k][-1] for k in LOSS_TERMS} if curves["total"] else {}
    return StageReport(
        stage=f"stage-{stage}",
        epochs=epochs_total - start_epoch,
        curves=curves,
        final_eval=final,
        wall_clock=time.perf_counter() - t0,
    )


def train_stage_a(
    model: nets.Model,
    data: list[Sample],
    cfg: TrainConfig,
    *,
    epochs: int | None = None,
    start_epoch: int = 0,
) -> StageReport:
    """Supervised training on ground-truth (or pseudo) labeled samples."""
    epochs_total = cfg.epochs_a if epochs is None else epochs
    will_step = epochs_total > start_epoch
    _check_supervision(cfg, will_step)
    if will_step and not data:
        raise ValueError("train_stage_a needs at least one sample")

    def make_batches(rng):
        order = rng.permutation(len(data))
        return [(data, idx) for idx in _full_batches(order, cfg.batch_size)]

    return _run_epochs(model, cfg, "a", start_epoch, epochs_total, make_batches)


def mixed_batch_plan(
    n_synthetic: int,
    n_pseudo: int,
    batch_size: int,
    mix_ratio: float,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-batch (synthetic indices, pseudo indices) honoring mix_ratio.

    Every batch holds exactly floor(mix_ratio * batch_size) pseudo samples;
    leftover samples that cannot fill a batch are dropped.
    """
    n_pr = int(mix_ratio * batch_size)
    n_sy = batch_size - n_pr
    if n_pr > n_pseudo:
        raise ValueError(
            f"batch needs {n_pr} pseudo-labeled samples but the pool holds {n_pseudo}"
        )
    if n_sy > n_synthetic:
        raise ValueError(
            f"batch needs {n_sy} synthetic samples but the pool holds {n_synthetic}"
        )
    sy_order = rng.permutation(n_synthetic)
    pr_order = rng.permutation(n_pseudo)
    steps = min(
        n_synthetic // n_sy if n_sy else np.inf,
        n_pseudo // n_pr if n_pr else np.inf,
    )
    return [
        (sy_order[i * n_sy : (i + 1) * n_sy], pr_order[i * n_pr : (i + 1) * n_pr])
        for i in range(int(steps))
    ]


def train_stage_c(
    model: nets.Model,
    synthetic: list[Sample],
    pseudo_labeled: list[Sample],
    cfg: TrainConfig,
    *,
    epochs: int | None = None,
    start_epoch: int = 0,
) -> StageReport:
    """Mixed-batch training; each sample supervises with its own labels.

    The reconstruction term always targets the original image, which for
    pseudo-real samples is the one input the pseudo labels cannot explain.
    """
    epochs_total = cfg.epochs_c if epochs is None else epochs
    _check_supervision(cfg, epochs_total > start_epoch)

    def make_batches(rng):
        plan = mixed_batch_plan(
            len(synthetic), len(pseudo_labeled), cfg.batch_size, cfg.mix_ratio, rng
        )
        if not plan:
            raise ValueError("pools are too small for a single mixed batch")
        merged = synthetic + pseudo_labeled
        return [
            (merged, np.concatenate([sy, pr + len(synthetic)]).astype(int))
            for sy, pr in plan
        ]

    return _run_epochs(model, cfg, "c", start_epoch, epochs_total, make_batches)


# ---------------------------------------------------------------------------
# evaluation


def decompose_dataset(model: nets.Model, samples: list[Sample], batch_size: int = 32):
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = np.stack([s.image.values.transpose(2, 0, 1) for s in chunk])
        masks = np.stack([s.mask.bits for s in chunk])
        out.extend(nets.decompose(model, images, masks))
    return out


def evaluate_decomposition(
    model: nets.Model, samples: list[Sample], batch_size: int = 32
) -> tuple[ReconErrorStats, NormalErrorStats]:
    """Pixel-weighted reconstruction and normal errors over a dataset.

    Reconstructions are re-rendered from the decomposition; errors are
    pooled over all masked pixels, not averaged per image.
    """
    abs_sum = sq_sum = count = 0.0
    degrees = []
    for s, dec in zip(samples, decompose_dataset(model, samples, batch_size)):
        pred = shcore.render(dec.normal, dec.albedo, dec.light, s.mask)
        diff = (
            pred.values[s.mask.bits].astype(np.float64)
            - s.image.values[s.mask.bits].astype(np.float64)
        ) * 255.0
        abs_sum += np.abs(diff).sum()
        sq_sum += (diff * diff).sum()
        count += diff.size
        degrees.append(photometrics.angular_errors(dec.normal, s.normal, s.mask))
    recon = ReconErrorStats(mae=abs_sum / count, rmse=float(np.sqrt(sq_sum / count)))
    return recon, photometrics.stats_from_degrees(np.concatenate(degrees))


def evaluate_recon(model, samples, batch_size: int = 32) -> ReconErrorStats:
    return evaluate_decomposition(model, samples, batch_size)[0]


def evaluate_lighting(
    model: nets.Model,
    bench_train: list[Sample],
    bench_test: list[Sample],
    batch_size: int = 32,
) -> LightClassReport:
    """19-way probe trained on ground-truth SH, tested on predicted SH."""
    for s in bench_train + bench_test:
        if s.light_class is None:
            raise ValueError("benchmark samples must carry light_class labels")
    train = [(s.light, s.light_class) for s in bench_train]
    decs = decompose_dataset(model, bench_test, batch_size)
    test = [(d.light, s.light_class) for s, d in zip(bench_test, decs)]
    return photometrics.light_classify(train, test)


# ---------------------------------------------------------------------------
# paradigms


@dataclass
class ParadigmReport:
    name: str
    recon: ReconErrorStats
    normals: NormalErrorStats
    lighting: LightClassReport
    stages: list[StageReport]
    wall_clock: float

    def row(self) -> dict:
        """One table row: paradigm, recon MAE/RMSE, lighting top-1/2/3."""
        return {
            "paradigm": self.name,
            "mae": self.recon.mae,
            "rmse": self.recon.rmse,
            "top1": self.lighting.top1,
            "top2": self.lighting.top2,
            "top3": self.lighting.top3,
        }


def _cached_dataset(ws: Path | None, name: str, build) -> list[Sample]:
    if ws is None:
        return build()
    path = ws / "data" / name
    if (path / datagen.MANIFEST_NAME).exists():
        return datagen.load_dataset(path)
    samples = build()
    datagen.save_dataset(samples, path)
    return samples


def _check_workspace_meta(ws: Path, meta: dict) -> None:
    import json

    path = ws / "workspace.json"
    if path.exists():
        stored = json.loads(path.read_text())
        if stored != meta:
            raise ValueError(
                f"workspace {ws} was built with different settings; "
                "point --workspace somewhere fresh or match the old config"
            )
    else:
        ws.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _stage_a_skipnet(ws, synthetic, cfg, net_cfg):
    """Stage-A SkipNet, cached in the workspace and shared across paradigms.

    The stage report is cached alongside the weights so a warm run reports
    exactly what the cold run did.
    """
    import json

    path = ws / "skipnet_a.sfsckpt" if ws else None
    if path and path.exists():
        model, _ = nets.load_model(path)
        doc = json.loads((ws / "skipnet_a.report.json").read_text())
        # JSON sorted the keys; restore canonical term order
        curves = {k: doc["curves"][k] for k in LOSS_TERMS}
        report = StageReport(
            doc["stage"], doc["epochs"], curves, doc["final_eval"], 0.0
        )
        return model, report
    model = nets.build_model("skipnet", net_cfg, seed=cfg.seed + 11)
    report = train_stage_a(model, synthetic, cfg)
    if path:
        save_training_checkpoint(path, model, cfg.epochs_a)
        doc = {
            "stage": report.stage, "epochs": report.epochs,
            "curves": report.curves, "final_eval": report.final_eval,
        }
        (ws / "skipnet_a.report.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n"
        )
    return model, report


def _pseudo_labels(ws, labeler, pool):
    if ws is None:
        return datagen.pseudo_label(labeler, pool)
    path = ws / "data" / "pseudo-labels"
    if (path / datagen.MANIFEST_NAME).exists():
        return datagen.load_dataset(path)
    labeled = datagen.pseudo_label(labeler, pool)
    datagen.save_dataset(labeled, path)
    return labeled


def run_paradigm(
    name: str,
    cfg: TrainConfig,
    net_cfg: nets.NetConfig | None = None,
    *,
    n_synthetic: int = 2000,
    n_pseudo_real: int = 2000,
    n_holdout: int = 200,
    bench_shapes: int = 40,
    bench_train_shapes: int = 30,
    data_seed: int = 0,
    noise_sigma: float = 0.01,
    workspace=None,
    save_model=None,
) -> ParadigmReport:
    """End-to-end run of one training paradigm plus its evaluation.

    With a workspace directory, datasets, the stage-A SkipNet and its
    pseudo labels are cached and shared between paradigms; the workspace
    refuses to mix settings.
    """
    if name not in PARADIGMS:
        raise ValueError(f"unknown paradigm {name!r}, expected one of {PARADIGMS}")
    net_cfg = net_cfg or nets.NetConfig()
    ws = Path(workspace) if workspace is not None else None
    if ws is not None:
        meta = {
            "net": net_cfg.to_dict(),
            "train": {
                "batch_size": cfg.batch_size, "mix_ratio": cfg.mix_ratio,
                "lr": cfg.lr, "epochs_a": cfg.epochs_a, "epochs_c": cfg.epochs_c,
                "seed": cfg.seed,
            },
            "data": {
                "seed": data_seed, "n_synthetic": n_synthetic,
                "n_pseudo_real": n_pseudo_real, "n_holdout": n_holdout,
                "bench_shapes": bench_shapes, "bench_train_shapes": bench_train_shapes,
                "noise_sigma": noise_sigma,
            },
        }
        _check_workspace_meta(ws, meta)
    t0 = time.perf_counter()
    size = net_cfg.input_size

    synthetic = _cached_dataset(
        ws, "synthetic", lambda: datagen.make_dataset(n_synthetic, data_seed, "synthetic", size=size)
    )
    holdout = _cached_dataset(
        ws, "holdout",
        lambda: datagen.make_dataset(
            n_holdout, data_seed + 2, "pseudo-real", noise_sigma, size=size
        ),
    )
    bench = {}

    def _bench_split(which: int):
        if not bench:
            bench["train"], bench["test"] = datagen.make_light_benchmark(
                data_seed + 3, bench_shapes, bench_train_shapes, size
            )
        return [bench["train"], bench["test"]][which]

    bench_train = _cached_dataset(ws, "bench-train", lambda: _bench_split(0))
    bench_test = _cached_dataset(ws, "bench-test", lambda: _bench_split(1))

    if name == "skipnet-syn":
        model, report = _stage_a_skipnet(ws, synthetic, cfg, net_cfg)
        stages = [report]
    elif name == "sfsnet-syn":
        model = nets.build_model("sfsnet", net_cfg, seed=cfg.seed + 22)
        # compute-matched with the full paradigm's stage C
        stages = [train_stage_a(model, synthetic, cfg, epochs=cfg.epochs_c)]
    else:
        labeler, report_a = _stage_a_skipnet(ws, synthetic, cfg, net_cfg)
        pool = _cached_dataset(
            ws, "pseudo-real",
            lambda: datagen.make_dataset(
                n_pseudo_real, data_seed + 1, "pseudo-real", noise_sigma, size=size
            ),
        )
        labeled = _pseudo_labels(ws, labeler, pool)
        arch = "sfsnet" if name == "sfsnet-full" else "skipnet+"
        model = nets.build_model(arch, net_cfg, seed=cfg.seed + (22 if arch == "sfsnet" else 33))
        stages = [report_a, train_stage_c(model, synthetic, labeled, cfg)]

    recon, normals = evaluate_decomposition(model, holdout)
    lighting = evaluate_lighting(model, bench_train, bench_test)
    if ws is not None:
        nets.save_model(ws / f"{name}.sfsckpt", model)
    if save_model is not None:
        nets.save_model(save_model, model)
    report = ParadigmReport(
        name=name, recon=recon, normals=normals, lighting=lighting,
        stages=stages, wall_clock=time.perf_counter() - t0,
    )
    logger.info(
        "paradigm %s: recon MAE %.2f RMSE %.2f, lighting top-1 %.1f%%",
        name, recon.mae, recon.rmse, lighting.top1,
    )
    return report
