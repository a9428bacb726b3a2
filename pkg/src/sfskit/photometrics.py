"""Closed-form lighting recovery, relighting, and the quantitative metrics.

Lighting is solved per color channel: with unit normals n(p) and albedo
A_c(p), each masked pixel contributes one row A_c(p) * Y(n(p)) to an
overdetermined linear system whose least-squares solution is the 9
coefficient vector of that channel. Rows where the albedo is below 1e-4
carry no usable signal and are dropped. The solve runs in float64 via
SVD; a condition number above 1e8 (single-precision data, double solve)
means the masked geometry does not span the basis and raises
DegenerateGeometryError naming the channel.

The 19-way lighting-consistency check fits a multinomial logistic
classifier on the 27 coefficients: features standardized by training
mean/scale (an affine reparameterization, still the same model class),
weights zero-initialized, full-batch gradient descent at a fixed step
until the gradient norm falls below 1e-6 or 500 epochs pass, L2 penalty
1e-3 on weights only. Everything is deterministic for a fixed input
ordering.

Angular thresholds use strict inequality (error < 20 degrees), and
reconstruction errors are reported on the 0-255 display scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shcore import render, sh_basis_array, shading
from .types import (
    ColorMap,
    Decomposition,
    DegenerateGeometryError,
    LightSH,
    Mask,
    VectorFieldMap,
    check_same_dims,
)

N_LIGHT_CLASSES = 19

ALBEDO_SIGNAL_FLOOR = 1e-4
CONDITION_LIMIT = 1e8

_CLS_L2 = 1e-3
_CLS_LR = 0.2
_CLS_GRAD_TOL = 1e-6
_CLS_MAX_EPOCHS = 500


@dataclass
class NormalErrorStats:
    """Angular error summary in degrees over masked pixels."""

    mean_deg: float
    std_deg: float
    pct_under_20: float
    pct_under_25: float
    pct_under_30: float


@dataclass
class ReconErrorStats:
    """Reconstruction error on the 0-255 display scale."""

    mae: float
    rmse: float


@dataclass
class LightClassReport:
    """19-way lighting classification accuracies and confusion counts."""

    top1: float
    top2: float
    top3: float
    confusion: np.ndarray  # (19, 19) int rows=true, cols=predicted


# ---------------------------------------------------------------------------
# Lighting solve


def solve_light_ls(
    image: ColorMap, normals: VectorFieldMap, albedo: ColorMap, mask: Mask
) -> LightSH:
    """Least-squares lighting from a known image, normals, and albedo."""
    check_same_dims(image, normals, albedo, mask)
    mask.require_nonempty()
    basis = sh_basis_array(normals.vectors[mask.bits].astype(np.float64))
    img = image.values[mask.bits].astype(np.float64)
    alb = albedo.values[mask.bits].astype(np.float64)

    mat = np.zeros((3, 9))
    for c in range(3):
        keep = alb[:, c] >= ALBEDO_SIGNAL_FLOOR
        rows = alb[keep, c : c + 1] * basis[keep]
        rhs = img[keep, c]
        name = "RGB"[c]
        if rows.shape[0] < 9:
            raise DegenerateGeometryError(
                f"channel {name}: only {rows.shape[0]} usable pixels, need at least 9"
            )
        sv = np.linalg.svd(rows, compute_uv=False)
        cond = np.inf if sv[-1] == 0.0 else sv[0] / sv[-1]
        if cond > CONDITION_LIMIT:
            raise DegenerateGeometryError(
                f"channel {name}: condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}"
            )
        mat[c], *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    return LightSH.from_matrix(mat)


# ---------------------------------------------------------------------------
# Relighting


def transfer_light(
    source: Decomposition, target: Decomposition, mask: Mask | None = None
) -> tuple[ColorMap, ColorMap]:
    """Render the target geometry and albedo under the source lighting.

    Returns (image, shading); the shading map is the display panel showing
    the transferred illumination alone.
    """
    mask = mask if mask is not None else target.mask
    img = render(target.normal, target.albedo, source.light, mask)
    sha = shading(target.normal, source.light, mask)
    return img, sha


# ---------------------------------------------------------------------------
# Metrics


def angular_errors(pred: VectorFieldMap, gt: VectorFieldMap, mask: Mask) -> np.ndarray:
    """Per-pixel angle between unit fields over the mask, in degrees.

    The angle arccos(pred . gt) is evaluated as atan2(|pred x gt|, pred . gt):
    the same quantity, but exact for identical inputs and well conditioned
    near 0 and 180 degrees, where arccos of a rounded dot product is not.
    """
    check_same_dims(pred, gt, mask)
    mask.require_nonempty()
    p = pred.vectors[mask.bits].astype(np.float64)
    g = gt.vectors[mask.bits].astype(np.float64)
    dots = np.sum(p * g, axis=-1)
    crosses = np.linalg.norm(np.cross(p, g), axis=-1)
    return np.degrees(np.arctan2(crosses, dots))


def stats_from_degrees(deg: np.ndarray) -> NormalErrorStats:
    """Summary statistics of a pooled array of angular errors."""
    deg = np.asarray(deg, dtype=np.float64)
    if deg.size == 0:
        raise ValueError("cannot summarize an empty error array")
    return NormalErrorStats(
        mean_deg=float(deg.mean()),
        std_deg=float(deg.std()),
        pct_under_20=float(100.0 * np.mean(deg < 20.0)),
        pct_under_25=float(100.0 * np.mean(deg < 25.0)),
        pct_under_30=float(100.0 * np.mean(deg < 30.0)),
    )


def angular_error_stats(pred: VectorFieldMap, gt: VectorFieldMap, mask: Mask) -> NormalErrorStats:
    return stats_from_degrees(angular_errors(pred, gt, mask))


def recon_error_stats(image: ColorMap, reconstruction: ColorMap, mask: Mask) -> ReconErrorStats:
    """MAE and RMSE between two maps over the mask, scaled to 0-255."""
    check_same_dims(image, reconstruction, mask)
    mask.require_nonempty()
    diff = 255.0 * (
        image.values[mask.bits].astype(np.float64)
        - reconstruction.values[mask.bits].astype(np.float64)
    )
    return ReconErrorStats(
        mae=float(np.abs(diff).mean()),
        rmse=float(np.sqrt(np.mean(diff * diff))),
    )


# ---------------------------------------------------------------------------
# Lighting-consistency classification


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def light_classify(
    train: list[tuple[LightSH, int]], test: list[tuple[LightSH, int]]
) -> LightClassReport:
    """Fit the multinomial logistic probe on train, report top-1/2/3 on test."""
    if not train or not test:
        raise ValueError("light_classify needs non-empty train and test sets")
    xtr = np.stack([l.coeffs.astype(np.float64) for l, _ in train])
    ytr = np.array([c for _, c in train], dtype=int)
    xte = np.stack([l.coeffs.astype(np.float64) for l, _ in test])
    yte = np.array([c for _, c in test], dtype=int)
    for y in (ytr, yte):
        if y.min() < 0 or y.max() >= N_LIGHT_CLASSES:
            raise ValueError(f"class labels must lie in 0..{N_LIGHT_CLASSES - 1}")
    present = np.unique(ytr)
    if len(present) != N_LIGHT_CLASSES:
        missing = sorted(set(range(N_LIGHT_CLASSES)) - set(present.tolist()))
        raise ValueError(f"training set is missing classes {missing}")

    mu = xtr.mean(axis=0)
    sigma = np.maximum(xtr.std(axis=0), 1e-8)
    xs = (xtr - mu) / sigma
    n = xs.shape[0]
    onehot = np.zeros((n, N_LIGHT_CLASSES))
    onehot[np.arange(n), ytr] = 1.0

    w = np.zeros((N_LIGHT_CLASSES, 27))
    b = np.zeros(N_LIGHT_CLASSES)
    for _ in range(_CLS_MAX_EPOCHS):
        probs = _softmax(xs @ w.T + b)
        resid = probs - onehot
        gw = resid.T @ xs / n + 2.0 * _CLS_L2 * w
        gb = resid.sum(axis=0) / n
        if np.sqrt((gw * gw).sum() + (gb * gb).sum()) <= _CLS_GRAD_TOL:
            break
        w -= _CLS_LR * gw
        b -= _CLS_LR * gb

    scores = ((xte - mu) / sigma) @ w.T + b
    order = np.argsort(-scores, axis=1)
    hits = order == yte[:, None]
    m = len(yte)
    confusion = np.zeros((N_LIGHT_CLASSES, N_LIGHT_CLASSES), dtype=int)
    for truth, pred in zip(yte, order[:, 0]):
        confusion[truth, pred] += 1
    return LightClassReport(
        top1=float(100.0 * hits[:, :1].any(axis=1).mean()),
        top2=float(100.0 * hits[:, :2].any(axis=1).mean()),
        top3=float(100.0 * hits[:, :3].any(axis=1).mean()),
        confusion=confusion,
    )
