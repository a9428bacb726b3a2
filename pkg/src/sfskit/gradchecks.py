"""Shared gradcheck case table.

Each case builds (fn, input arrays) from an rng. Inputs are drawn away
from the kinks of non-smooth ops (|.|, relu) so central differences are
valid; tolerances stay at the suite-wide 1e-5.

Used by the unit tests (few seeds), the acceptance sweep (>= 20 seeds
per op), and the gradcheck CLI subcommand.
"""

import numpy as np

from . import autodiff as ad


def _away_from_zero(a, margin=0.25):
    return a + margin * np.sign(a)


def _case_conv_k3s1(rng):
    return (
        lambda x, w, b: ad.conv2d(x, w, b, stride=1),
        [rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)],
    )


def _case_conv_k1(rng):
    return (
        lambda x, w, b: ad.conv2d(x, w, b, stride=1),
        [rng.standard_normal((2, 4, 4, 4)), rng.standard_normal((3, 4, 1, 1)), rng.standard_normal(3)],
    )


def _case_conv_k7(rng):
    return (
        lambda x, w, b: ad.conv2d(x, w, b, stride=1),
        [rng.standard_normal((1, 2, 8, 8)), rng.standard_normal((2, 2, 7, 7)), rng.standard_normal(2)],
    )


def _case_conv_k3s2(rng):
    return (
        lambda x, w, b: ad.conv2d(x, w, b, stride=2),
        [rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)],
    )


def _case_conv_k4s2(rng):
    return (
        lambda x, w, b: ad.conv2d(x, w, b, stride=2),
        [rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((4, 3, 4, 4)), rng.standard_normal(4)],
    )


def _case_deconv(rng):
    return (
        lambda x, w, b: ad.conv_transpose2d(x, w, b),
        [rng.standard_normal((2, 4, 3, 3)), rng.standard_normal((4, 3, 4, 4)), rng.standard_normal(3)],
    )


def _case_batch_norm_train(rng):
    c = 3
    rm, rv = np.zeros(c), np.ones(c)
    return (
        lambda x, g, b: ad.batch_norm(x, g, b, rm.copy(), rv.copy(), train=True),
        [rng.standard_normal((4, c, 4, 4)), 0.5 + rng.random(c), rng.standard_normal(c)],
    )


def _case_batch_norm_eval(rng):
    c = 3
    rm = rng.standard_normal(c)
    rv = 0.5 + rng.random(c)
    return (
        lambda x, g, b: ad.batch_norm(x, g, b, rm, rv, train=False),
        [rng.standard_normal((4, c, 4, 4)), 0.5 + rng.random(c), rng.standard_normal(c)],
    )


def _case_batch_norm_2d(rng):
    c = 5
    rm, rv = np.zeros(c), np.ones(c)
    return (
        lambda x, g, b: ad.batch_norm(x, g, b, rm.copy(), rv.copy(), train=True),
        [rng.standard_normal((6, c)), 0.5 + rng.random(c), rng.standard_normal(c)],
    )


def _case_relu(rng):
    return (ad.relu, [_away_from_zero(rng.standard_normal((3, 4, 5, 5)))])


def _case_leaky_relu_02(rng):
    return (lambda x: ad.leaky_relu(x, 0.2), [_away_from_zero(rng.standard_normal((3, 4, 5, 5)))])


def _case_leaky_relu_03(rng):
    return (lambda x: ad.leaky_relu(x, 0.3), [_away_from_zero(rng.standard_normal((2, 3, 4, 4)))])


def _case_upsample(rng):
    return (ad.bilinear_upsample2x, [rng.standard_normal((2, 3, 4, 4))])


def _case_gap(rng):
    return (ad.global_avg_pool, [rng.standard_normal((3, 4, 5, 5))])


def _case_flatten(rng):
    return (ad.flatten, [rng.standard_normal((3, 2, 4, 4))])


def _case_broadcast(rng):
    return (lambda x: ad.broadcast_spatial(x, 3, 3), [rng.standard_normal((2, 5))])


def _case_fc(rng):
    return (
        ad.fully_connected,
        [rng.standard_normal((4, 6)), rng.standard_normal((3, 6)), rng.standard_normal(3)],
    )


def _case_concat(rng):
    return (
        ad.concat_channels,
        [rng.standard_normal((2, 2, 3, 3)), rng.standard_normal((2, 4, 3, 3)), rng.standard_normal((2, 1, 3, 3))],
    )


def _case_add(rng):
    return (ad.add, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))])


def _case_sub(rng):
    return (ad.sub, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))])


def _case_mul(rng):
    return (ad.mul, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))])


def _case_scale(rng):
    return (lambda x: ad.scale(x, -1.7), [rng.standard_normal((2, 3, 4, 4))])


def _case_normalize_vec3(rng):
    v = rng.standard_normal((2, 3, 4, 4))
    v *= (0.5 + rng.random((2, 1, 4, 4))) / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-9)
    return (ad.normalize_vec3, [v])


def _case_sh_shading(rng):
    return (ad.sh_shading, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 27))])


def _case_masked_l1(rng):
    y = rng.standard_normal((2, 3, 4, 4))
    m = (rng.random((2, 1, 4, 4)) > 0.3).astype(float)
    if m.sum() == 0:
        m[0, 0, 0, 0] = 1.0
    x0 = y + _away_from_zero(rng.standard_normal((2, 3, 4, 4)))
    return (lambda x: ad.masked_l1(x, y, m), [x0])


def _case_l2(rng):
    return (ad.l2_loss, [rng.standard_normal((3, 27)), rng.standard_normal((3, 27))])


CASES = {
    "conv2d_k1": _case_conv_k1,
    "conv2d_k3_s1": _case_conv_k3s1,
    "conv2d_k3_s2": _case_conv_k3s2,
    "conv2d_k4_s2": _case_conv_k4s2,
    "conv2d_k7": _case_conv_k7,
    "conv_transpose2d": _case_deconv,
    "batch_norm_train": _case_batch_norm_train,
    "batch_norm_eval": _case_batch_norm_eval,
    "batch_norm_2d": _case_batch_norm_2d,
    "relu": _case_relu,
    "leaky_relu_0.2": _case_leaky_relu_02,
    "leaky_relu_0.3": _case_leaky_relu_03,
    "bilinear_upsample2x": _case_upsample,
    "global_avg_pool": _case_gap,
    "flatten": _case_flatten,
    "broadcast_spatial": _case_broadcast,
    "fully_connected": _case_fc,
    "concat_channels": _case_concat,
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "scale": _case_scale,
    "normalize_vec3": _case_normalize_vec3,
    "sh_shading": _case_sh_shading,
    "masked_l1": _case_masked_l1,
    "l2_loss": _case_l2,
}


def run_suite(ops=None, seeds: int = 3, tol: float = 1e-5, base_seed: int = 0) -> dict:
    """Gradcheck each named op over several seeds; keeps the worst report.

    Returns {case name: GradcheckReport}; a report with passed=False means
    at least one seed failed.
    """
    names = sorted(CASES) if ops is None else list(ops)
    results = {}
    for name in names:
        if name not in CASES:
            raise ValueError(f"unknown gradcheck case {name!r}")
        reports = []
        for s in range(seeds):
            rng = np.random.default_rng(np.random.SeedSequence((base_seed, s)))
            fn, arrays = CASES[name](rng)
            reports.append(ad.gradcheck(fn, arrays, tol=tol))
        worst = max(reports, key=lambda r: r.max_rel_err)
        if not all(r.passed for r in reports):
            worst = next(r for r in reports if not r.passed)
        results[name] = worst
    return results
