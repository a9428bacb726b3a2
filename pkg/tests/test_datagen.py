"""Generator tests: determinism, invariants, the analytic normal oracle."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from sfskit import nets
from sfskit.datagen import (
    LightDistribution,
    benchmark_light_directions,
    benchmark_lights,
    default_light_distribution,
    estimate_acceptance,
    height_to_normals,
    load_dataset,
    make_dataset,
    make_light_benchmark,
    pseudo_label,
    sample_albedo,
    sample_light,
    sample_shape,
    save_dataset,
)
from sfskit.photometrics import light_classify, solve_light_ls
from sfskit.shcore import recon_loss, shading


# ---------------------------------------------------------------------------
# shapes


def test_flat_height_field_gives_up_normals():
    n = height_to_normals(np.zeros((16, 16)))
    np.testing.assert_array_equal(n, np.broadcast_to([0, 0, 1], (16, 16, 3)).astype(np.float32))


def _analytic_bump_normals(size, a, cx, cy, s1, s2, theta):
    """Closed-form normals of z = a * exp(-(u^2/s1^2 + v^2/s2^2)/2)."""
    x = np.linspace(-1.0, 1.0, size)
    y = np.linspace(1.0, -1.0, size)
    xx, yy = np.meshgrid(x, y)
    ct, st = np.cos(theta), np.sin(theta)
    u = ct * (xx - cx) + st * (yy - cy)
    v = -st * (xx - cx) + ct * (yy - cy)
    z = a * np.exp(-0.5 * ((u / s1) ** 2 + (v / s2) ** 2))
    gx = -z * (u * ct / s1**2 - v * st / s2**2)
    gy = -z * (u * st / s1**2 + v * ct / s2**2)
    n = np.stack([-gx, -gy, np.ones_like(z)], axis=-1)
    return z, n / np.linalg.norm(n, axis=-1, keepdims=True)


@pytest.mark.parametrize(
    "params",
    [
        dict(a=0.25, cx=0.1, cy=-0.15, s1=0.35, s2=0.5, theta=0.0),
        dict(a=-0.2, cx=-0.2, cy=0.1, s1=0.4, s2=0.3, theta=0.7),
    ],
)
def test_single_bump_matches_analytic_gradient(params):
    # central differences on a 128 grid resolve the Gaussian to ~3e-4
    z, exact = _analytic_bump_normals(128, **params)
    fd = height_to_normals(z)
    assert np.max(np.abs(fd - exact.astype(np.float32))) < 1e-3


@pytest.mark.parametrize("family", ["synthetic", "pseudo-real"])
def test_sample_shape_deterministic(family):
    a_n, a_m = sample_shape(123, family)
    b_n, b_m = sample_shape(123, family)
    np.testing.assert_array_equal(a_n.vectors, b_n.vectors)
    np.testing.assert_array_equal(a_m.bits, b_m.bits)
    c_n, _ = sample_shape(124, family)
    assert not np.array_equal(a_n.vectors, c_n.vectors)


def test_sample_shape_unit_and_coverage():
    for seed in range(30):
        for family in ("synthetic", "pseudo-real"):
            n, m = sample_shape(seed, family)
            n.check_unit(m)
            assert 0.30 <= m.count / (64 * 64) <= 0.80


def test_pseudo_real_adds_high_frequency_normal_detail():
    rough, smooth = [], []
    for seed in range(8):
        pn, _ = sample_shape(seed, "pseudo-real")
        sn, _ = sample_shape(seed, "synthetic")
        rough.append(np.abs(np.diff(pn.vectors, axis=0)).mean())
        smooth.append(np.abs(np.diff(sn.vectors, axis=0)).mean())
    assert np.mean(rough) > np.mean(smooth)


def test_sample_shape_rejects_unknown_family():
    with pytest.raises(ValueError, match="family"):
        sample_shape(0, "real")


# ---------------------------------------------------------------------------
# albedo


def test_sample_albedo_deterministic_and_range():
    a = sample_albedo(5, "synthetic")
    b = sample_albedo(5, "synthetic")
    np.testing.assert_array_equal(a.values, b.values)
    for seed in range(1000):
        v = sample_albedo(seed, "synthetic", size=16).values
        assert v.min() >= 0.15 - 1e-6 and v.max() <= 0.95 + 1e-6


def test_pseudo_real_albedo_range_and_texture():
    hf_p, hf_s = [], []
    for seed in range(200):
        v = sample_albedo(seed, "pseudo-real", size=32).values
        assert v.min() >= 0.03 - 1e-6 and v.max() <= 0.95 + 1e-6
        if seed < 12:
            s = sample_albedo(seed, "synthetic", size=32).values
            hf_p.append(np.abs(np.diff(v, axis=0)).mean())
            hf_s.append(np.abs(np.diff(s, axis=0)).mean())
    # the family flag must move high-frequency energy
    assert np.mean(hf_p) > 1.5 * np.mean(hf_s)


# ---------------------------------------------------------------------------
# lights


def test_zero_stddev_returns_floored_mean():
    dist = default_light_distribution()
    frozen = LightDistribution(dist.mean, np.zeros(27), ambient_floor=2.0)
    light = sample_light(frozen, 0)
    expect = dist.mean.copy()
    expect[[0, 9, 18]] = 2.0  # floor above the 1.8 DC mean
    np.testing.assert_array_equal(light.coeffs, expect.astype(np.float32))
    np.testing.assert_array_equal(light.coeffs, sample_light(frozen, 99).coeffs)


def test_sample_light_deterministic():
    dist = default_light_distribution()
    assert (sample_light(dist, 7).coeffs == sample_light(dist, 7).coeffs).all()
    assert not (sample_light(dist, 7).coeffs == sample_light(dist, 8).coeffs).all()


def test_default_acceptance_rate_over_ten_percent():
    assert estimate_acceptance(default_light_distribution(), n=300) > 0.10


def test_hopeless_distribution_raises():
    dist = LightDistribution(np.zeros(27), np.zeros(27), ambient_floor=0.0)
    with pytest.raises(RuntimeError, match="rejected"):
        sample_light(dist, 0)  # all-dark light can never pass the mean bound


def test_negative_stddev_rejected():
    with pytest.raises(ValueError, match="stddev"):
        LightDistribution(np.zeros(27), -np.ones(27))


# ---------------------------------------------------------------------------
# datasets


def test_empty_dataset():
    assert make_dataset(0, seed=0, family="synthetic") == []


def test_synthetic_samples_render_exactly():
    for s in make_dataset(10, seed=3, family="synthetic"):
        assert recon_loss(s.image, s.normal, s.albedo, s.light, s.mask) < 1e-6
        assert s.supervision == "ground-truth" and s.family == "synthetic"
        s.image.check_range(s.mask)


def test_pseudo_real_residual_positive():
    samples = make_dataset(8, seed=4, family="pseudo-real")
    resid = [recon_loss(s.image, s.normal, s.albedo, s.light, s.mask) for s in samples]
    assert np.mean(resid) > 1e-3
    for s in samples:
        s.image.check_range(s.mask)
        assert s.family == "pseudo-real"


def test_make_dataset_pure_function_of_args():
    a = make_dataset(4, seed=9, family="pseudo-real", noise_sigma=0.02)
    b = make_dataset(4, seed=9, family="pseudo-real", noise_sigma=0.02)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.image.values, y.image.values)
        np.testing.assert_array_equal(x.light.coeffs, y.light.coeffs)
    c = make_dataset(4, seed=9, family="pseudo-real", noise_sigma=0.05)
    assert not np.array_equal(a[0].image.values, c[0].image.values)


def test_noise_sigma_ignored_for_synthetic():
    a = make_dataset(2, seed=1, family="synthetic", noise_sigma=0.0)
    b = make_dataset(2, seed=1, family="synthetic", noise_sigma=0.5)
    np.testing.assert_array_equal(a[0].image.values, b[0].image.values)


# ---------------------------------------------------------------------------
# pseudo labels


def test_pseudo_label_contract():
    cfg = nets.NetConfig(input_size=32, width_scale=0.125, n_resblocks=2)
    model = nets.build_model("sfsnet", cfg, seed=5)
    samples = make_dataset(5, seed=6, family="pseudo-real", size=32)
    labeled = pseudo_label(model, samples)  # default chunk covers all 5

    assert [l.supervision for l in labeled] == ["pseudo"] * 5
    for l, s in zip(labeled, samples):
        assert l.image is s.image and l.mask is s.mask
        assert l.family == "pseudo-real"

    images = np.stack([s.image.values.transpose(2, 0, 1) for s in samples])
    masks = np.stack([s.mask.bits for s in samples])
    for l, d in zip(labeled, nets.decompose(model, images, masks)):
        np.testing.assert_array_equal(l.normal.vectors, d.normal.vectors)
        np.testing.assert_array_equal(l.albedo.values, d.albedo.values)
        np.testing.assert_array_equal(l.light.coeffs, d.light.coeffs)


def test_pseudo_label_chunking_only_bounds_memory():
    # chunk boundaries may move float results by ulps, nothing more
    cfg = nets.NetConfig(input_size=32, width_scale=0.125, n_resblocks=2)
    model = nets.build_model("skipnet", cfg, seed=5)
    samples = make_dataset(5, seed=6, family="pseudo-real", size=32)
    whole = pseudo_label(model, samples)
    parts = pseudo_label(model, samples, batch_size=2)
    for a, b in zip(whole, parts):
        np.testing.assert_allclose(a.normal.vectors, b.normal.vectors, atol=1e-5)
        np.testing.assert_allclose(a.light.coeffs, b.light.coeffs, atol=1e-5)


# ---------------------------------------------------------------------------
# 19-light benchmark


def test_benchmark_directions_shape():
    d = benchmark_light_directions()
    assert d.shape == (19, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert (d[:, 1] > 0).all()  # every light sits above the horizon


def test_benchmark_split_is_subject_disjoint():
    train, test = make_light_benchmark(seed=2, n_shapes=6, n_train_shapes=4, size=32)
    assert len(train) == 4 * 19 and len(test) == 2 * 19
    train_shapes = {id(s.normal.vectors) for s in train}
    test_shapes = {id(s.normal.vectors) for s in test}
    assert len(train_shapes) == 4 and len(test_shapes) == 2
    assert not (train_shapes & test_shapes)
    for bucket, per_class in ((train, 4), (test, 2)):
        counts = np.bincount([s.light_class for s in bucket], minlength=19)
        np.testing.assert_array_equal(counts, per_class)


def test_ideal_estimator_reaches_100_percent():
    train, test = make_light_benchmark(seed=11, n_shapes=12, n_train_shapes=9, size=32)
    tr = [(s.light, s.light_class) for s in train]
    te = [
        (solve_light_ls(s.image, s.normal, s.albedo, s.mask), s.light_class) for s in test
    ]
    rep = light_classify(tr, te)
    assert rep.top1 == 100.0


def test_bad_split_rejected():
    with pytest.raises(ValueError, match="train"):
        make_light_benchmark(seed=0, n_shapes=4, n_train_shapes=4)


# ---------------------------------------------------------------------------
# persistence


def _dir_digest(path: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir())}


def test_dataset_round_trip(tmp_path):
    samples = make_dataset(3, seed=1, family="pseudo-real", size=32)
    samples[1].light_class = 4
    save_dataset(samples, tmp_path)
    back = load_dataset(tmp_path)
    assert len(back) == 3
    for a, b in zip(samples, back):
        np.testing.assert_array_equal(a.image.values, b.image.values)
        np.testing.assert_array_equal(a.normal.vectors, b.normal.vectors)
        np.testing.assert_array_equal(a.albedo.values, b.albedo.values)
        np.testing.assert_array_equal(a.mask.bits, b.mask.bits)
        np.testing.assert_array_equal(a.light.coeffs, b.light.coeffs)
        assert (a.family, a.supervision, a.light_class) == (b.family, b.supervision, b.light_class)


def test_save_dataset_byte_deterministic(tmp_path):
    samples = make_dataset(2, seed=8, family="synthetic", size=32)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    save_dataset(samples, d1)
    save_dataset(samples, d2)
    assert _dir_digest(d1) == _dir_digest(d2)


def test_load_rejects_foreign_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValueError, match="dataset"):
        load_dataset(tmp_path)


def test_benchmark_lights_are_valid():
    for light in benchmark_lights():
        assert light.coeffs.shape == (27,)
        # directional + ambient must light the probe scene visibly
        n, m = sample_shape(0, "synthetic", size=32)
        s = shading(n, light, m)
        assert s.values[m.bits].mean() > 0.2
