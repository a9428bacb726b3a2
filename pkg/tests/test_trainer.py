"""Trainer tests: composition rules, determinism, resume, divergence."""

import numpy as np
import pytest

from sfskit import autodiff as ad
from sfskit import datagen, nets, trainer
from sfskit.trainer import (
    PARADIGMS,
    StageReport,
    TrainConfig,
    TrainingDivergedError,
    mixed_batch_plan,
    restore_train_state,
    run_paradigm,
    save_training_checkpoint,
    train_stage_a,
    train_stage_c,
)
from sfskit.types import LossWeights

TINY = nets.NetConfig(input_size=32, width_scale=0.125, n_resblocks=2)


def _syn(n, seed=0, size=32):
    return datagen.make_dataset(n, seed=seed, family="synthetic", size=size)


def _labeled(model, n, seed=1, size=32):
    pool = datagen.make_dataset(n, seed=seed, family="pseudo-real", size=size)
    return datagen.pseudo_label(model, pool)


# ---------------------------------------------------------------------------
# config


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mix_ratio=-0.1),
        dict(mix_ratio=1.5),
        dict(batch_size=0),
        dict(lr=0.0),
        dict(epochs_a=-1),
        dict(checkpoint_every=-2),
    ],
)
def test_bad_config_rejected(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_zero_supervision_refused():
    cfg = TrainConfig(weights=LossWeights(0.5, 0.0, 0.0, 0.0), epochs_a=1)
    model = nets.build_model("skipnet", TINY, seed=0)
    with pytest.raises(ValueError, match="trivial"):
        train_stage_a(model, _syn(4), cfg)
    with pytest.raises(ValueError, match="trivial"):
        train_stage_c(model, _syn(4), _syn(4), cfg)
    # zero steps with the same weights is fine
    rep = train_stage_a(model, _syn(4), TrainConfig(weights=LossWeights(0.5, 0, 0, 0)), epochs=0)
    assert rep.epochs == 0


# ---------------------------------------------------------------------------
# stage A


def test_zero_epochs_leave_parameters_untouched():
    model = nets.build_model("skipnet", TINY, seed=3)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    rep = train_stage_a(model, _syn(4), TrainConfig(), epochs=0)
    assert rep.epochs == 0 and rep.curves["total"] == [] and rep.final_eval == {}
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_stage_a_needs_data():
    model = nets.build_model("skipnet", TINY, seed=3)
    with pytest.raises(ValueError, match="sample"):
        train_stage_a(model, [], TrainConfig(epochs_a=1))


def test_fixed_seed_reproducible():
    data = _syn(8)
    cfg = TrainConfig(batch_size=4, epochs_a=3, seed=11)
    reps = []
    for _ in range(2):
        model = nets.build_model("skipnet", TINY, seed=7)
        reps.append(train_stage_a(model, data, cfg))
    assert reps[0].curves == reps[1].curves


def test_loss_curve_decreases():
    data = _syn(16)
    cfg = TrainConfig(batch_size=4, epochs_a=10, seed=0)
    model = nets.build_model("skipnet", TINY, seed=1)
    rep = train_stage_a(model, data, cfg)
    tot = rep.curves["total"]
    assert len(tot) == 10
    assert np.mean(tot[-3:]) < 0.75 * np.mean(tot[:3])
    assert rep.final_eval["total"] == tot[-1]


def test_small_dataset_trains_as_one_batch():
    model = nets.build_model("skipnet", TINY, seed=2)
    before = model.state_dict()["enc1.w"].copy()
    rep = train_stage_a(model, _syn(2), TrainConfig(batch_size=16, epochs_a=1))
    assert rep.epochs == 1
    assert not np.array_equal(model.state_dict()["enc1.w"], before)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_divergence_aborts_with_snapshot():
    model = nets.build_model("skipnet", TINY, seed=4)
    cfg = TrainConfig(batch_size=4, epochs_a=5, lr=1e12)
    with pytest.raises(TrainingDivergedError) as err:
        train_stage_a(model, _syn(8), cfg)
    snap = err.value.snapshot
    assert {"stage", "epoch", "step", "terms"} <= set(snap)
    assert not all(np.isfinite(v) for v in snap["terms"].values())


# ---------------------------------------------------------------------------
# batch composition


@pytest.mark.parametrize("mix,expect_pr", [(0.0, 0), (0.25, 4), (0.5, 8), (1.0, 16)])
def test_mixed_batches_honor_ratio_exactly(mix, expect_pr):
    rng = np.random.default_rng(0)
    plan = mixed_batch_plan(64, 64, 16, mix, rng)
    assert plan
    for sy, pr in plan:
        assert len(pr) == expect_pr and len(sy) == 16 - expect_pr
    # no index reused within an epoch
    all_pr = np.concatenate([pr for _, pr in plan]) if expect_pr else []
    assert len(all_pr) == len(set(all_pr))


def test_mixed_batches_reject_small_pools():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="pseudo"):
        mixed_batch_plan(64, 4, 16, 0.5, rng)
    with pytest.raises(ValueError, match="synthetic"):
        mixed_batch_plan(4, 64, 16, 0.5, rng)


def test_mix_zero_is_synthetic_only():
    rng = np.random.default_rng(1)
    plan = mixed_batch_plan(20, 0, 4, 0.0, rng)
    assert len(plan) == 5
    assert all(len(pr) == 0 for _, pr in plan)


def test_recon_term_targets_original_image():
    # corrupting the stored albedo label must move the albedo term only
    model = nets.build_model("skipnet", TINY, seed=5)
    samples = _labeled(model, 3)
    batch = trainer._stack_batch(samples, [0, 1, 2])
    terms, out = trainer._loss_terms(model, batch, train=False)

    corrupted = dict(batch)
    corrupted["albedo"] = np.clip(batch["albedo"] + 0.3, 0.0, 1.0)
    terms2, _ = trainer._loss_terms(model, corrupted, train=False)
    assert float(terms2["recon"].data) == float(terms["recon"].data)
    assert float(terms2["normal"].data) == float(terms["normal"].data)
    assert float(terms2["albedo"].data) != float(terms["albedo"].data)

    # and the recon term really is L1(albedo * shading, image) over the mask
    n_hat = out.normal.data / np.maximum(
        np.sqrt((out.normal.data**2).sum(axis=1, keepdims=True)), 1e-6
    )
    shading = ad.sh_shading(ad.Tensor(n_hat), ad.Tensor(out.light.data)).data
    recon = out.albedo.data * shading
    m = np.broadcast_to(batch["mask"], recon.shape)
    expect = np.abs((recon - batch["image"]) * m).sum() / m.sum()
    assert abs(float(terms["recon"].data) - expect) < 1e-6


# ---------------------------------------------------------------------------
# stage C


def test_stage_c_trains_and_reports():
    labeler = nets.build_model("skipnet", TINY, seed=6)
    cfg = TrainConfig(batch_size=4, epochs_a=2, epochs_c=3, seed=8)
    syn = _syn(8)
    train_stage_a(labeler, syn, cfg)
    labeled = _labeled(labeler, 8)
    model = nets.build_model("sfsnet", TINY, seed=9)
    rep = train_stage_c(model, syn, labeled, cfg)
    assert rep.epochs == 3 and len(rep.curves["total"]) == 3
    assert all(np.isfinite(v) for v in rep.curves["total"])


def test_stage_c_rejects_undersized_pools():
    model = nets.build_model("sfsnet", TINY, seed=9)
    cfg = TrainConfig(batch_size=16, epochs_c=1, mix_ratio=0.5)
    with pytest.raises(ValueError):
        train_stage_c(model, _syn(4), _syn(4), cfg)


# ---------------------------------------------------------------------------
# checkpoint resume


def test_resume_reproduces_trajectory_bitwise(tmp_path):
    data = _syn(10)
    cfg = TrainConfig(batch_size=4, epochs_a=4, seed=2)

    straight = nets.build_model("skipnet", TINY, seed=9)
    rep_full = train_stage_a(straight, data, cfg)

    half = nets.build_model("skipnet", TINY, seed=9)
    train_stage_a(half, data, cfg, epochs=2)
    path = tmp_path / "mid.sfsckpt"
    save_training_checkpoint(path, half, epoch=2)

    resumed, leftovers = nets.load_model(path)
    assert restore_train_state(resumed, leftovers) == 2
    rep_tail = train_stage_a(resumed, data, cfg, start_epoch=2)

    assert rep_full.curves["total"][2:] == rep_tail.curves["total"]
    a, b = straight.state_dict(), resumed.state_dict()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_checkpoint_cadence_writes_files(tmp_path):
    cfg = TrainConfig(
        batch_size=4, epochs_a=4, seed=0, checkpoint_every=2, checkpoint_dir=str(tmp_path)
    )
    model = nets.build_model("skipnet", TINY, seed=1)
    train_stage_a(model, _syn(4), cfg)
    assert (tmp_path / "stage_a_0002.sfsckpt").exists()
    assert (tmp_path / "stage_a_0004.sfsckpt").exists()


# ---------------------------------------------------------------------------
# evaluation and paradigms


def test_evaluate_lighting_needs_labels():
    model = nets.build_model("skipnet", TINY, seed=0)
    plain = _syn(2)
    with pytest.raises(ValueError, match="light_class"):
        trainer.evaluate_lighting(model, plain, plain)


def test_evaluate_decomposition_matches_manual_recompute():
    model = nets.build_model("sfsnet", TINY, seed=3)
    samples = datagen.make_dataset(4, seed=5, family="pseudo-real", size=32)
    recon, normals = trainer.evaluate_decomposition(model, samples)

    from sfskit import photometrics, shcore

    abs_sum = sq_sum = count = 0.0
    degs = []
    for s, dec in zip(samples, trainer.decompose_dataset(model, samples)):
        pred = shcore.render(dec.normal, dec.albedo, dec.light, s.mask)
        d = (pred.values[s.mask.bits].astype(np.float64) - s.image.values[s.mask.bits]) * 255.0
        abs_sum += np.abs(d).sum()
        sq_sum += (d * d).sum()
        count += d.size
        degs.append(photometrics.angular_errors(dec.normal, s.normal, s.mask))
    assert recon.mae == pytest.approx(abs_sum / count, abs=1e-12)
    assert recon.rmse == pytest.approx(np.sqrt(sq_sum / count), abs=1e-12)
    assert normals.mean_deg == pytest.approx(np.concatenate(degs).mean(), abs=1e-12)


def test_run_paradigm_rejects_unknown_name():
    with pytest.raises(ValueError, match="paradigm"):
        run_paradigm("sfsnet-mega", TrainConfig())


def test_run_paradigm_deterministic_rows():
    kw = dict(
        n_synthetic=8, n_pseudo_real=8, n_holdout=4, bench_shapes=4,
        bench_train_shapes=3, data_seed=0,
    )
    cfg = TrainConfig(batch_size=4, epochs_a=1, epochs_c=1, seed=3)
    rows = []
    for _ in range(2):
        rep = run_paradigm("sfsnet-full", cfg, TINY, **kw)
        assert [s.stage for s in rep.stages] == ["stage-a", "stage-c"]
        rows.append(rep.row())
    assert rows[0] == rows[1]
    assert set(rows[0]) == {"paradigm", "mae", "rmse", "top1", "top2", "top3"}


def test_workspace_shares_stage_a_and_guards_settings(tmp_path, monkeypatch):
    kw = dict(
        n_synthetic=8, n_pseudo_real=8, n_holdout=4, bench_shapes=4,
        bench_train_shapes=3, data_seed=0, workspace=tmp_path,
    )
    cfg = TrainConfig(batch_size=4, epochs_a=1, epochs_c=1, seed=3)
    first = run_paradigm("skipnet-syn", cfg, TINY, **kw)
    assert first.stages[0].stage == "stage-a"
    ckpt_bytes = (tmp_path / "skipnet_a.sfsckpt").read_bytes()

    # the warm run must reuse the cached stage-A model, not retrain it,
    # and must report the cold run's curves
    monkeypatch.setattr(
        trainer, "train_stage_a", _refuse_to_train, raising=True
    )
    second = run_paradigm("sfsnet-full", cfg, TINY, **kw)
    assert second.stages[0].stage == "stage-a"
    assert second.stages[0].curves == first.stages[0].curves
    assert second.stages[0].final_eval == first.stages[0].final_eval
    assert (tmp_path / "skipnet_a.sfsckpt").read_bytes() == ckpt_bytes
    assert (tmp_path / "data" / "pseudo-labels" / "manifest.json").exists()
    with pytest.raises(ValueError, match="workspace"):
        run_paradigm("skipnet-syn", TrainConfig(batch_size=8, epochs_a=1), TINY, **kw)


def _refuse_to_train(*args, **kwargs):
    raise AssertionError("stage A retrained despite a warm workspace")


def test_paradigm_names_cover_tables():
    assert PARADIGMS == ("skipnet-syn", "sfsnet-syn", "sfsnet-full", "skipnet-plus-full")
