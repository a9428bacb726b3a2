"""Run-configuration tests: defaults, file parsing, overrides, round trip."""

import pytest

from sfskit import nets, runconfig, trainer


def test_defaults_match_library_defaults():
    rc = runconfig.load_run_config()
    assert rc.net == nets.NetConfig()
    assert rc.train == trainer.TrainConfig()
    assert rc.data == runconfig.DataParams()


def test_file_values_applied(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[net]\nwidth_scale = 0.25\n\n"
        "[train]\nlr = 0.0005\nepochs_a = 3\n\n"
        "[loss]\nw_light = 0.2\n\n"
        "[data]\nn_synthetic = 50\nnoise_sigma = 0.02\n"
    )
    rc = runconfig.load_run_config(path)
    assert rc.net.width_scale == 0.25
    assert rc.net.input_size == 64  # untouched default
    assert rc.train.lr == 0.0005
    assert rc.train.epochs_a == 3
    assert rc.train.weights.w_light == 0.2
    assert rc.data.n_synthetic == 50
    assert rc.data.noise_sigma == 0.02


@pytest.mark.parametrize(
    "text,match",
    [
        ("[extras]\nx = 1\n", "unknown configuration section"),
        ("[train]\nlearning_rate = 0.1\n", "unknown configuration key"),
        ("[train]\nlr = fast\n", "expects float"),
        ("[train]\nbatch_size = 4.5\n", "expects int"),
        ("not an ini file", "cannot parse"),
    ],
)
def test_bad_files_rejected(tmp_path, text, match):
    path = tmp_path / "run.ini"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        runconfig.load_run_config(path)


def test_overrides_apply_and_win_over_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[train]\nlr = 0.5\n")
    rc = runconfig.load_run_config(path, overrides=["train.lr=0.25", "net.n_resblocks=2"])
    assert rc.train.lr == 0.25
    assert rc.net.n_resblocks == 2


@pytest.mark.parametrize(
    "item,match",
    [
        ("train.lr", "not of the form"),
        ("lr=0.1", "not of the form"),
        ("=0.1", "not of the form"),
        ("nope.lr=0.1", "unknown configuration key"),
        ("train.nope=0.1", "unknown configuration key"),
        ("train.lr=fast", "expects float"),
    ],
)
def test_bad_overrides_rejected(item, match):
    with pytest.raises(ValueError, match=match):
        runconfig.load_run_config(overrides=[item])


def test_dataclass_validation_still_runs():
    with pytest.raises(ValueError, match="mix_ratio"):
        runconfig.load_run_config(overrides=["train.mix_ratio=1.5"])


def test_resolved_text_round_trips(tmp_path):
    rc = runconfig.load_run_config(
        overrides=["train.lr=3e-07", "net.width_scale=0.125", "data.noise_sigma=0.031"]
    )
    path = tmp_path / "resolved.ini"
    runconfig.write_resolved_config(rc, path)
    assert runconfig.load_run_config(path) == rc


def test_resolved_text_is_deterministic():
    rc = runconfig.RunConfig()
    assert runconfig.resolved_config_text(rc) == runconfig.resolved_config_text(rc)
    assert runconfig.resolved_config_text(rc).endswith("\n")


def test_every_schema_key_has_a_distinct_default_slot():
    # the schema covers exactly the dataclass fields it claims to
    rc = runconfig.RunConfig()
    sections = runconfig._section_values(rc)
    assert set(sections) == {"net", "train", "loss", "data"}
    assert set(sections["loss"]) == {"w_recon", "w_normal", "w_albedo", "w_light"}
    assert "checkpoint_dir" not in sections["train"]  # run-level path, not config
