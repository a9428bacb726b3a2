"""Run configuration: INI file plus command-line overrides.

A run is reproducible from one archived file, so every key has a default,
unknown keys are hard errors, and the fully resolved configuration is
written next to the run's outputs.

Sections and keys:

  [net]    input_size, width_scale, n_resblocks
  [train]  batch_size, mix_ratio, lr, epochs_a, epochs_c, seed,
           checkpoint_every
  [loss]   w_recon, w_normal, w_albedo, w_light
  [data]   n_synthetic, n_pseudo_real, n_holdout, bench_shapes,
           bench_train_shapes, data_seed, noise_sigma

Overrides use dotted form, e.g. --set train.lr=0.0005.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import nets, trainer
from .types import LossWeights


@dataclass
class DataParams:
    n_synthetic: int = 2000
    n_pseudo_real: int = 2000
    n_holdout: int = 200
    bench_shapes: int = 40
    bench_train_shapes: int = 30
    data_seed: int = 0
    noise_sigma: float = 0.01


@dataclass
class RunConfig:
    net: nets.NetConfig = field(default_factory=nets.NetConfig)
    train: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)
    data: DataParams = field(default_factory=DataParams)


def _section_values(rc: RunConfig) -> dict[str, dict[str, object]]:
    w = rc.train.weights
    return {
        "net": {
            "input_size": rc.net.input_size,
            "width_scale": rc.net.width_scale,
            "n_resblocks": rc.net.n_resblocks,
        },
        "train": {
            "batch_size": rc.train.batch_size,
            "mix_ratio": rc.train.mix_ratio,
            "lr": rc.train.lr,
            "epochs_a": rc.train.epochs_a,
            "epochs_c": rc.train.epochs_c,
            "seed": rc.train.seed,
            "checkpoint_every": rc.train.checkpoint_every,
        },
        "loss": {
            "w_recon": w.w_recon,
            "w_normal": w.w_normal,
            "w_albedo": w.w_albedo,
            "w_light": w.w_light,
        },
        "data": {f.name: getattr(rc.data, f.name) for f in fields(DataParams)},
    }


_DEFAULTS = _section_values(RunConfig())
_TYPES = {
    (sec, key): type(val) for sec, keys in _DEFAULTS.items() for key, val in keys.items()
}


def parse_overrides(pairs) -> dict[tuple[str, str], str]:
    """--set items of the form section.key=value, validated against the schema."""
    out = {}
    for raw in pairs:
        head, eq, value = raw.partition("=")
        section, dot, key = head.partition(".")
        if not eq or not dot or not section or not key:
            raise ValueError(f"override {raw!r} is not of the form section.key=value")
        if (section, key) not in _TYPES:
            raise ValueError(f"unknown configuration key [{section}] {key}")
        out[(section, key)] = value
    return out


def _coerce(section: str, key: str, value: str):
    kind = _TYPES[(section, key)]
    try:
        return kind(value)
    except ValueError:
        raise ValueError(
            f"[{section}] {key} expects {kind.__name__}, got {value!r}"
        ) from None


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the INI file, then the overrides; unknown keys fail."""
    values = {sec: dict(keys) for sec, keys in _DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        text = Path(path).read_text(encoding="utf-8")
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as err:
            raise ValueError(f"cannot parse {path}: {err}") from None
        for section in parser.sections():
            if section not in values:
                raise ValueError(f"unknown configuration section [{section}] in {path}")
            for key, value in parser.items(section):
                if (section, key) not in _TYPES:
                    raise ValueError(f"unknown configuration key [{section}] {key} in {path}")
                values[section][key] = _coerce(section, key, value)
    for (section, key), value in parse_overrides(overrides).items():
        values[section][key] = _coerce(section, key, value)

    net = nets.NetConfig(**values["net"])
    weights = LossWeights(**values["loss"])
    train = trainer.TrainConfig(weights=weights, **values["train"])
    data = DataParams(**values["data"])
    return RunConfig(net=net, train=train, data=data)


def resolved_config_text(rc: RunConfig) -> str:
    """Deterministic INI rendering of every resolved value."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in _section_values(rc).items():
        parser[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in keys.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def write_resolved_config(rc: RunConfig, path) -> None:
    Path(path).write_text(resolved_config_text(rc), encoding="utf-8")
