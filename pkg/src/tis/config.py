"""Plain-text run configuration shared by every CLI subcommand.

A config file is `key = value` lines; `#` starts a comment.  Every key has
a documented default below and unknown keys are rejected, so a file only
states what it overrides.  One RunConfig fans out into the typed configs
of the individual modules.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .encoder import EncoderConfig
from .errors import ConfigError
from .interaction import SimulatorConfig
from .refiner import RefinerConfig
from .synthetic import SyntheticSpec
from .training import TrainConfig

ABLATIONS = ("none", "no-click-encoding", "no-label-copy")


def refiner_ckpt_name(ablation: str) -> str:
    """Artifact filename convention shared by the CLI and the service."""
    return "refiner.ckpt" if ablation == "none" else f"refiner_{ablation}.ckpt"


@dataclass(frozen=True)
class RunConfig:
    # data
    categories: int = 3
    extents: tuple[int, ...] = (32, 32, 32)
    noise: float = 0.25
    lesion_intensity: float = 1.3
    organ_radius: tuple[float, ...] = (7.0, 10.0)
    lesion_radius: tuple[float, ...] = (2.0, 3.5)
    train_cases: int = 50
    eval_cases: int = 13
    # encoder
    feature_width: int = 32
    stem_width: int = 8
    # refiner
    layers: int = 6
    heads: int = 2
    ffn_width: int = 64
    ce_hidden: int = 32
    window: tuple[int, ...] = (32, 32, 32)
    margin: int = 2
    # training
    encoder_epochs: int = 20
    refiner_epochs: int = 40
    lr: float = 1e-3
    decay_factor: float = 0.9
    decay_every: int = 10
    batch_size: int = 1
    clicks_min: int = 1
    clicks_max: int = 10
    # interaction
    disturbance: int = 10
    connectivity: int = 6
    eval_clicks: int = 10

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            extents=tuple(self.extents), categories=self.categories,
            noise=self.noise, lesion_intensity=self.lesion_intensity,
            organ_radius=tuple(self.organ_radius),
            lesion_radius=tuple(self.lesion_radius))

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(feature_width=self.feature_width,
                             categories=self.categories,
                             stem_width=self.stem_width)

    def refiner_config(self, ablation: str = "none") -> RefinerConfig:
        if ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation '{ablation}', expected one of {ABLATIONS}")
        return RefinerConfig(
            feature_width=self.feature_width, categories=self.categories,
            layers=self.layers, heads=self.heads, ffn_width=self.ffn_width,
            ce_hidden=self.ce_hidden, window=tuple(self.window),
            margin=self.margin,
            click_encoding=ablation != "no-click-encoding",
            label_copy=ablation != "no-label-copy")

    def encoder_train_config(self) -> TrainConfig:
        return self._train_config(self.encoder_epochs)

    def refiner_train_config(self) -> TrainConfig:
        return self._train_config(self.refiner_epochs)

    def _train_config(self, epochs: int) -> TrainConfig:
        return TrainConfig(
            epochs=epochs, lr=self.lr, decay_factor=self.decay_factor,
            decay_every=self.decay_every, batch_size=self.batch_size,
            clicks_min=self.clicks_min, clicks_max=self.clicks_max)

    def simulator_config(self) -> SimulatorConfig:
        return SimulatorConfig(disturbance=self.disturbance,
                               connectivity=self.connectivity)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, text: str, like):
    kind = type(like)
    try:
        if kind is tuple:
            parts = text.replace(",", " ").split()
            if not parts:
                raise ValueError("empty tuple")
            elem = type(like[0])
            return tuple(elem(p) for p in parts)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {text!r} ({exc})") from None
    raise ConfigError(f"key '{key}' has unsupported type {kind.__name__}")


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        if key in overrides:
            raise ConfigError(f"line {lineno}: duplicate config key '{key}'")
        overrides[key] = _parse_value(key, value.strip(), getattr(cfg, key))
    try:
        return replace(cfg, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    """Missing files propagate as OSError so callers can map them to I/O exits."""
    cfg = parse_config_text(Path(path).read_text())
    # construct every derived config now so value errors surface at load time
    cfg.synthetic_spec()
    cfg.encoder_config()
    for ablation in ABLATIONS:
        cfg.refiner_config(ablation)
    cfg.encoder_train_config()
    cfg.refiner_train_config()
    cfg.simulator_config()
    if cfg.train_cases < 1 or cfg.eval_cases < 1 or cfg.eval_clicks < 0:
        raise ConfigError("case counts must be positive and eval_clicks nonnegative")
    return cfg
