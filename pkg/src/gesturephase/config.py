"""Run configuration: one JSON file covering windowing, model dims,
training, fold count, variants and the synthetic generator.

Unknown keys are rejected so typos fail loudly; the canonical hash of
the full configuration is stamped into every output artifact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ModelConfig, ModelVariant, all_variants
from .pipeline import TrainConfig
from .pose import DEFAULT_FPS
from .synth import SynthConfig
from .util import load_json, stable_hash
from . import windows as W


@dataclass(frozen=True)
class WindowSettings:
    window_len: int = W.DEFAULT_WINDOW_LEN
    stride: int = W.DEFAULT_STRIDE
    seq_len: int = W.DEFAULT_SEQ_LEN
    normalize: bool = True
    center: tuple[int, ...] = (1, 2)
    scale_pair: tuple[int, int] = (1, 2)
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))
        object.__setattr__(self, "scale_pair", tuple(int(c) for c in self.scale_pair))
        if self.window_len < 1 or self.stride < 1 or self.seq_len < 1:
            raise ConfigError("window_len, stride and seq_len must be positive")
        if len(self.center) not in (1, 2) or len(self.scale_pair) != 2:
            raise ConfigError("center takes 1 or 2 joint indices, scale_pair exactly 2")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    folds: int = 5
    window: WindowSettings = field(default_factory=WindowSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: tuple[ModelVariant, ...] = (ModelVariant(),)
    synth: SynthConfig = field(default_factory=SynthConfig)
    graph_file: str | None = None
    selection_file: str | None = None

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("folds", self.folds)):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        if self.window.seq_len > self.model.max_len:
            raise ConfigError(
                f"seq_len {self.window.seq_len} exceeds encoder max_len "
                f"{self.model.max_len}"
            )


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {where!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in section {where!r}")
    kwargs = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad section {where!r}: {e}") from e


def _build_variants(raw) -> tuple[ModelVariant, ...]:
    if raw == "all":
        return tuple(all_variants())
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError('"variants" must be "all" or a non-empty list')
    out = []
    for i, spec in enumerate(raw):
        out.append(_build(ModelVariant, spec, f"variants[{i}]"))
    seen = set()
    for v in out:
        if v in seen:
            raise ConfigError(f"duplicate variant {v.slug()}")
        seen.add(v)
    return tuple(out)


_SECTIONS = {
    "window": (WindowSettings, "window"),
    "model": (ModelConfig, "model"),
    "train": (TrainConfig, "train"),
    "synth": (SynthConfig, "synth"),
}


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be an object")
    known = {"seed", "folds", "variants", "graph_file", "selection_file",
             *_SECTIONS}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]!r}")
    kwargs = {}
    for key in ("seed", "folds", "graph_file", "selection_file"):
        if key in raw:
            kwargs[key] = raw[key]
    for key, (cls, where) in _SECTIONS.items():
        if key in raw:
            kwargs[key] = _build(cls, raw[key], where)
    if "variants" in raw:
        kwargs["variants"] = _build_variants(raw["variants"])
    try:
        return RunConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad configuration: {e}") from e


def load_run_config(path=None) -> RunConfig:
    """Read a JSON config file; None gives the built-in defaults."""
    if path is None:
        return RunConfig()
    try:
        raw = load_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except ValueError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: RunConfig) -> str:
    return stable_hash(config_to_dict(cfg))
