"""Pipeline configuration: defaults, key=value files and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .descriptors import DESCRIPTOR_KINDS

MODES = ("bow", "featureless", "codebookless", "combined")
MAPPERS = ("waldboost", "adaboost", "linear")
DESCRIPTOR_DEPTH = {"hog": 1, "hof": 2, "hof3d": 9}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # patches
    patch_size: int = 24
    stride: int = 0                 # 0: non-overlapping grid (stride = patch_size)
    temporal_depth: int = 1
    # labels
    descriptor: str = "hog"
    codebook_k: int = 100
    codebook_descriptors: int = 100_000
    kmeans_iters: int = 100
    codebookless_patches: int = 100_000
    # boosting
    stages: int = 1000
    subset_size: int = 0            # 0: round(sqrt(D))
    pool_fraction: float = 0.1
    trim_mass: float = 0.01
    max_depth: int = 15
    probe_depth: int = 3
    max_train_patches: int = 0      # 0: every training patch
    # early exit
    alpha: float = 0.97
    validation_fraction: float = 0.1
    stop_min_leaf: float = 0.15
    stop_survivors: bool = True
    gate_rule: str = "agree"        # "agree" or "max"
    mapper: str = "waldboost"
    # video classifier
    svm_lambda: float = 1e-4
    svm_epochs: int = 50
    modes: str = "bow,featureless,combined"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def effective_stride(self) -> int:
        return self.stride or self.patch_size

    @property
    def sample_dim(self) -> int:
        return self.patch_size * self.patch_size * self.temporal_depth

    @property
    def window_depth(self) -> int:
        """Frames spanned by one extraction window (boosting sample and descriptor)."""
        return max(self.temporal_depth, DESCRIPTOR_DEPTH[self.descriptor])

    @property
    def mode_list(self) -> list[str]:
        return [m.strip() for m in self.modes.split(",") if m.strip()]

    def validate(self) -> None:
        if self.descriptor not in DESCRIPTOR_KINDS:
            raise ConfigError(f"unknown descriptor {self.descriptor!r}")
        if self.temporal_depth not in (1, 9):
            raise ConfigError("temporal_depth must be 1 or 9")
        if self.descriptor == "hof3d" and self.temporal_depth != 9:
            raise ConfigError("hof3d descriptors need temporal_depth=9")
        if self.patch_size < 2 or self.patch_size % 2:
            raise ConfigError("patch_size must be an even number >= 2")
        if self.stride < 0:
            raise ConfigError("stride must be >= 0")
        if self.codebook_k < 2:
            raise ConfigError("codebook_k must be >= 2")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if not 0 < self.pool_fraction <= 1:
            raise ConfigError("pool_fraction must be in (0, 1]")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must be in [0, 1]")
        if self.gate_rule not in ("agree", "max"):
            raise ConfigError("gate_rule must be 'agree' or 'max'")
        if self.mapper not in MAPPERS:
            raise ConfigError(f"mapper must be one of {MAPPERS}")
        for m in self.mode_list:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())


def _coerce(name: str, raw, typ):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw.replace("_", ""))
        if typ is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def _types() -> dict:
    hints = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: hints[f.type] if isinstance(f.type, str) else f.type for f in fields(PipelineConfig)}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def make_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the key=value file at ``path``, then ``overrides``."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    types = _types()
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**{k: _coerce(k, v, types[k]) for k, v in values.items()})
