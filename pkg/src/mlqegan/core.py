"""Shared domain types, run configuration and resolution-chain arithmetic."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import tomli_w

SUPPORTED_BIT_DEPTHS = (8, 16)


class ConfigError(ValueError):
    """Raised when a RunConfig violates one of its invariants."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a (channels, height, width) unit-range image and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    c, h, w = arr.shape
    if c < 1 or h < 1 or w < 1:
        raise ValueError(f"{name} has empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values outside [0, 1]")
    return arr


def to_unit_range(raw: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    """Map integer pixels in [0, 2^b - 1] linearly onto [0, 1]."""
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    raw = np.asarray(raw)
    top = 2**bit_depth - 1
    if raw.size and (raw.min() < 0 or raw.max() > top):
        raise ValueError(f"pixel values outside [0, {top}]")
    return raw.astype(np.float64) / top


def from_unit_range(img: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    top = 2**bit_depth - 1
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return np.round(np.clip(img, 0.0, 1.0) * top).astype(dtype)


@dataclass(frozen=True)
class QualityLevel:
    index: int
    resolution_scale: int


@dataclass
class RawPair:
    """One training pair: lowest-quality image and its level-j counterpart."""

    low: np.ndarray
    high: np.ndarray
    level_j: int
    id: str = ""

    def __post_init__(self):
        if self.level_j < 2:
            raise ValueError(f"level_j must be >= 2, got {self.level_j}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# per-level (gen blocks, gen channels); levels beyond the table keep shrinking
_GEN_SCHEDULE = [(8, 64), (4, 48), (2, 32)]
_DISC_SCHEDULE = [(4, 32), (3, 32), (2, 32)]


def default_generator_capacity(level: int) -> tuple[int, int]:
    if level <= len(_GEN_SCHEDULE):
        return _GEN_SCHEDULE[level - 1]
    extra = level - len(_GEN_SCHEDULE)
    return 1, max(32 - 8 * extra, 8)


def default_discriminator_capacity(level: int) -> tuple[int, int]:
    if level <= len(_DISC_SCHEDULE):
        return _DISC_SCHEDULE[level - 1]
    return 2, 32


def default_lambda(levels: int) -> list[float]:
    # reported tuned values: L=2 -> [1e-4, 1]; L=3 -> [1e-4, 1e-4, 1]
    return [1e-4] * (levels - 1) + [1.0]


@dataclass
class SmokeConfig:
    airlight: float = 1.0
    density_k: float = 1.2
    noise_octaves: int = 4
    noise_base_period: int = 32


@dataclass
class DatasetConfig:
    base_h: int = 64
    base_w: int = 64
    # raw-pair counts for quality levels j = 2 .. L+1; empty -> defaults
    level_counts: list[int] = field(default_factory=list)
    val_count: int = 32
    test_count: int = 128
    source_size: int = 512
    smoke: bool = False


@dataclass
class CapacityConfig:
    gen_blocks: list[int] = field(default_factory=list)
    gen_channels: list[int] = field(default_factory=list)
    disc_blocks: list[int] = field(default_factory=list)
    disc_channels: list[int] = field(default_factory=list)
    disc_hidden: int = 128


@dataclass
class RunConfig:
    levels: int = 2
    per_level_scale: list[int] = field(default_factory=list)
    lambda_: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    initial_lr: float = 0.002
    epochs: int = 500
    init_epoch_fraction: float = 0.1
    batch_size: int = 8
    seed: int = 0
    adversarial_mode: str = "non_saturating"
    image_channels: int = 3
    checkpoint_every: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    capacity: CapacityConfig = field(default_factory=CapacityConfig)
    smoke: SmokeConfig = field(default_factory=SmokeConfig)

    # -- derived quantities -------------------------------------------------

    @property
    def total_scale(self) -> int:
        return math.prod(self.per_level_scale)

    def resolution_scale(self, index: int) -> int:
        """Multiplier of quality level ``index`` (1..L+1) over the lowest-quality resolution."""
        if not 1 <= index <= self.levels + 1:
            raise ValueError(f"quality level {index} outside [1, {self.levels + 1}]")
        return math.prod(self.per_level_scale[: index - 1])

    def quality_levels(self) -> list[QualityLevel]:
        return [QualityLevel(i, self.resolution_scale(i)) for i in range(1, self.levels + 2)]

    def init_epochs(self) -> int:
        return max(1, round(self.epochs * self.init_epoch_fraction))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    def hash(self) -> str:
        """Digest of the fields that determine model structure and training semantics."""
        keys = {
            "levels": self.levels,
            "per_level_scale": self.per_level_scale,
            "image_channels": self.image_channels,
            "capacity": asdict(self.capacity),
        }
        blob = json.dumps(keys, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {"dataset": DatasetConfig, "capacity": CapacityConfig, "smoke": SmokeConfig}


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    data = copy.deepcopy(data)
    kwargs: dict[str, Any] = {}
    known = {f.name for f in fields(RunConfig)}
    for key, value in data.items():
        name = "lambda_" if key == "lambda" else key
        if name in _SECTIONS:
            section = _SECTIONS[name]
            allowed = {f.name for f in fields(section)}
            unknown = set(value) - allowed
            if unknown:
                raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
            kwargs[name] = section(**value)
        elif name in known:
            kwargs[name] = value
        else:
            raise ConfigError(key, "unknown key")
    return RunConfig(**kwargs)


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    if overrides:
        data = merge_dicts(data, overrides)
    return validate_config(config_from_dict(data))


def merge_dicts(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_dicts(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Fill defaults and check invariants; returns a new config.

    Raises ConfigError naming the first violated field.
    """
    cfg = copy.deepcopy(cfg)
    L = cfg.levels
    _require(isinstance(L, int) and L >= 1, "levels", "must be a positive integer")

    if not cfg.per_level_scale:
        cfg.per_level_scale = [2] * L
    _require(len(cfg.per_level_scale) == L, "per_level_scale", f"length {len(cfg.per_level_scale)} != levels {L}")
    for i, s in enumerate(cfg.per_level_scale):
        _require(isinstance(s, int) and s >= 2, f"per_level_scale[{i}]", "scale factors must be integers >= 2")
        _require(s & (s - 1) == 0, f"per_level_scale[{i}]", "sub-pixel upsampling needs a power of two")

    if not cfg.lambda_:
        cfg.lambda_ = default_lambda(L)
    if not cfg.alpha:
        cfg.alpha = [3e-5] * L
    _require(len(cfg.lambda_) == L, "lambda", f"length {len(cfg.lambda_)} != levels {L}")
    _require(len(cfg.alpha) == L, "alpha", f"length {len(cfg.alpha)} != levels {L}")
    for name, seq in (("lambda", cfg.lambda_), ("alpha", cfg.alpha)):
        for i, v in enumerate(seq):
            _require(math.isfinite(v) and v >= 0, f"{name}[{i}]", "weights must be finite and >= 0")
    cfg.lambda_ = [float(v) for v in cfg.lambda_]
    cfg.alpha = [float(v) for v in cfg.alpha]

    _require(0 <= cfg.adam_beta1 < 1, "adam_beta1", "must lie in [0, 1)")
    _require(0 <= cfg.adam_beta2 < 1, "adam_beta2", "must lie in [0, 1)")
    _require(cfg.adam_eps > 0, "adam_eps", "must be > 0")
    _require(cfg.initial_lr > 0, "initial_lr", "must be > 0")
    _require(isinstance(cfg.epochs, int) and cfg.epochs >= 1, "epochs", "must be a positive integer")
    _require(0 <= cfg.init_epoch_fraction <= 1, "init_epoch_fraction", "must lie in [0, 1]")
    _require(isinstance(cfg.batch_size, int) and cfg.batch_size >= 1, "batch_size", "must be a positive integer")
    _require(cfg.adversarial_mode in ("saturating", "non_saturating"), "adversarial_mode",
             "must be 'saturating' or 'non_saturating'")
    _require(cfg.image_channels in (1, 3), "image_channels", "must be 1 or 3")
    _require(cfg.checkpoint_every >= 0, "checkpoint_every", "must be >= 0")

    ds = cfg.dataset
    _require(ds.base_h >= 1 and ds.base_w >= 1, "dataset.base_h", "base dims must be >= 1")
    if not ds.level_counts:
        ds.level_counts = [512] * (L - 1) + [128]
    _require(len(ds.level_counts) == L, "dataset.level_counts", f"length {len(ds.level_counts)} != levels {L}")
    for i, n in enumerate(ds.level_counts):
        _require(n >= 0, f"dataset.level_counts[{i}]", "counts must be >= 0")
    _require(ds.val_count >= 0 and ds.test_count >= 0, "dataset.test_count", "counts must be >= 0")

    cap = cfg.capacity
    if not cap.gen_blocks:
        cap.gen_blocks = [default_generator_capacity(l)[0] for l in range(1, L + 1)]
    if not cap.gen_channels:
        cap.gen_channels = [default_generator_capacity(l)[1] for l in range(1, L + 1)]
    if not cap.disc_blocks:
        cap.disc_blocks = [default_discriminator_capacity(l)[0] for l in range(1, L + 1)]
    if not cap.disc_channels:
        cap.disc_channels = [default_discriminator_capacity(l)[1] for l in range(1, L + 1)]
    for name in ("gen_blocks", "gen_channels", "disc_blocks", "disc_channels"):
        seq = getattr(cap, name)
        _require(len(seq) == L, f"capacity.{name}", f"length {len(seq)} != levels {L}")
    for i in range(L):
        _require(cap.gen_blocks[i] >= 0, f"capacity.gen_blocks[{i}]", "must be >= 0")
        _require(cap.gen_channels[i] >= 1, f"capacity.gen_channels[{i}]", "must be >= 1")
        _require(cap.disc_blocks[i] >= 1, f"capacity.disc_blocks[{i}]", "must be >= 1")
        _require(cap.disc_channels[i] >= 1, f"capacity.disc_channels[{i}]", "must be >= 1")
    _require(cap.disc_hidden >= 1, "capacity.disc_hidden", "must be >= 1")

    sm = cfg.smoke
    _require(0 <= sm.airlight <= 1, "smoke.airlight", "must lie in [0, 1]")
    _require(sm.density_k > 0, "smoke.density_k", "must be > 0")
    _require(sm.noise_octaves >= 1, "smoke.noise_octaves", "must be >= 1")
    _require(sm.noise_base_period >= 1, "smoke.noise_base_period", "must be >= 1")
    return cfg


def resolution_chain(cfg: RunConfig, base_h: int, base_w: int) -> list[tuple[int, int]]:
    """Spatial dims at every quality level 1..L+1, starting from the lowest-quality dims."""
    if base_h < 1 or base_w < 1:
        raise ValueError("base dims must be >= 1")
    return [(base_h * cfg.resolution_scale(m), base_w * cfg.resolution_scale(m))
            for m in range(1, cfg.levels + 2)]


def baseline_config(cfg: RunConfig) -> RunConfig:
    """Single-level (QEGAN) counterpart of a multilevel config: one level with the full scale factor."""
    base = copy.deepcopy(cfg)
    base.levels = 1
    base.per_level_scale = [cfg.total_scale]
    base.lambda_ = [1.0]
    base.alpha = [cfg.alpha[-1]]
    base.dataset.level_counts = [cfg.dataset.level_counts[-1]]
    base.capacity = CapacityConfig(
        gen_blocks=[cfg.capacity.gen_blocks[0]],
        gen_channels=[cfg.capacity.gen_channels[0]],
        disc_blocks=[cfg.capacity.disc_blocks[-1]],
        disc_channels=[cfg.capacity.disc_channels[-1]],
        disc_hidden=cfg.capacity.disc_hidden,
    )
    return validate_config(base)


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from arbitrary labelled parts (independent of PYTHONHASHSEED)."""
    blob = "/".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1
