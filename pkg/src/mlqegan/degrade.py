"""Dataset fabrication: anti-aliased downsampling, smoke, patches and level expansion.

All images are float64 arrays shaped (C, H, W) with values in [0, 1].
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .core import RawPair, RunConfig, check_image


@dataclass
class SmokeParams:
    airlight: float = 1.0
    density_k: float = 1.2
    noise_octaves: int = 4
    noise_base_period: int = 32
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: RunConfig, seed: int) -> "SmokeParams":
        s = cfg.smoke
        return cls(s.airlight, s.density_k, s.noise_octaves, s.noise_base_period, seed)


# ---------------------------------------------------------------------------
# blur / resampling
# ---------------------------------------------------------------------------


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3 sigma)."""
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with half-sample symmetric (reflective) boundaries."""
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(img, k, axis=-1, mode="reflect")
    return ndimage.correlate1d(out, k, axis=-2, mode="reflect")


def antialias_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Blur with sigma = factor / 2, then keep every factor-th pixel (top-left phase)."""
    img = np.asarray(img, dtype=np.float64)
    if factor < 2 or int(factor) != factor:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    h, w = img.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"dims {h}x{w} not divisible by {factor}")
    blurred = gaussian_blur(img, 0.5 * factor)
    return np.clip(blurred[..., ::factor, ::factor], 0.0, 1.0)


def upsample_bicubic(img: np.ndarray, factor: int) -> np.ndarray:
    """Cubic-spline zoom used as a naive reference upsampler."""
    img = np.asarray(img, dtype=np.float64)
    out = ndimage.zoom(img, (1, factor, factor), order=3, mode="reflect", grid_mode=True)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# procedural noise
# ---------------------------------------------------------------------------


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(h: int, w: int, period: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth value noise in [0, 1]: random lattice every ``period`` px, quintic interpolation."""
    period = max(float(period), 1.0)
    gh = int(math.ceil(h / period)) + 2
    gw = int(math.ceil(w / period)) + 2
    grid = rng.random((gh, gw))
    y = np.arange(h) / period + rng.random()
    x = np.arange(w) / period + rng.random()
    yi, xi = np.floor(y).astype(int), np.floor(x).astype(int)
    fy, fx = _fade(y - yi)[:, None], _fade(x - xi)[None, :]
    v00 = grid[yi[:, None], xi[None, :]]
    v01 = grid[yi[:, None], xi[None, :] + 1]
    v10 = grid[yi[:, None] + 1, xi[None, :]]
    v11 = grid[yi[:, None] + 1, xi[None, :] + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def fbm_noise(h: int, w: int, octaves: int, base_period: float, rng: np.random.Generator,
              persistence: float = 0.5) -> np.ndarray:
    """Multi-octave value noise normalized by total amplitude, so it stays in [0, 1]."""
    total = np.zeros((h, w))
    amp, norm, period = 1.0, 0.0, float(base_period)
    for _ in range(octaves):
        total += amp * value_noise(h, w, period, rng)
        norm += amp
        amp *= persistence
        period /= 2.0
    return total / norm


# ---------------------------------------------------------------------------
# smoke
# ---------------------------------------------------------------------------


def smoke_transmission(h: int, w: int, p: SmokeParams) -> np.ndarray:
    if p.density_k <= 0:
        raise ValueError("density_k must be > 0")
    rng = np.random.default_rng(p.seed)
    d = fbm_noise(h, w, p.noise_octaves, p.noise_base_period, rng)
    return np.exp(-p.density_k * d)


def simulate_smoke(img: np.ndarray, p: SmokeParams) -> np.ndarray:
    """Haze model: t * img + (1 - t) * airlight with t = exp(-k d) over a procedural density d."""
    img = check_image(img)
    t = smoke_transmission(img.shape[1], img.shape[2], p)
    out = t[None] * img + (1.0 - t[None]) * p.airlight
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# patches and pairs
# ---------------------------------------------------------------------------


def extract_patches(img: np.ndarray, size: int, count: int, non_overlapping: bool = True,
                    seed: int = 0) -> list[np.ndarray]:
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds image {h}x{w}")
    rng = np.random.default_rng(seed)
    if non_overlapping:
        rows, cols = h // size, w // size
        if count > rows * cols:
            raise ValueError(f"cannot draw {count} non-overlapping {size}px patches from {rows * cols} cells")
        cells = rng.permutation(rows * cols)[:count]
        corners = [(int(c // cols) * size, int(c % cols) * size) for c in cells]
    else:
        ys = rng.integers(0, h - size + 1, size=count)
        xs = rng.integers(0, w - size + 1, size=count)
        corners = list(zip(ys.tolist(), xs.tolist()))
    return [img[..., y:y + size, x:x + size].copy() for y, x in corners]


def make_raw_pair(high: np.ndarray, level_j: int, cfg: RunConfig,
                  smoke: SmokeParams | None = None, id: str = "") -> RawPair:
    """Degrade (optionally smoke) and downsample a level-j image to the lowest quality level."""
    high = check_image(high, "high")
    factor = cfg.resolution_scale(level_j)
    src = simulate_smoke(high, smoke) if smoke is not None else high
    return RawPair(low=antialias_downsample(src, factor), high=high, level_j=level_j, id=id)


def make_pair_from_full(full: np.ndarray, level_j: int, cfg: RunConfig,
                        smoke: SmokeParams | None = None, id: str = "") -> RawPair:
    """Build a level-j pair from a full-resolution (level L+1) image.

    The low-quality input is always derived from the full-resolution image so that
    inputs share one distribution across levels; the target is the full image
    reduced to level j.
    """
    full = check_image(full, "full")
    top = cfg.levels + 1
    src = simulate_smoke(full, smoke) if smoke is not None else full
    low = antialias_downsample(src, cfg.resolution_scale(top))
    ratio = cfg.resolution_scale(top) // cfg.resolution_scale(level_j)
    high = full if ratio == 1 else antialias_downsample(full, ratio)
    return RawPair(low=low, high=high, level_j=level_j, id=id)


def expand_to_effective_set(pairs: Sequence[RawPair], cfg: RunConfig) -> dict[int, list[tuple[np.ndarray, np.ndarray]]]:
    """Expand each level-j pair into (low, target_m) instances for every m in [2, j].

    Returns a dict keyed by level m in [2, L+1]. Targets for m < j are anti-aliased
    reductions of the level-j image; for m == j the original array is reused.
    """
    streams: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {m: [] for m in range(2, cfg.levels + 2)}
    for pair in pairs:
        j = pair.level_j
        if not 2 <= j <= cfg.levels + 1:
            raise ValueError(f"pair level {j} outside [2, {cfg.levels + 1}]")
        for m in range(2, j + 1):
            if m == j:
                target = pair.high
            else:
                target = antialias_downsample(pair.high, cfg.resolution_scale(j) // cfg.resolution_scale(m))
            streams[m].append((pair.low, target))
    return streams


def effective_stream_sizes(level_counts: dict[int, int], levels: int) -> dict[int, int]:
    """Closed-form stream sizes: |stream m| = sum of raw-pair counts at levels j >= m."""
    return {m: sum(n for j, n in level_counts.items() if j >= m) for m in range(2, levels + 2)}


# ---------------------------------------------------------------------------
# procedural textures
# ---------------------------------------------------------------------------

_PALETTE = np.array([
    [0.85, 0.55, 0.70],  # eosin-like pink
    [0.45, 0.30, 0.60],  # hematoxylin purple
    [0.95, 0.85, 0.80],
    [0.70, 0.25, 0.30],  # tissue red
    [0.95, 0.75, 0.55],
])


def synth_texture_image(seed: int, h: int, w: int, strand_density: float = 1.5,
                        flat_fraction: float = 0.5) -> np.ndarray:
    """Deterministic RGB texture with structure at several scales.

    Layers: a colour field from multi-octave value noise, soft elliptical blobs with
    darker cores, thin curvilinear strands, and flat bright background regions
    covering roughly ``flat_fraction`` of the image.
    """
    if h < 64 or w < 64:
        raise ValueError("texture dims must be >= 64")
    rng = np.random.default_rng(seed)
    c0, c1 = _PALETTE[rng.choice(len(_PALETTE), size=2, replace=False)]
    mix = fbm_noise(h, w, 5, 64, rng)
    img = c0[:, None, None] * (1 - mix) + c1[:, None, None] * mix
    shade = fbm_noise(h, w, 3, 16, rng)
    img *= (0.8 + 0.4 * shade)[None]

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    n_blobs = int(rng.integers(20, 40) * h * w / (256 * 256))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(3, 12), rng.uniform(3, 12)
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / rx
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / ry
        r2 = u * u + v * v
        body = expit((1.0 - r2) * 8.0)
        core = expit((0.25 - r2) * 16.0)
        colour = _PALETTE[rng.integers(len(_PALETTE))]
        img = img * (1 - 0.7 * body[None]) + 0.7 * body[None] * colour[:, None, None]
        img *= (1 - 0.45 * core)[None]

    n_strands = int(rng.integers(6, 12) * strand_density * max(h, w) / 256)
    for _ in range(n_strands):
        # sinusoidal strand: distance to the curve v = a sin(b u + c) + d in a rotated frame
        theta = rng.uniform(0, np.pi)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        v = -xx * np.sin(theta) + yy * np.cos(theta)
        amp, freq, phase = rng.uniform(4, 20), rng.uniform(0.02, 0.08), rng.uniform(0, 2 * np.pi)
        offset = rng.uniform(v.min(), v.max())
        dist = np.abs(v - (amp * np.sin(freq * u + phase) + offset))
        width = rng.uniform(0.6, 1.5)
        line = np.exp(-0.5 * (dist / width) ** 2)
        strength = rng.uniform(0.3, 0.6)
        img *= (1 - strength * line)[None]

    # flat background ("lumen") regions bounded by soft edges
    field_ = fbm_noise(h, w, 3, 48, rng)
    cut = np.quantile(field_, 1.0 - flat_fraction)
    lumen = expit((field_ - cut) * 60.0)
    bright = np.array([0.94, 0.92, 0.95])
    img = img * (1 - lumen[None]) + bright[:, None, None] * lumen[None]
    return np.clip(img, 0.0, 1.0)
