"""RRMSE, multiscale SSIM and QILV.

ms_ssim and qilv work on luminance (Rec. 601 weights) for RGB inputs; rrmse uses
every channel. Local statistics use an 11x11 Gaussian window (sigma 1.5) over
the valid region only.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03
DATA_RANGE = 1.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
COLOR_HANDLING = "luminance-rec601 (ms_ssim, qilv); all channels (rrmse)"


class MetricError(ValueError):
    pass


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def luminance(img: np.ndarray) -> np.ndarray:
    """(C, H, W) or (H, W) image -> (H, W) luminance."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[0] == 1:
        return img[0]
    if img.shape[0] == 3:
        return np.tensordot(np.asarray(LUMA_WEIGHTS), img, axes=1)
    raise MetricError(f"unsupported channel count {img.shape[0]}")


def _filter_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Windowed weighted mean over every fully-contained window position."""
    k = win.shape[0]
    r = k // 2
    out = ndimage.correlate(x, win, mode="constant")
    return out[r:x.shape[0] - (k - 1 - r), r:x.shape[1] - (k - 1 - r)]


def rrmse(a_hq: np.ndarray, a_t: np.ndarray) -> float:
    a_hq = np.asarray(a_hq, dtype=np.float64)
    a_t = np.asarray(a_t, dtype=np.float64)
    if a_hq.shape != a_t.shape:
        raise MetricError(f"shape mismatch {a_hq.shape} vs {a_t.shape}")
    denom = np.linalg.norm(a_t.ravel())
    if denom == 0:
        raise MetricError("truth image has zero norm")
    return float(np.linalg.norm((a_hq - a_t).ravel()) / denom)


def _ssim_terms(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure term over valid windows."""
    c1, c2 = (K1 * DATA_RANGE) ** 2, (K2 * DATA_RANGE) ** 2
    mu_x, mu_y = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mu_x**2
    syy = _filter_valid(y * y, win) - mu_y**2
    sxy = _filter_valid(x * y, win) - mu_x * mu_y
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def n_scales(h: int, w: int, size: int = WINDOW_SIZE, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Largest scale count M <= 5 such that the coarsest image still fits one window."""
    m = 0
    while m < max_scales and min(h, w) // (2**m) >= size:
        m += 1
    return m


def downsample2(x: np.ndarray) -> np.ndarray:
    """2x2 box average; an odd trailing row/column is dropped."""
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multiscale SSIM; fewer than five scales on small images, with weights renormalized."""
    x, y = luminance(a), luminance(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch {x.shape} vs {y.shape}")
    m = n_scales(*x.shape)
    if m == 0:
        raise MetricError(f"image {x.shape} smaller than the {WINDOW_SIZE}px window")
    weights = np.asarray(MS_SSIM_WEIGHTS[:m])
    weights = weights / weights.sum()
    win = gaussian_window()
    result = 1.0
    for j in range(m):
        ssim_j, cs_j = _ssim_terms(x, y, win)
        term = ssim_j if j == m - 1 else cs_j
        result *= max(term, 0.0) ** weights[j]
        if j < m - 1:
            x, y = downsample2(x), downsample2(y)
    return float(result)


def local_variance(x: np.ndarray, win: np.ndarray | None = None) -> np.ndarray:
    win = gaussian_window() if win is None else win
    mu = _filter_valid(x, win)
    return _filter_valid(x * x, win) - mu**2


def qilv(a: np.ndarray, b: np.ndarray) -> float:
    x, y = luminance(a), luminance(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < WINDOW_SIZE:
        raise MetricError(f"image {x.shape} smaller than the {WINDOW_SIZE}px window")
    va, vb = local_variance(x), local_variance(y)
    mu_a, mu_b = va.mean(), vb.mean()
    sa, sb = va.std(), vb.std()
    if sa == 0 or sb == 0 or (mu_a == 0 and mu_b == 0):
        raise MetricError("local-variance map has zero spread; QILV undefined")
    sab = np.mean((va - mu_a) * (vb - mu_b))
    return float((2 * mu_a * mu_b / (mu_a**2 + mu_b**2))
                 * (2 * sa * sb / (sa**2 + sb**2))
                 * (sab / (sa * sb)))


def metric_triple(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    return rrmse(pred, truth), ms_ssim(pred, truth), qilv(pred, truth)


def aggregate(rows: list[tuple[float, float, float]]) -> dict[str, float]:
    """Mean and sample standard deviation of each metric."""
    arr = np.asarray(rows, dtype=np.float64)
    out = {}
    for i, name in enumerate(("rrmse", "ms_ssim", "qilv")):
        out[f"{name}_mean"] = float(arr[:, i].mean())
        out[f"{name}_std"] = float(arr[:, i].std(ddof=1)) if len(arr) > 1 else 0.0
    return out


def isclose_triple(t, ref, tol=(1e-12, 1e-6, 1e-6)) -> bool:
    return all(math.isclose(a, b, abs_tol=e) for a, b, e in zip(t, ref, tol))
