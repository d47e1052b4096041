"""Full-reference quality metrics (PSNR, SSIM) and aggregate experiment
statistics.

Conventions are fixed once for the whole artifact and fingerprinted so that
reports from different runs can be compared safely:

* PSNR is computed over all RGB samples with peak 255; a zero-MSE pair
  reports ``+inf`` (serialized as the string ``"inf"``).
* SSIM is computed on BT.601 luminance with the standard 11x11 Gaussian
  window (sigma 1.5) and constants C1=(0.01*255)^2, C2=(0.03*255)^2, and is
  the mean over all fully-valid windows.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .domain import DomainError, ImageState, QualityReport, ToolId


@dataclass(frozen=True)
class MetricConfig:
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    c1: float = (0.01 * 255) ** 2
    c2: float = (0.03 * 255) ** 2
    psnr_peak: float = 255.0
    # ITU-R BT.601 luma weights
    luma_weights: tuple[float, float, float] = (0.299, 0.587, 0.114)

    def fingerprint(self) -> str:
        blob = json.dumps(
            {
                "window": self.ssim_window,
                "sigma": self.ssim_sigma,
                "c1": self.c1,
                "c2": self.c2,
                "peak": self.psnr_peak,
                "luma": self.luma_weights,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


DEFAULT_METRICS = MetricConfig()


def _pixels(img: ImageState | np.ndarray) -> np.ndarray:
    return img.pixels if isinstance(img, ImageState) else np.asarray(img)


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")


def mse(a: ImageState | np.ndarray, b: ImageState | np.ndarray) -> float:
    pa, pb = _pixels(a), _pixels(b)
    _check_dims(pa, pb)
    diff = pa.astype(np.float64) - pb.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(a: ImageState | np.ndarray, b: ImageState | np.ndarray, cfg: MetricConfig = DEFAULT_METRICS) -> float:
    """Peak signal-to-noise ratio in dB over RGB; +inf for identical buffers."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(cfg.psnr_peak**2 / err)


def luminance(pixels: np.ndarray, cfg: MetricConfig = DEFAULT_METRICS) -> np.ndarray:
    w = cfg.luma_weights
    p = pixels.astype(np.float64)
    return w[0] * p[..., 0] + w[1] * p[..., 1] + w[2] * p[..., 2]


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """1-D Gaussian window, normalized to sum 1."""
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _local_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # separable weighted mean; 'reflect' padding is irrelevant because the
    # result is cropped to fully-valid windows afterwards
    out = correlate1d(img, win, axis=0, mode="reflect")
    return correlate1d(out, win, axis=1, mode="reflect")


def ssim(a: ImageState | np.ndarray, b: ImageState | np.ndarray, cfg: MetricConfig = DEFAULT_METRICS) -> float:
    """Mean local SSIM on luminance over all fully-valid windows."""
    pa, pb = _pixels(a), _pixels(b)
    _check_dims(pa, pb)
    size = cfg.ssim_window
    if pa.shape[0] < size or pa.shape[1] < size:
        raise DomainError(f"image smaller than the {size}x{size} SSIM window")
    x = luminance(pa, cfg)
    y = luminance(pb, cfg)
    win = gaussian_window(size, cfg.ssim_sigma)

    mu_x = _local_mean(x, win)
    mu_y = _local_mean(y, win)
    xx = _local_mean(x * x, win)
    yy = _local_mean(y * y, win)
    xy = _local_mean(x * y, win)

    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_x * mu_x + mu_y * mu_y + cfg.c1) * (var_x + var_y + cfg.c2)
    ssim_map = num / den

    half = size // 2
    valid = ssim_map[half:-half, half:-half]
    return float(np.mean(valid))


def quality(a: ImageState | np.ndarray, b: ImageState | np.ndarray, steps: int = 0, wall_ms: float = 0.0) -> QualityReport:
    return QualityReport(psnr_db=psnr(a, b), ssim=ssim(a, b), steps=steps, wall_ms=wall_ms)


def success_rate(invocations: list[tuple[ToolId, ToolId]]) -> float:
    """Fraction of tool invocations where the chosen tool equals the correct one."""
    if not invocations:
        raise DomainError("success_rate needs at least one invocation")
    hits = sum(1 for chosen, correct in invocations if chosen == correct)
    return hits / len(invocations)


def serialize_metric(value: float) -> float | str:
    """JSON-friendly metric value; +inf becomes the string "inf"."""
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value
