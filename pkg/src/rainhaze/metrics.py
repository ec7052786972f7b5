"""PSNR and SSIM on [0, 1] intensities."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .scene_io import ClearImage

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def _pixels(img) -> np.ndarray:
    return img.data if isinstance(img, ClearImage) else np.asarray(img, dtype=np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical images."""
    x, y = _pixels(a), _pixels(b)
    _same_shape(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = g.size // 2
    out = correlate1d(correlate1d(x, g, axis=0), g, axis=1)
    return out[half:-half, half:-half]


def _luma(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=2) if x.ndim == 3 else x


def ssim_map(a, b) -> np.ndarray:
    x, y = _pixels(a), _pixels(b)
    _same_shape(x, y)
    x, y = _luma(x), _luma(y)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    g = gaussian_window()
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + C1) * (2 * cov + C2)
    den = (mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM over the valid region, 11x11 Gaussian window, on channel-averaged luma."""
    return float(ssim_map(a, b).mean())
