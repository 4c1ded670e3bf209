"""Raster quality metrics: MSE, NMSE, RMSE, PSNR, SSIM.

NMSE normalizes by the power of the second argument (the ground truth).
PSNR uses 10 log10(r_max^2 / MSE) with an infinity flag at MSE = 0. SSIM
averages the standard stabilized index over sliding 11 x 11 windows with
Gaussian weights (sigma = 1.5), K1 = 0.01, K2 = 0.03 and dynamic range
r_max; ssim_global evaluates the same index once over the whole raster.
All statistics are computed in float64.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DomainError
from .raster import RadioMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    a = pred.values if isinstance(pred, RadioMap) else np.asarray(pred)
    b = truth.values if isinstance(truth, RadioMap) else np.asarray(truth)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def mse(pred, truth) -> float:
    a, b = _pair(pred, truth)
    return float(np.mean((a - b) ** 2))


def nmse(pred, truth) -> float:
    a, b = _pair(pred, truth)
    power = float(np.sum(b * b))
    if power == 0.0:
        raise DomainError("NMSE undefined for an all-zero ground truth")
    return float(np.sum((a - b) ** 2)) / power


def rmse(pred, truth) -> float:
    return math.sqrt(mse(pred, truth))


def psnr_from_mse(mse_value: float, r_max: float = 1.0) -> float:
    if r_max <= 0:
        raise DomainError("r_max must be positive")
    if mse_value < 0:
        raise DomainError("MSE cannot be negative")
    if mse_value == 0.0:
        return math.inf
    return 10.0 * (2.0 * math.log10(r_max) - math.log10(mse_value))


def psnr(pred, truth, r_max: float = 1.0) -> float:
    return psnr_from_mse(mse(pred, truth), r_max)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _ssim_index(mu_x, mu_y, ex2, ey2, exy, c1, c2):
    var_x = ex2 - mu_x * mu_x
    var_y = ey2 - mu_y * mu_y
    cov = exy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(pred, truth, r_max: float = 1.0) -> float:
    """Mean local SSIM over all fully-contained windows."""
    x, y = _pair(pred, truth)
    if min(x.shape) < SSIM_WINDOW:
        raise ConfigurationError(
            f"maps must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for windowed SSIM"
        )
    if r_max <= 0:
        raise DomainError("r_max must be positive")
    win = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    shape = (SSIM_WINDOW, SSIM_WINDOW)
    wx = sliding_window_view(x, shape)
    wy = sliding_window_view(y, shape)
    axes = ([2, 3], [0, 1])
    mu_x = np.tensordot(wx, win, axes=axes)
    mu_y = np.tensordot(wy, win, axes=axes)
    ex2 = np.tensordot(wx * wx, win, axes=axes)
    ey2 = np.tensordot(wy * wy, win, axes=axes)
    exy = np.tensordot(wx * wy, win, axes=axes)
    c1 = (SSIM_K1 * r_max) ** 2
    c2 = (SSIM_K2 * r_max) ** 2
    return float(np.mean(_ssim_index(mu_x, mu_y, ex2, ey2, exy, c1, c2)))


def ssim_global(pred, truth, r_max: float = 1.0) -> float:
    """Single-window SSIM over the whole raster (uniform weights)."""
    x, y = _pair(pred, truth)
    if r_max <= 0:
        raise DomainError("r_max must be positive")
    c1 = (SSIM_K1 * r_max) ** 2
    c2 = (SSIM_K2 * r_max) ** 2
    return float(
        _ssim_index(
            x.mean(), y.mean(), (x * x).mean(), (y * y).mean(), (x * y).mean(), c1, c2
        )
    )


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    nmse: float
    rmse: float
    psnr_db: float
    ssim: float

    def to_dict(self) -> dict:
        d = {
            "mse": self.mse,
            "nmse": self.nmse,
            "rmse": self.rmse,
            "psnr_db": "inf" if math.isinf(self.psnr_db) else self.psnr_db,
            "ssim": self.ssim,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def evaluate(pred, truth, r_max: float = 1.0) -> MetricsReport:
    m = mse(pred, truth)
    return MetricsReport(
        mse=m,
        nmse=nmse(pred, truth),
        rmse=math.sqrt(m),
        psnr_db=psnr_from_mse(m, r_max),
        ssim=ssim(pred, truth, r_max),
    )
