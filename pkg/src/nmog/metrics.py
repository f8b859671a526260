"""Band-wise image quality (PSNR, SSIM), their cube means, and a truncated-SVD baseline."""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .hsi_data import Cube, ObservationMatrix

PSNR_CAP_DB = 300.0

# Gaussian-window SSIM with the usual stabilizers for unit dynamic range
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class QualityReport:
    psnr_per_band: np.ndarray
    ssim_per_band: np.ndarray
    elapsed_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def mpsnr(self) -> float:
        return float(np.mean(self.psnr_per_band))

    @property
    def mssim(self) -> float:
        return float(np.mean(self.ssim_per_band))

    def summary(self) -> dict:
        return {"mpsnr": self.mpsnr, "mssim": self.mssim, "seconds": self.elapsed_seconds, **self.extra}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["band", "psnr", "ssim"])
            for j, (p, s) in enumerate(zip(self.psnr_per_band, self.ssim_per_band)):
                writer.writerow([j, repr(float(p)), repr(float(s))])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(reference, test, peak: float = 1.0) -> float:
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    _check_shapes(reference, test)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_map(mu_x, mu_y, var_x, var_y, cov_xy, data_range):
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * cov_xy + c2)) / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))


def ssim(reference, test, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5).

    Images smaller than the window fall back to one global window.
    """
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    _check_shapes(x, y)
    if x.ndim != 2:
        raise ValueError("ssim expects 2-D band images")
    if min(x.shape) < SSIM_WINDOW:
        warnings.warn("image smaller than the SSIM window; using global statistics", RuntimeWarning, stacklevel=2)
        mu_x, mu_y = x.mean(), y.mean()
        var_x = ((x - mu_x) ** 2).mean()
        var_y = ((y - mu_y) ** 2).mean()
        cov = ((x - mu_x) * (y - mu_y)).mean()
        return float(_ssim_map(mu_x, mu_y, var_x, var_y, cov, data_range))
    w = gaussian_window()

    def filt(img):
        return convolve2d(img, w, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    return float(np.mean(_ssim_map(mu_x, mu_y, var_x, var_y, cov, data_range)))


def evaluate(reference: Cube, test: Cube) -> QualityReport:
    """Per-band PSNR/SSIM of ``test`` against ``reference``."""
    _check_shapes(reference.data, test.data)
    start = time.perf_counter()
    p = np.array([psnr(reference.band(j), test.band(j)) for j in range(reference.bands)])
    s = np.array([ssim(reference.band(j), test.band(j)) for j in range(reference.bands)])
    return QualityReport(psnr_per_band=p, ssim_per_band=s, elapsed_seconds=time.perf_counter() - start)


def svd_baseline(Y, rank: int) -> ObservationMatrix:
    """Best rank-``rank`` approximation in Frobenius norm."""
    values = Y.values if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=np.float64)
    if not 1 <= rank <= min(values.shape):
        raise ValueError(f"rank must lie in [1, {min(values.shape)}], got {rank}")
    u, s, vt = np.linalg.svd(values, full_matrices=False)
    return ObservationMatrix((u[:, :rank] * s[:rank]) @ vt[:rank])
