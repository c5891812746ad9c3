"""Fidelity metrics between two feature grids.

PSNR uses the dynamic range (max - min) of the reference grid, since toy
features are unbounded rather than 8-bit; identical inputs are reported at a
99 dB sentinel cap. SSIM runs on channel-averaged maps with a Gaussian
window (11x11, sigma 1.5, K1=0.01, K2=0.03); grids smaller than 11 use the
largest odd window that fits.
"""

from __future__ import annotations

import numpy as np

from .grids import FeatureGrid

PSNR_CAP_DB = 99.0


def _check_shapes(a: FeatureGrid, b: FeatureGrid):
    if a.data.shape != b.data.shape or (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"shape mismatch: {a.data.shape}@{a.height}x{a.width} vs "
            f"{b.data.shape}@{b.height}x{b.width}"
        )


def psnr(reference: FeatureGrid, test: FeatureGrid) -> float:
    """10*log10(range^2 / MSE), capped at 99 dB; range from the reference."""
    _check_shapes(reference, test)
    mse = float(np.mean(np.square(reference.data - test.data)))
    if mse == 0.0:
        return PSNR_CAP_DB
    rng = float(reference.data.max() - reference.data.min())
    if rng == 0.0:
        rng = 1.0
    value = 10.0 * np.log10(rng * rng / mse)
    return float(min(value, PSNR_CAP_DB))


def gaussian_window(size: int, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian weights, (size, size)."""
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_window_size(h: int, w: int, preferred: int = 11) -> int:
    """Largest odd window <= min(preferred, H, W)."""
    size = min(preferred, h, w)
    if size % 2 == 0:
        size -= 1
    return max(size, 1)


def _windowed_stats(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Weighted window means at every valid center position, (H-s+1, W-s+1)."""
    s = win.shape[0]
    h, w = img.shape
    out = np.zeros((h - s + 1, w - s + 1))
    for dy in range(s):
        for dx in range(s):
            out += win[dy, dx] * img[dy:dy + h - s + 1, dx:dx + w - s + 1]
    return out


def ssim(reference: FeatureGrid, test: FeatureGrid) -> float:
    """Mean SSIM over valid window positions of the channel-averaged maps."""
    _check_shapes(reference, test)
    h, w = reference.height, reference.width
    size = ssim_window_size(h, w)
    win = gaussian_window(size)
    rng = float(reference.data.max() - reference.data.min())
    if rng == 0.0:
        rng = 1.0
    c1 = (0.01 * rng) ** 2
    c2 = (0.03 * rng) ** 2
    vals = []
    for bi in range(reference.batch):
        a = reference.data[bi].mean(axis=1).reshape(h, w)
        b = test.data[bi].mean(axis=1).reshape(h, w)
        mu_a = _windowed_stats(a, win)
        mu_b = _windowed_stats(b, win)
        var_a = _windowed_stats(a * a, win) - mu_a ** 2
        var_b = _windowed_stats(b * b, win) - mu_b ** 2
        cov = _windowed_stats(a * b, win) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))
