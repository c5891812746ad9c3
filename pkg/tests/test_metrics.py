import numpy as np
import pytest

from scaleprune.grids import FeatureGrid
from scaleprune.metrics import (
    PSNR_CAP_DB,
    gaussian_window,
    psnr,
    ssim,
    ssim_window_size,
)


def grid(sp):
    return FeatureGrid.from_spatial(sp)


class TestPsnr:
    def test_identical_hits_cap(self):
        rng = np.random.default_rng(0)
        g = grid(rng.standard_normal((1, 3, 4, 4)))
        assert psnr(g, g) == PSNR_CAP_DB

    def test_unit_range_unit_mse_is_zero_db(self):
        a = np.zeros((1, 1, 2, 2))
        a[0, 0, 0, 0] = 1.0  # reference range exactly 1
        b = a + 1.0
        assert psnr(grid(a), grid(b)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_two_line_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((2, 3, 5, 5))
        b = a + 0.1 * rng.standard_normal(a.shape)
        mse = np.mean((a - b) ** 2)
        oracle = 10 * np.log10((a.max() - a.min()) ** 2 / mse)
        assert psnr(grid(a), grid(b)) == pytest.approx(oracle, abs=1e-10)

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((1, 2, 6, 6))
        noise = rng.standard_normal(a.shape)
        vals = [psnr(grid(a), grid(a + s * noise)) for s in (0.01, 0.1, 1.0)]
        assert vals[0] > vals[1] > vals[2]

    def test_shape_mismatch(self):
        a = grid(np.zeros((1, 1, 2, 2)))
        b = grid(np.zeros((1, 1, 2, 3)))
        with pytest.raises(ValueError, match="shape"):
            psnr(a, b)


class TestWindow:
    def test_normalized(self):
        for size in (3, 7, 11):
            assert gaussian_window(size).sum() == pytest.approx(1.0)

    def test_symmetric_with_center_peak(self):
        win = gaussian_window(11)
        np.testing.assert_allclose(win, win.T, atol=1e-15)
        np.testing.assert_allclose(win, win[::-1, ::-1], atol=1e-15)
        assert win[5, 5] == win.max()

    def test_size_fallback(self):
        assert ssim_window_size(32, 32) == 11
        assert ssim_window_size(8, 12) == 7   # even min shrinks to odd
        assert ssim_window_size(5, 30) == 5
        assert ssim_window_size(1, 1) == 1


def ssim_loop_oracle(a, b, rng_val):
    """Independent per-window SSIM with nested loops, uniform channel mean."""
    h, w = a.shape
    size = ssim_window_size(h, w)
    win = gaussian_window(size)
    c1 = (0.01 * rng_val) ** 2
    c2 = (0.03 * rng_val) ** 2
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            wa = a[i:i + size, j:j + size]
            wb = b[i:i + size, j:j + size]
            mu_a = (win * wa).sum()
            mu_b = (win * wb).sum()
            var_a = (win * wa * wa).sum() - mu_a ** 2
            var_b = (win * wb * wb).sum() - mu_b ** 2
            cov = (win * wa * wb).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(vals))


class TestSsim:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(3)
        g = grid(rng.standard_normal((1, 3, 16, 16)))
        assert ssim(g, g) == pytest.approx(1.0, abs=1e-9)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((13, 14))
        b = a + 0.3 * rng.standard_normal(a.shape)
        ga = grid(a[None, None])
        gb = grid(b[None, None])
        oracle = ssim_loop_oracle(a, b, float(a.max() - a.min()))
        assert ssim(ga, gb) == pytest.approx(oracle, abs=1e-10)

    def test_sign_flip_of_oscillation_is_negative(self):
        # Checkerboard: window means vanish, so the covariance term dominates
        # and anti-correlation drives SSIM below zero.
        i, j = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
        a = np.where((i + j) % 2 == 0, 1.0, -1.0)
        assert ssim(grid(a[None, None]), grid(-a[None, None])) < 0.0

    def test_degrades_with_noise(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((1, 2, 20, 20))
        noise = rng.standard_normal(a.shape)
        clean = ssim(grid(a), grid(a + 0.05 * noise))
        dirty = ssim(grid(a), grid(a + 0.8 * noise))
        assert clean > dirty

    def test_small_map_uses_reduced_window(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((1, 1, 4, 4))
        g = grid(a)
        assert ssim(g, g) == pytest.approx(1.0, abs=1e-9)

    def test_channel_averaging(self):
        # Two channels that cancel in the mean: SSIM sees a flat map pair.
        a = np.zeros((1, 2, 12, 12))
        a[0, 0] = np.random.default_rng(7).standard_normal((12, 12))
        a[0, 1] = -a[0, 0]
        b = np.zeros_like(a)
        assert ssim(grid(a), grid(b)) == pytest.approx(1.0, abs=1e-9)
