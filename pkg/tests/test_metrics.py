"""PSNR, SSIM, cube-level reports and the truncated-SVD baseline."""

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmog.hsi_data import Cube, ObservationMatrix
from nmog.metrics import PSNR_CAP_DB, QualityReport, evaluate, psnr, ssim, svd_baseline
from nmog.noise_sim import NoiseSpec, corrupt


def ssim_by_definition(x, y):
    """Loop over every fully contained 11 x 11 window; weights built from scratch."""
    c1, c2 = 0.01**2, 0.03**2
    offs = np.arange(11) - 5
    w = np.array([[np.exp(-(a * a + b * b) / (2 * 1.5**2)) for b in offs] for a in offs])
    w /= w.sum()
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            px, py = x[i : i + 11, j : j + 11], y[i : i + 11, j : j + 11]
            mx, my = np.sum(w * px), np.sum(w * py)
            vx = np.sum(w * (px - mx) ** 2)
            vy = np.sum(w * (py - my) ** 2)
            cxy = np.sum(w * (px - mx) * (py - my))
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_capped(self):
        x = np.random.default_rng(0).random((8, 8))
        assert psnr(x, x) == PSNR_CAP_DB

    def test_offset_point_one(self):
        x = np.random.default_rng(1).random((16, 16)) * 0.5
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-12)

    def test_offset_point_zero_five(self):
        x = np.zeros((16, 16))
        assert psnr(x, x + 0.05) == pytest.approx(26.0206, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_bad_peak(self):
        with pytest.raises(ValueError):
            psnr(np.zeros(2), np.ones(2), peak=0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.random((9, 7)), rng.random((9, 7))
        perm = rng.permutation(63)
        px = x.reshape(-1)[perm].reshape(9, 7)
        py = y.reshape(-1)[perm].reshape(9, 7)
        assert psnr(px, py) == pytest.approx(psnr(x, y), rel=1e-12)


class TestSsim:
    def test_identical(self):
        x = np.random.default_rng(2).random((20, 20))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images(self):
        x = np.full((16, 16), 0.5)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_matches_definition(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            x = rng.random((32, 32))
            y = np.clip(x + rng.normal(0, rng.uniform(0.01, 0.3), x.shape), 0, 1)
            assert abs(ssim(x, y) - ssim_by_definition(x, y)) < 1e-6

    def test_matches_scikit_image(self):
        skm = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(4)
        x = rng.random((40, 36))
        y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
        ref = skm.structural_similarity(
            x, y, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
        )
        assert ssim(x, y) == pytest.approx(ref, abs=1e-6)

    def test_small_image_falls_back(self):
        x = np.random.default_rng(5).random((6, 6))
        with pytest.warns(RuntimeWarning, match="window"):
            value = ssim(x, x * 0.9)
        assert -1.0 <= value <= 1.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bounded_and_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.random((14, 15)), rng.random((14, 15))
        a, b = ssim(x, y), ssim(y, x)
        assert -1.0 <= a <= 1.0
        assert a == pytest.approx(b, abs=1e-12)


class TestEvaluate:
    def test_self_comparison(self):
        c = Cube(np.random.default_rng(6).random((16, 16, 4)))
        q = evaluate(c, c)
        assert q.mpsnr == PSNR_CAP_DB
        assert q.mssim == pytest.approx(1.0)

    def test_means_are_band_means(self):
        rng = np.random.default_rng(7)
        a, b = Cube(rng.random((16, 16, 5))), Cube(rng.random((16, 16, 5)))
        q = evaluate(a, b)
        assert q.mpsnr == pytest.approx(np.mean(q.psnr_per_band))
        assert q.mssim == pytest.approx(np.mean(q.ssim_per_band))
        assert q.psnr_per_band[2] == psnr(a.band(2), b.band(2))

    def test_iid_noisy_cube(self):
        clean = Cube(np.full((64, 64, 10), 0.5))
        noisy, _ = corrupt(clean, NoiseSpec(sigma=0.05, seed=0))
        assert evaluate(clean, noisy).mpsnr == pytest.approx(26.02, abs=0.1)

    def test_serialization(self, tmp_path):
        q = QualityReport(np.array([20.0, 30.0]), np.array([0.5, 0.7]), 1.5)
        q.write_csv(tmp_path / "q.csv")
        q.write_json(tmp_path / "q.json")
        rows = list(csv.reader(open(tmp_path / "q.csv")))
        assert rows[0] == ["band", "psnr", "ssim"]
        assert float(rows[2][1]) == 30.0
        summary = json.loads((tmp_path / "q.json").read_text())
        assert summary == {"mpsnr": 25.0, "mssim": 0.6, "seconds": 1.5}


class TestSvdBaseline:
    def test_rank_one_exact(self):
        rng = np.random.default_rng(8)
        Y = np.outer(rng.random(30), rng.random(7))
        out = svd_baseline(ObservationMatrix(Y), 1).values
        assert np.linalg.norm(out - Y) / np.linalg.norm(Y) < 1e-10

    def test_full_rank_identity(self):
        Y = np.random.default_rng(9).random((12, 5))
        np.testing.assert_allclose(svd_baseline(Y, 5).values, Y, atol=1e-12)

    def test_residual_equals_discarded_spectrum(self):
        rng = np.random.default_rng(10)
        Y = rng.normal(size=(20, 10))
        s = np.linalg.svd(Y, compute_uv=False)
        for rank in range(1, 10):
            resid = np.linalg.norm(Y - svd_baseline(Y, rank).values)
            assert resid == pytest.approx(np.sqrt(np.sum(s[rank:] ** 2)), rel=1e-10)

    def test_residual_non_increasing(self):
        Y = np.random.default_rng(11).normal(size=(15, 8))
        res = [np.linalg.norm(Y - svd_baseline(Y, k).values) for k in range(1, 9)]
        assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))

    @pytest.mark.parametrize("rank", [0, 6])
    def test_invalid_rank(self, rank):
        with pytest.raises(ValueError):
            svd_baseline(np.zeros((10, 5)), rank)
