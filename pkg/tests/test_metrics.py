import json

import numpy as np
import pytest

from specrecon import metrics as M
from specrecon.errors import ShapeError


def naive_ssim(x, y, win=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct windowed-formula SSIM oracle, explicit loops per window."""
    r = np.arange(win) - (win - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    H, W = x.shape
    vals = []
    for i in range(H - win + 1):
        for j in range(W - win + 1):
            px = x[i : i + win, j : j + win]
            py = y[i : i + win, j : j + win]
            mx = (w * px).sum()
            my = (w * py).sum()
            sxx = (w * px * px).sum() - mx * mx
            syy = (w * py * py).sum() - my * my
            sxy = (w * px * py).sum() - mx * my
            num = (2 * mx * my + c1) * (2 * sxy + c2)
            den = (mx * mx + my * my + c1) * (sxx + syy + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def naive_uiqi(x, y, win=8):
    """Direct per-window Q oracle, zero-denominator windows skipped."""
    H, W = x.shape
    vals = []
    for i in range(H - win + 1):
        for j in range(W - win + 1):
            px = x[i : i + win, j : j + win].ravel()
            py = y[i : i + win, j : j + win].ravel()
            mx, my = px.mean(), py.mean()
            sx2 = ((px - mx) ** 2).mean()
            sy2 = ((py - my) ** 2).mean()
            sxy = ((px - mx) * (py - my)).mean()
            den = (sx2 + sy2) * (mx * mx + my * my)
            if den > 0:
                vals.append(4.0 * sxy * mx * my / den)
    return float(np.mean(vals))


def rand_pair(seed, shape=(2, 16, 16)):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, size=shape), rng.uniform(0, 1, size=shape)


class TestPsnrRmse:
    def test_identical_gives_inf_and_zero(self):
        x, _ = rand_pair(0)
        assert M.psnr(x, x) == float("inf")
        assert M.rmse(x, x) == 0.0

    def test_uniform_error_point_one(self):
        gt = np.full((4, 8, 8), 0.4)
        pred = gt + 0.1
        assert abs(M.psnr(pred, gt) - 20.0) < 1e-9
        assert abs(M.rmse(pred, gt) - 25.5) < 1e-9

    def test_halving_error_raises_psnr_6db(self):
        gt = np.full((2, 8, 8), 0.4)
        a = M.psnr(gt + 0.2, gt)
        b = M.psnr(gt + 0.1, gt)
        assert abs((b - a) - 20.0 * np.log10(2.0)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_identity_psnr_rmse(self, seed):
        pred, gt = rand_pair(seed)
        p = M.psnr(pred, gt)
        r = M.rmse(pred, gt)
        assert abs(p - 20.0 * np.log10(255.0 / r)) < 1e-9

    def test_pred_clamped_before_scoring(self):
        gt = np.full((1, 8, 8), 1.0)
        assert M.psnr(np.full((1, 8, 8), 2.0), gt) == float("inf")

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            M.psnr(np.zeros((2, 8, 8)), np.zeros((2, 8, 9)))


class TestSsim:
    def test_identical_is_one(self):
        x, _ = rand_pair(1)
        assert abs(M.ssim(x, x) - 1.0) < 1e-12

    def test_inverted_structure_well_below_one(self):
        rng = np.random.default_rng(2)
        gt = (rng.uniform(0, 1, size=(1, 16, 16)) > 0.5).astype(np.float64)
        assert M.ssim(1.0 - gt, gt) < 0.5

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_naive_oracle(self, seed):
        pred, gt = rand_pair(seed, shape=(3, 16, 16))
        expect = np.mean([naive_ssim(pred[b], gt[b]) for b in range(3)])
        assert abs(M.ssim(pred, gt) - expect) < 1e-6

    def test_image_smaller_than_window(self):
        with pytest.raises(ShapeError):
            M.ssim(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))

    def test_range(self):
        pred, gt = rand_pair(3)
        assert -1.0 <= M.ssim(pred, gt) <= 1.0


class TestUiqi:
    def test_identical_nonconstant_is_one(self):
        x, _ = rand_pair(4)
        assert abs(M.uiqi(x, x) - 1.0) < 1e-12

    def test_constant_shift_below_one(self):
        rng = np.random.default_rng(5)
        gt = rng.uniform(0.1, 0.7, size=(1, 16, 16))
        assert M.uiqi(gt + 0.2, gt) < 1.0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_naive_oracle(self, seed):
        pred, gt = rand_pair(seed + 10, shape=(3, 16, 16))
        expect = np.mean([naive_uiqi(pred[b], gt[b]) for b in range(3)])
        assert abs(M.uiqi(pred, gt) - expect) < 1e-6

    def test_zero_windows_skipped(self):
        gt = np.zeros((1, 12, 12))
        gt[0, 10, 10] = 0.5  # only windows touching this pixel count
        pred = gt.copy()
        assert abs(M.uiqi(pred, gt) - 1.0) < 1e-12

    def test_image_smaller_than_window(self):
        with pytest.raises(ShapeError):
            M.uiqi(np.zeros((1, 6, 6)), np.zeros((1, 6, 6)))

    def test_range(self):
        pred, gt = rand_pair(6)
        assert -1.0 <= M.uiqi(pred, gt) <= 1.0


class TestReport:
    def test_fields_and_json(self):
        pred, gt = rand_pair(7)
        rep = M.compute_report(pred, gt, per_band=True)
        d = json.loads(rep.to_json())
        for key in ("psnr_db", "rmse_255", "ssim", "uiqi"):
            assert key in d
        assert len(d["per_band"]["psnr_db"]) == 2
        assert d["rmse_255"] >= 0.0

    def test_inf_sentinel_serializes(self):
        x, _ = rand_pair(8)
        rep = M.compute_report(x, x)
        assert json.loads(rep.to_json())["psnr_db"] == "inf"

    def test_regression_lockfile(self):
        # frozen values from this implementation; guards numeric drift
        pred, gt = rand_pair(1234, shape=(4, 20, 20))
        rep = M.compute_report(pred, gt)
        frozen = (7.703421483783208, 105.04348123910493, 0.01591184944924716, -0.010215689872407452)
        got = (rep.psnr_db, rep.rmse_255, rep.ssim, rep.uiqi)
        assert all(abs(x - y) < 1e-9 for x, y in zip(got, frozen))
