"""Reconstruction quality metrics: PSNR, RMSE (0-255 scale), SSIM, UIQI.

All metrics clamp the prediction to [0,1] and treat the ground truth as
already in range. SSIM and UIQI are computed per band over sliding
windows, then averaged over bands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_UIQI_WINDOW = 8


def _as_volume(x):
    data = x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else x
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"expected a band volume, got shape {arr.shape}")
    return arr


def _pair(pred, gt):
    p, g = _as_volume(pred), _as_volume(gt)
    if p.shape != g.shape:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return np.clip(p, 0.0, 1.0), g


def mse(pred, gt):
    p, g = _pair(pred, gt)
    return float(np.mean((p - g) ** 2))


def psnr(pred, gt):
    """10*log10(1/MSE) on [0,1] data; identical inputs give +inf."""
    m = mse(pred, gt)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


def rmse(pred, gt):
    """Root mean square error reported on the 0-255 scale."""
    return float(255.0 * np.sqrt(mse(pred, gt)))


def _gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def _windows(img, size):
    return np.lib.stride_tricks.sliding_window_view(img, (size, size))


def _filter2(img, kernel):
    win = _windows(img, kernel.shape[0])
    return np.einsum("hwij,ij->hw", win, kernel, optimize=True)


def ssim(pred, gt):
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over bands."""
    p, g = _pair(pred, gt)
    if p.shape[1] < _SSIM_WINDOW or p.shape[2] < _SSIM_WINDOW:
        raise ShapeError(f"image {p.shape[1:]} smaller than SSIM window {_SSIM_WINDOW}")
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2
    vals = []
    for b in range(p.shape[0]):
        x, y = p[b], g[b]
        mu_x = _filter2(x, w)
        mu_y = _filter2(y, w)
        sxx = _filter2(x * x, w) - mu_x ** 2
        syy = _filter2(y * y, w) - mu_y ** 2
        sxy = _filter2(x * y, w) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def uiqi(pred, gt):
    """Universal image quality index over sliding 8x8 windows, stride 1.

    Q = 4*sxy*mx*my / ((sx2+sy2)(mx^2+my^2)); zero-denominator windows are
    skipped; per-band Q values are averaged over bands.
    """
    p, g = _pair(pred, gt)
    if p.shape[1] < _UIQI_WINDOW or p.shape[2] < _UIQI_WINDOW:
        raise ShapeError(f"image {p.shape[1:]} smaller than UIQI window {_UIQI_WINDOW}")
    n = _UIQI_WINDOW * _UIQI_WINDOW
    vals = []
    for b in range(p.shape[0]):
        wx = _windows(p[b], _UIQI_WINDOW).reshape(-1, n)
        wy = _windows(g[b], _UIQI_WINDOW).reshape(-1, n)
        mx = wx.mean(axis=1)
        my = wy.mean(axis=1)
        sx2 = wx.var(axis=1)
        sy2 = wy.var(axis=1)
        sxy = ((wx - mx[:, None]) * (wy - my[:, None])).mean(axis=1)
        den = (sx2 + sy2) * (mx ** 2 + my ** 2)
        ok = den > 0
        if not np.any(ok):
            vals.append(0.0)
            continue
        q = 4.0 * sxy[ok] * mx[ok] * my[ok] / den[ok]
        vals.append(float(q.mean()))
    return float(np.mean(vals))


@dataclass
class MetricReport:
    psnr_db: float
    rmse_255: float
    ssim: float
    uiqi: float
    per_band: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "psnr_db": self.psnr_db,
            "rmse_255": self.rmse_255,
            "ssim": self.ssim,
            "uiqi": self.uiqi,
        }
        if self.per_band:
            out["per_band"] = self.per_band
        return out

    def to_json(self, **kw):
        d = self.to_dict()
        if np.isinf(d["psnr_db"]):
            d["psnr_db"] = "inf"
        return json.dumps(d, **kw)


def compute_report(pred, gt, per_band=False):
    rep = MetricReport(
        psnr_db=psnr(pred, gt),
        rmse_255=rmse(pred, gt),
        ssim=ssim(pred, gt),
        uiqi=uiqi(pred, gt),
    )
    if per_band:
        p, g = _pair(pred, gt)
        rep.per_band = {
            "psnr_db": [psnr(p[b], g[b]) for b in range(p.shape[0])],
            "rmse_255": [rmse(p[b], g[b]) for b in range(p.shape[0])],
        }
    return rep
