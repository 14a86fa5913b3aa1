"""Quality metrics: PSNR, multi-scale SSIM, Bjontegaard deltas."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

from .errors import ConfigError, DimensionError

PSNR_CAP_DB = 99.0
_MSSSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def psnr(ref: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise DimensionError("psnr needs identically shaped frames")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def sequence_psnr(ref_frames, test_frames) -> float:
    vals = [psnr(r.plane, t.plane) for r, t in zip(ref_frames, test_frames)]
    return float(np.mean(vals))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_parts(a: np.ndarray, b: np.ndarray, window: np.ndarray):
    """Mean luminance and contrast-structure terms over valid positions."""
    pad = window.shape[0] // 2
    mu_a = correlate(a, window, mode="constant")[pad:-pad, pad:-pad]
    mu_b = correlate(b, window, mode="constant")[pad:-pad, pad:-pad]
    aa = correlate(a * a, window, mode="constant")[pad:-pad, pad:-pad]
    bb = correlate(b * b, window, mode="constant")[pad:-pad, pad:-pad]
    ab = correlate(a * b, window, mode="constant")[pad:-pad, pad:-pad]
    var_a = aa - mu_a * mu_a
    var_b = bb - mu_b * mu_b
    cov = ab - mu_a * mu_b
    lum = (2 * mu_a * mu_b + _C1) / (mu_a ** 2 + mu_b ** 2 + _C1)
    cs = (2 * cov + _C2) / (var_a + var_b + _C2)
    return float(lum.mean()), float(cs.mean())


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h - h % 2, w - w % 2
    v = img[:h2, :w2]
    return (v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2]) / 4.0


def ms_ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Five-scale MS-SSIM on 8-bit-range luma; smaller frames drop the
    coarsest scales and renormalize the exponents."""
    a = np.asarray(ref, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError("ms_ssim needs identically shaped frames")
    window = _gaussian_window()
    scales = 5
    side = min(a.shape)
    while scales > 1 and side < 11 * 2 ** (scales - 1):
        scales -= 1
    if side < 11:
        raise DimensionError("frame too small for an 11x11 SSIM window")
    weights = _MSSSIM_WEIGHTS[:scales]
    weights = weights / weights.sum()
    score = 1.0
    for level in range(scales):
        lum, cs = _ssim_parts(a, b, window)
        if level == scales - 1:
            score *= max(lum * cs, 0.0) ** weights[level]
        else:
            score *= max(cs, 0.0) ** weights[level]
            a, b = _halve(a), _halve(b)
    return float(score)


def sequence_ms_ssim(ref_frames, test_frames) -> float:
    vals = [ms_ssim(r.plane, t.plane) for r, t in zip(ref_frames, test_frames)]
    return float(np.mean(vals))


def bd_delta(rates_a, quality_a, rates_b, quality_b) -> float:
    """Average quality gap of curve b over curve a across their shared
    log-rate span, from cubic fits of quality against log10(rate)."""
    ra = np.log10(np.asarray(rates_a, dtype=np.float64))
    rb = np.log10(np.asarray(rates_b, dtype=np.float64))
    qa = np.asarray(quality_a, dtype=np.float64)
    qb = np.asarray(quality_b, dtype=np.float64)
    if ra.size < 4 or rb.size < 4:
        raise ConfigError("bd_delta needs at least four points per curve")
    if ra.size != qa.size or rb.size != qb.size:
        raise ConfigError("rates and quality values must pair up")
    lo = max(ra.min(), rb.min())
    hi = min(ra.max(), rb.max())
    if hi <= lo:
        raise ConfigError("rate ranges do not overlap")
    pa = np.polyfit(ra, qa, 3)
    pb = np.polyfit(rb, qb, 3)
    ia = np.polyval(np.polyint(pa), hi) - np.polyval(np.polyint(pa), lo)
    ib = np.polyval(np.polyint(pb), hi) - np.polyval(np.polyint(pb), lo)
    return float((ib - ia) / (hi - lo))


def bd_psnr(rates_a, psnr_a, rates_b, psnr_b) -> float:
    """BD-PSNR of curve b relative to curve a, in dB."""
    return bd_delta(rates_a, psnr_a, rates_b, psnr_b)
