import numpy as np
import pytest
from scipy.signal import convolve2d

from bcscast.errors import ConfigError, DimensionError
from bcscast.frames import Frame
from bcscast.metrics import (PSNR_CAP_DB, bd_psnr, ms_ssim, psnr,
                             sequence_ms_ssim, sequence_psnr)


# -- PSNR -----------------------------------------------------------------------

def test_psnr_offset_16():
    ref = np.full((32, 32), 100.0)
    assert psnr(ref, ref + 16.0) == pytest.approx(24.05, abs=0.01)


def test_psnr_offset_1():
    ref = np.full((32, 32), 100.0)
    assert psnr(ref, ref + 1.0) == pytest.approx(48.13, abs=0.01)


def test_psnr_identical_frames_capped():
    ref = np.arange(64, dtype=np.float64).reshape(8, 8)
    assert psnr(ref, ref) == PSNR_CAP_DB


def test_psnr_tiny_error_also_capped():
    ref = np.zeros((16, 16))
    assert psnr(ref, ref + 1e-9) == PSNR_CAP_DB


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_sequence_psnr_is_frame_mean():
    a = [Frame(np.full((16, 16), 10.0)), Frame(np.full((16, 16), 10.0))]
    b = [Frame(np.full((16, 16), 26.0)), Frame(np.full((16, 16), 11.0))]
    single = [psnr(x.plane, y.plane) for x, y in zip(a, b)]
    assert sequence_psnr(a, b) == pytest.approx(np.mean(single))


# -- MS-SSIM ---------------------------------------------------------------------

_WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]


def _gauss(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _msssim_oracle(ref, test):
    """Independent multi-scale SSIM built on valid-mode convolutions."""
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    win = _gauss()
    a = np.asarray(ref, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    score = 1.0
    for level in range(5):
        mu_a = convolve2d(a, win, mode="valid")
        mu_b = convolve2d(b, win, mode="valid")
        va = convolve2d(a * a, win, mode="valid") - mu_a ** 2
        vb = convolve2d(b * b, win, mode="valid") - mu_b ** 2
        cov = convolve2d(a * b, win, mode="valid") - mu_a * mu_b
        cs = float(np.mean((2 * cov + c2) / (va + vb + c2)))
        if level == 4:
            lum = float(np.mean((2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)))
            score *= max(lum * cs, 0.0) ** _WEIGHTS[level]
        else:
            score *= max(cs, 0.0) ** _WEIGHTS[level]
            h, w = a.shape
            h2, w2 = h - h % 2, w - w % 2
            a = a[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))
            b = b[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))
    return score


def _pairs():
    rng = np.random.default_rng(31)
    yy, xx = np.mgrid[0:192, 0:192]
    base = 120 + 55 * np.sin(xx / 11.0) + 40 * np.cos(yy / 7.0)
    pairs = []
    for sigma in (3.0, 10.0, 25.0):
        noisy = np.clip(base + rng.normal(0, sigma, base.shape), 0, 255)
        pairs.append((base, noisy))
    shifted = np.roll(base, 2, axis=1)
    pairs.append((base, shifted))
    blurred = convolve2d(np.pad(base, 2, mode="edge"), np.full((5, 5), 1 / 25.0),
                         mode="valid")
    pairs.append((base, blurred))
    return pairs


def test_msssim_matches_independent_reference():
    for i, (ref, test) in enumerate(_pairs()):
        got = ms_ssim(ref, test)
        want = _msssim_oracle(ref, test)
        assert abs(got - want) < 1e-3, f"pair {i}: {got} vs {want}"


def test_msssim_identity_is_one():
    rng = np.random.default_rng(4)
    img = rng.uniform(0, 255, size=(192, 192))
    assert ms_ssim(img, img) == pytest.approx(1.0, abs=1e-9)


def test_msssim_orders_degradations():
    rng = np.random.default_rng(9)
    img = rng.uniform(0, 255, size=(192, 192))
    mild = np.clip(img + rng.normal(0, 5, img.shape), 0, 255)
    harsh = np.clip(img + rng.normal(0, 60, img.shape), 0, 255)
    assert ms_ssim(img, mild) > ms_ssim(img, harsh)


def test_msssim_small_frames_drop_scales():
    rng = np.random.default_rng(12)
    img = rng.uniform(0, 255, size=(48, 48))
    score = ms_ssim(img, np.clip(img + rng.normal(0, 10, img.shape), 0, 255))
    assert 0.0 < score < 1.0


def test_msssim_rejects_tiny_frames():
    with pytest.raises(DimensionError):
        ms_ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_msssim_shape_mismatch():
    with pytest.raises(DimensionError):
        ms_ssim(np.zeros((64, 64)), np.zeros((64, 32)))


def test_sequence_msssim_mean():
    rng = np.random.default_rng(5)
    ref = [Frame(rng.uniform(0, 255, size=(64, 64))) for _ in range(2)]
    test = [Frame(np.clip(f.plane + rng.normal(0, 8, (64, 64)), 0, 255))
            for f in ref]
    singles = [ms_ssim(r.plane, t.plane) for r, t in zip(ref, test)]
    assert sequence_ms_ssim(ref, test) == pytest.approx(np.mean(singles))


# -- Bjontegaard delta -------------------------------------------------------------

_RATES = [100.0, 200.0, 400.0, 800.0]
_QUALITY = [30.0, 33.0, 35.5, 37.0]


def test_bd_constant_offset_identity():
    shifted = [q + 1.7 for q in _QUALITY]
    assert bd_psnr(_RATES, _QUALITY, _RATES, shifted) == pytest.approx(1.7, abs=1e-6)


def test_bd_self_is_zero():
    assert bd_psnr(_RATES, _QUALITY, _RATES, _QUALITY) == pytest.approx(0.0, abs=1e-12)


def test_bd_antisymmetric_on_shared_grid():
    other = [31.0, 33.5, 36.0, 38.5]
    ab = bd_psnr(_RATES, _QUALITY, _RATES, other)
    ba = bd_psnr(_RATES, other, _RATES, _QUALITY)
    assert ab == pytest.approx(-ba, abs=1e-9)


def test_bd_positive_when_curve_dominates():
    better = [q + 0.5 for q in _QUALITY]
    assert bd_psnr(_RATES, _QUALITY, _RATES, better) > 0.4


def test_bd_needs_four_points():
    with pytest.raises(ConfigError):
        bd_psnr(_RATES[:3], _QUALITY[:3], _RATES, _QUALITY)


def test_bd_needs_overlap():
    with pytest.raises(ConfigError):
        bd_psnr(_RATES, _QUALITY, [10000.0, 20000.0, 40000.0, 80000.0], _QUALITY)


def test_bd_rejects_ragged_input():
    with pytest.raises(ConfigError):
        bd_psnr(_RATES, _QUALITY[:3] + [37.0, 39.0], _RATES, _QUALITY)
