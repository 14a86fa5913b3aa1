"""Texture and saliency analysis driving unequal sample allocation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate, uniform_filter

from .errors import ConfigError
from .frames import Frame, check_block_geometry

_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T

_EPS_LOG = 1e-8
_EPS_NORM = 1e-12


def _plane_of(frame_or_plane) -> np.ndarray:
    plane = getattr(frame_or_plane, "plane", frame_or_plane)
    return np.asarray(plane, dtype=np.float64)


def sobel_gradient_magnitude(plane) -> np.ndarray:
    """Gradient magnitude with 3x3 Sobel kernels and replicate borders."""
    p = _plane_of(plane)
    gx = correlate(p, _SOBEL_X, mode="nearest")
    gy = correlate(p, _SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy)


def frame_complexity(plane) -> float:
    """Mean gradient magnitude; the per-frame texture complexity score."""
    return float(sobel_gradient_magnitude(plane).mean())


def block_mean_map(values: np.ndarray, block_size: int) -> np.ndarray:
    """Per-block means in raster order, returned as a flat length-M vector."""
    h, w = values.shape
    check_block_geometry(w, h, block_size)
    b = block_size
    return values.reshape(h // b, b, w // b, b).mean(axis=(1, 3)).reshape(-1)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center aligned bilinear resampling (same convention both ways)."""
    in_h, in_w = img.shape
    if out_h < 1 or out_w < 1:
        raise ConfigError("resize target must be at least 1x1")
    if (out_h, out_w) == (in_h, in_w):
        return img.astype(np.float64, copy=True)
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    img = np.asarray(img, dtype=np.float64)
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def spectral_residual_saliency(plane) -> np.ndarray:
    """Spectral-residual saliency map, normalized so the peak is 1.

    Pipeline: bilinear downscale (larger side to 64 px), log amplitude
    spectrum minus its 3x3 box-filtered version, inverse transform with
    the original phase, squared magnitude, 9x9 Gaussian blur (sigma 2.5),
    upscale back, divide by the maximum. A flat map degenerates to ones.
    """
    plane = _plane_of(plane)
    h, w = plane.shape
    if float(plane.max() - plane.min()) < 1e-9:
        # a flat frame has no salient content; report uniform weight
        return np.ones((h, w))
    side = max(h, w)
    if side > 64:
        sh = max(1, int(round(h * 64.0 / side)))
        sw = max(1, int(round(w * 64.0 / side)))
    else:
        sh, sw = h, w
    small = bilinear_resize(np.asarray(plane, dtype=np.float64), sh, sw)

    spec = np.fft.fft2(small)
    amp = np.abs(spec)
    phase = np.angle(spec)
    log_amp = np.log(amp + _EPS_LOG)
    residual = log_amp - uniform_filter(log_amp, size=3, mode="nearest")
    recon = np.fft.ifft2(np.exp(residual + 1j * phase))
    sal = np.abs(recon) ** 2
    sal = correlate(sal, _gaussian_kernel(9, 2.5), mode="nearest")
    sal = bilinear_resize(sal, h, w)
    peak = sal.max()
    if peak < _EPS_NORM:
        return np.ones_like(sal)
    return sal / peak


def _normalized_block_means(values: np.ndarray, block_size: int) -> np.ndarray:
    means = block_mean_map(values, block_size)
    top = means.max()
    if top < _EPS_NORM:
        return np.ones_like(means)
    return means / top


@dataclass
class ImportanceMap:
    texture: np.ndarray   # Q: normalized block-mean gradient magnitude
    saliency: np.ndarray  # S: normalized block-mean spectral residual
    fused: np.ndarray     # O: weighted fusion used by rate control
    alpha: float
    beta: float
    gamma: float


def fuse_importance(texture: np.ndarray, saliency: np.ndarray,
                    alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> np.ndarray:
    if alpha == 0.0 and beta == 0.0 and gamma == 0.0:
        raise ConfigError("importance fusion weights must not all be zero")
    if texture.shape != saliency.shape:
        raise ConfigError("texture and saliency maps must align")
    return alpha * texture + beta * saliency + gamma * texture * saliency


def compute_importance_map(frame: Frame, block_size: int,
                           alpha: float = 1.0, beta: float = 1.0,
                           gamma: float = 1.0) -> ImportanceMap:
    """Block importance of one frame from its texture and saliency."""
    grad = sobel_gradient_magnitude(frame.plane)
    q = _normalized_block_means(grad, block_size)
    sal = spectral_residual_saliency(frame.plane)
    s = _normalized_block_means(sal, block_size)
    o = fuse_importance(q, s, alpha, beta, gamma)
    return ImportanceMap(texture=q, saliency=s, fused=o,
                         alpha=alpha, beta=beta, gamma=gamma)
