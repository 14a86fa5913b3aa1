"""Iterative frame reconstruction from block measurements.

Two solvers share one smooth-project-threshold-project loop. The fixed
solver runs a blockwise orthonormal DCT with a universal hard threshold.
The adaptive solver rebuilds, every iteration and for every block, an
eigenbasis of the most similar patches found in the previous
reconstructed frame, and shrinks coefficients with a soft threshold
scaled by a global noise estimate and a local signal variance taken
over the 3x3 block neighborhood at the same coefficient index.

Both solvers stop once the change of the iteration error falls below
eps, where the error is the Frobenius distance between the frame after
the second projection and the frame after the first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct
from scipy.ndimage import uniform_filter

from .codec import MeasurementSet, SamplingMatrix
from .errors import ConfigError, CorruptStreamError, DimensionError
from .frames import Frame, blocks_from_plane, plane_from_blocks

_MAD_TO_SIGMA = 0.6745
_COV_TRACE_FLOOR = 1e-9


@dataclass
class ReconstructionParams:
    kmax: int = 100
    eps: float = 1e-6
    wiener_window: int = 3
    search_window: int = 32       # side of the patch search window, pixels
    neighbor_count: int = 10      # K most similar patches per block
    init: str = "spl"             # "spl" or "backproject"
    init_kmax: int | None = None  # iteration cap for the fixed-basis warm start
    p_frame_mode: str = "lift"    # "lift" or "residual"
    solver: str = "adaptive"      # "adaptive" or "spl"

    def __post_init__(self):
        if self.kmax < 1:
            raise ConfigError("kmax must be >= 1")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.wiener_window < 1 or self.wiener_window % 2 == 0:
            raise ConfigError("wiener window must be odd and positive")
        if self.init not in ("spl", "backproject"):
            raise ConfigError(f"unknown init mode {self.init!r}")
        if self.p_frame_mode not in ("lift", "residual"):
            raise ConfigError(f"unknown p-frame mode {self.p_frame_mode!r}")
        if self.solver not in ("adaptive", "spl"):
            raise ConfigError(f"unknown solver {self.solver!r}")


def wiener_smooth(plane: np.ndarray, window: int = 3) -> np.ndarray:
    """Adaptive Wiener filter with the noise floor taken as the mean
    local variance; replicate borders."""
    p = np.asarray(plane, dtype=np.float64)
    mean = uniform_filter(p, size=window, mode="nearest")
    mean_sq = uniform_filter(p * p, size=window, mode="nearest")
    var = np.maximum(mean_sq - mean * mean, 0.0)
    floor = var.mean()
    gain = np.where(var > floor, (var - floor) / np.where(var > 0, var, 1.0), 0.0)
    return mean + gain * (p - mean)


@lru_cache(maxsize=8)
def dct_matrix(block_size: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; rows are the analysis functions."""
    return dct(np.eye(block_size), axis=0, norm="ortho")


@lru_cache(maxsize=8)
def fixed_block_basis(block_size: int) -> np.ndarray:
    """Separable 2-D DCT basis for column-major block vectors.

    Columns are basis vectors, so analysis is basis.T @ x and synthesis
    is basis @ v; the matrix is orthonormal.
    """
    d = dct_matrix(block_size)
    return np.kron(d, d).T


def estimate_noise_sigma(coeffs: np.ndarray) -> tuple:
    """Robust center and spread of a coefficient population."""
    v = np.asarray(coeffs, dtype=np.float64).ravel()
    if v.size == 0:
        raise DimensionError("cannot estimate noise from an empty coefficient set")
    center = float(np.median(v))
    sigma = float(np.median(np.abs(v - center)) / _MAD_TO_SIGMA)
    return center, sigma


def universal_hard_threshold(coeffs: np.ndarray) -> np.ndarray:
    _, sigma = estimate_noise_sigma(coeffs)
    tau = sigma * np.sqrt(2.0 * np.log(coeffs.size))
    return np.where(np.abs(coeffs) > tau, coeffs, 0.0)


def soft_threshold(coeffs: np.ndarray, noise_sigma: float,
                   signal_sigma: np.ndarray) -> np.ndarray:
    """Shrink by sqrt(2) * noise_sigma^2 / signal_sigma, elementwise.

    A zero signal estimate kills the coefficient; zero noise passes
    everything through untouched.
    """
    v = np.asarray(coeffs, dtype=np.float64)
    if noise_sigma == 0.0:
        return v.copy()
    s = np.asarray(signal_sigma, dtype=np.float64)
    with np.errstate(divide="ignore"):
        thr = np.where(s > 0.0, np.sqrt(2.0) * noise_sigma ** 2 / np.where(s > 0, s, 1.0),
                       np.inf)
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def signal_variance_field(coeff_grid: np.ndarray, noise_sigma: float) -> np.ndarray:
    """Per-coefficient signal variance over 3x3 block neighborhoods.

    coeff_grid has shape (block_rows, block_cols, n); borders average
    over the neighbors actually present instead of a padded count.
    """
    v2 = coeff_grid * coeff_grid
    summed = uniform_filter(v2, size=(3, 3, 1), mode="constant", cval=0.0) * 9.0
    counts = uniform_filter(np.ones(coeff_grid.shape[:2]), size=3,
                            mode="constant", cval=0.0) * 9.0
    mean_sq = summed / counts[:, :, None]
    return np.maximum(mean_sq - noise_sigma ** 2, 0.0)


def estimate_signal_variance(coeff_grid: np.ndarray, block_row: int, block_col: int,
                             coeff_index: int, noise_sigma: float) -> float:
    """Single-entry view of signal_variance_field, mostly for checks."""
    return float(signal_variance_field(coeff_grid, noise_sigma)
                 [block_row, block_col, coeff_index])


def build_adaptive_transform(cur_vec: np.ndarray, origin: tuple,
                             prev_plane: np.ndarray, search_window: int,
                             neighbor_count: int, block_size: int) -> np.ndarray:
    """Eigenbasis of the covariance of the K nearest patches.

    Patches slide with stride 1 inside a search_window x search_window
    box centered on the block, clipped to the frame; similarity is MSE
    against cur_vec with ties resolved to the lower scan index. Columns
    of the result are eigenvectors in descending eigenvalue order; a
    near-zero covariance trace falls back to the DCT basis.
    """
    b = block_size
    prev_plane = np.asarray(prev_plane, dtype=np.float64)
    h, w = prev_plane.shape
    if search_window < b:
        raise ConfigError("search window must cover at least one block")
    r_lo, r_hi, c_lo, c_hi = _window_bounds(origin, search_window, b, h, w)
    wins = sliding_window_view(prev_plane, (b, b))
    cand = wins[r_lo:r_hi, c_lo:c_hi].transpose(0, 1, 3, 2).reshape(-1, b * b)
    return _basis_from_candidates(cand, cur_vec, neighbor_count, b)


def _window_bounds(origin, search_window, block_size, height, width):
    r0, c0 = origin
    cy, cx = r0 + block_size // 2, c0 + block_size // 2
    half = search_window // 2
    r_lo = max(0, cy - half)
    c_lo = max(0, cx - half)
    r_hi = min(height, cy + half) - block_size + 1
    c_hi = min(width, cx + half) - block_size + 1
    return r_lo, max(r_hi, r_lo + 1), c_lo, max(c_hi, c_lo + 1)


def _complete_basis(leading: np.ndarray, block_size: int) -> np.ndarray:
    """Extend a thin orthonormal column set to a full deterministic basis.

    The patch covariance has rank at most K, so its zero eigenspace has
    no preferred basis; filling it with DCT vectors orthogonalized
    against the leading eigenvectors keeps coefficient slots comparable
    across blocks (in particular the flat component stays in one slot
    instead of smearing over an arbitrary null basis).
    """
    n = block_size * block_size
    if leading.shape[1] >= n:
        return np.ascontiguousarray(leading[:, :n])
    stack = np.concatenate([leading, fixed_block_basis(block_size)], axis=1)
    q, _ = np.linalg.qr(stack)
    return np.ascontiguousarray(q[:, :n])


def _basis_from_candidates(cand, cur_vec, neighbor_count, block_size):
    diff = cand - np.asarray(cur_vec, dtype=np.float64)
    sse = np.einsum("ij,ij->i", diff, diff)
    pick = np.argsort(sse, kind="stable")[:max(neighbor_count, 1)]
    w = cand[pick]
    w = w - w.mean(axis=1, keepdims=True)
    cov = w.T @ w / pick.size
    if np.trace(cov) < _COV_TRACE_FLOOR:
        return fixed_block_basis(block_size)
    vals, vecs = np.linalg.eigh(cov)
    rank = int((vals > max(vals[-1] * 1e-10, 1e-12)).sum())
    return _complete_basis(vecs[:, ::-1][:, :rank], block_size)


def _measurement_matrices(ms: MeasurementSet, phi: SamplingMatrix):
    n = phi.n
    m_blocks = ms.block_count
    y = np.zeros((m_blocks, n))
    mask = np.zeros((m_blocks, n))
    for j in range(m_blocks):
        rows = ms.row_indices(j)
        y[j, rows] = ms.samples[j]
        mask[j, rows] = 1.0
    return y, mask


def _project(x, y, mask, phi_rows):
    """Enforce consistency with the received samples of every block."""
    return x + ((y - x @ phi_rows.T) * mask) @ phi_rows


def bcs_spl(ms: MeasurementSet, phi: SamplingMatrix, width: int, height: int,
            transform: np.ndarray | None = None,
            params: ReconstructionParams | None = None,
            kmax: int | None = None):
    """Fixed-basis smoothed projected Landweber solve.

    Returns (frame, info); info records the iteration error trail. The
    transform argument takes a synthesis basis (columns orthonormal) and
    defaults to the blockwise DCT.
    """
    params = params or ReconstructionParams()
    basis = fixed_block_basis(phi.block_size) if transform is None else transform
    y, mask = _measurement_matrices(ms, phi)
    phi_rows = phi.rows
    x = (y * mask) @ phi_rows
    limit = kmax if kmax is not None else params.kmax
    errors = []
    prev_err = None
    for _ in range(limit):
        smoothed = blocks_from_plane(
            wiener_smooth(plane_from_blocks(x, width, height, phi.block_size),
                          params.wiener_window), phi.block_size)
        x_t = _project(smoothed, y, mask, phi_rows)
        coeffs = x_t @ basis
        coeffs = universal_hard_threshold(coeffs)
        x_b = coeffs @ basis.T
        x = _project(x_b, y, mask, phi_rows)
        err = float(np.linalg.norm(x - x_t))
        errors.append(err)
        if prev_err is not None and abs(err - prev_err) < params.eps:
            break
        prev_err = err
    frame = Frame(plane_from_blocks(x, width, height, phi.block_size))
    return frame, {"stage": "spl", "iterations": len(errors), "errors": errors}


def _candidate_table(prev_plane: np.ndarray, block_size: int, block_origins,
                     search_window: int):
    """Sliding patches of the previous frame, vectorized column-major,
    plus per-block index bounds into the candidate grid."""
    b = block_size
    h, w = prev_plane.shape
    wins = sliding_window_view(np.asarray(prev_plane, dtype=np.float64), (b, b))
    vecs = np.ascontiguousarray(wins.transpose(0, 1, 3, 2)).reshape(
        wins.shape[0], wins.shape[1], b * b)
    bounds = [_window_bounds(o, search_window, b, h, w) for o in block_origins]
    return vecs, bounds


def recon_frame(ms: MeasurementSet, phi: SamplingMatrix, prev_recon: Frame,
                params: ReconstructionParams, width: int, height: int,
                init_frame: Frame | None = None):
    """Adaptive-basis reconstruction leaning on the previous frame.

    Returns (frame, info). The measurement set must describe the frame
    being reconstructed (callers lift residual measurements first and may
    pass the lifted starting frame via init_frame).
    """
    b = phi.block_size
    n = phi.n
    y, mask = _measurement_matrices(ms, phi)
    phi_rows = phi.rows
    m_blocks = ms.block_count
    hb, wb = height // b, width // b
    if m_blocks != hb * wb:
        raise DimensionError("measurement set does not tile the frame")

    info = {"stage": "adaptive", "errors": []}
    if init_frame is not None:
        x = blocks_from_plane(init_frame.plane, b)
    elif params.init == "spl":
        warm, warm_info = bcs_spl(ms, phi, width, height, params=params,
                                  kmax=params.init_kmax)
        x = blocks_from_plane(warm.plane, b)
        info["init"] = warm_info
    else:
        x = (y * mask) @ phi_rows

    origins = [((j // wb) * b, (j % wb) * b) for j in range(m_blocks)]
    cand_vecs, bounds = _candidate_table(prev_recon.plane, b, origins,
                                         params.search_window)
    dct_basis = fixed_block_basis(b)
    kk = max(params.neighbor_count, 1)

    prev_err = None
    covs = np.empty((m_blocks, n, n))
    for _ in range(params.kmax):
        smoothed = blocks_from_plane(
            wiener_smooth(plane_from_blocks(x, width, height, b),
                          params.wiener_window), b)
        x_t = _project(smoothed, y, mask, phi_rows)

        for j in range(m_blocks):
            r_lo, r_hi, c_lo, c_hi = bounds[j]
            cand = cand_vecs[r_lo:r_hi, c_lo:c_hi].reshape(-1, n)
            diff = cand - x_t[j]
            sse = np.einsum("ij,ij->i", diff, diff)
            pick = np.argsort(sse, kind="stable")[:min(kk, sse.size)]
            wsel = cand[pick]
            wsel = wsel - wsel.mean(axis=1, keepdims=True)
            covs[j] = wsel.T @ wsel / pick.size
        traces = np.einsum("mii->m", covs)
        eigvals, eigvecs = np.linalg.eigh(covs)
        degenerate = traces < _COV_TRACE_FLOOR
        bases = np.empty_like(covs)
        rank_floor = np.maximum(eigvals[:, -1] * 1e-10, 1e-12)
        ranks = (eigvals > rank_floor[:, None]).sum(axis=1)
        for j in range(m_blocks):
            if degenerate[j]:
                bases[j] = dct_basis
            else:
                lead = eigvecs[j][:, ::-1][:, :ranks[j]]
                bases[j] = _complete_basis(lead, b)

        coeffs = np.matmul(bases.transpose(0, 2, 1), x_t[:, :, None])[:, :, 0]
        _, noise_sigma = estimate_noise_sigma(coeffs)
        var = signal_variance_field(coeffs.reshape(hb, wb, n), noise_sigma)
        shrunk = soft_threshold(coeffs, noise_sigma,
                                np.sqrt(var).reshape(m_blocks, n))
        x_b = np.matmul(bases, shrunk[:, :, None])[:, :, 0]
        x = _project(x_b, y, mask, phi_rows)

        err = float(np.linalg.norm(x - x_t))
        info["errors"].append(err)
        if prev_err is not None and abs(err - prev_err) < params.eps:
            break
        prev_err = err
    info["iterations"] = len(info["errors"])
    frame = Frame(plane_from_blocks(x, width, height, b))
    return frame, info


def _fold_erasures(ms: MeasurementSet, samples, masks) -> MeasurementSet:
    kept_samples = []
    kept_rows = []
    for j in range(ms.block_count):
        got = np.nonzero(masks[j])[0]
        kept_rows.append(got)
        kept_samples.append(samples[j][got])
    return MeasurementSet(samples=kept_samples, counts=ms.counts, kind=ms.kind,
                          frame_index=ms.frame_index, rows=kept_rows)


def measurements_from_batch(batch, kind: str) -> MeasurementSet:
    """Turn a received packet batch back into per-block measurements with
    erased rows dropped."""
    from .packets import depacketize

    samples, masks = depacketize(batch, batch.counts)
    base = MeasurementSet(samples=samples, counts=batch.counts, kind=kind,
                          frame_index=batch.frame_index)
    return _fold_erasures(base, samples, masks)


def lift_residual_measurements(ms: MeasurementSet, phi: SamplingMatrix,
                               prev_recon: Frame) -> MeasurementSet:
    """Add the previous reconstruction's samples so residual measurements
    describe the full frame; works row-set by row-set, so erasures keep
    their holes."""
    prev_blocks = blocks_from_plane(prev_recon.plane, phi.block_size)
    lifted = []
    rows = []
    for j in range(ms.block_count):
        r = ms.row_indices(j)
        rows.append(r)
        lifted.append(ms.samples[j] + phi.rows[r] @ prev_blocks[j])
    return MeasurementSet(samples=lifted, counts=ms.counts, kind="I",
                          frame_index=ms.frame_index, rows=rows)


def decode_sequence(batches, meta, params: ReconstructionParams | None = None):
    """Reconstruct a whole sequence from received packet batches.

    Returns (VideoSequence, per-frame info list). A frame whose packets
    were all erased is concealed by repeating the previous output and
    flagged failed in its info row.
    """
    from .codec import generate_sampling_matrix
    from .frames import VideoSequence

    params = params or ReconstructionParams()
    phi = generate_sampling_matrix(meta.block_size, meta.matrix_seed)
    width, height = meta.width, meta.height
    frames = []
    infos = []
    prev_internal = None
    for i, fdesc in enumerate(meta.frames):
        batch = batches[i]
        kind = fdesc["kind"]
        ms = measurements_from_batch(batch, kind)
        received = sum(int(s.size) for s in ms.samples)
        if received == 0:
            conceal = prev_internal if prev_internal is not None else Frame(
                np.full((height, width), 128.0))
            frames.append(Frame(np.clip(conceal.plane, 0.0, 255.0)))
            infos.append({"frame": i, "kind": kind, "failed": True,
                          "stage": "concealed", "iterations": 0})
            prev_internal = conceal
            continue

        if kind == "P" and prev_internal is None:
            raise CorruptStreamError(f"frame {i} is predictive but no frame precedes it")
        if kind == "I":
            if prev_internal is None or params.solver == "spl":
                out, info = bcs_spl(ms, phi, width, height, params=params)
            else:
                out, info = recon_frame(ms, phi, prev_internal, params,
                                        width, height)
        else:
            if params.solver == "spl":
                res, info = bcs_spl(ms, phi, width, height, params=params)
                out = Frame(res.plane + prev_internal.plane)
            elif params.p_frame_mode == "lift":
                lifted = lift_residual_measurements(ms, phi, prev_internal)
                start = None
                if params.init == "spl":
                    res, res_info = bcs_spl(ms, phi, width, height,
                                            params=params,
                                            kmax=params.init_kmax)
                    start = Frame(res.plane + prev_internal.plane)
                out, info = recon_frame(lifted, phi, prev_internal, params,
                                        width, height, init_frame=start)
                if start is not None:
                    info["init"] = res_info
            else:
                res, info = recon_frame(ms, phi, prev_internal, params,
                                        width, height)
                out = Frame(res.plane + prev_internal.plane)
        prev_internal = out
        frames.append(Frame(np.clip(out.plane, 0.0, 255.0)))
        infos.append({"frame": i, "kind": kind, "failed": False,
                      "stage": info.get("stage"),
                      "iterations": info.get("iterations", 0),
                      "errors": info.get("errors", [])})
    return VideoSequence(frames=frames, gop_length=meta.gop_length), infos
