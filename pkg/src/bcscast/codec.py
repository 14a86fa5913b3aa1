"""Block-level compressed sampling with one shared orthonormalized matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RateError
from .frames import Frame, blocks_from_plane

MIN_BLOCK_RATE = 10


@dataclass
class SamplingMatrix:
    """Orthonormalized Gaussian matrix shared by every block and frame."""

    block_size: int
    seed: int
    rows: np.ndarray = field(repr=False)  # (B*B, B*B), orthonormal rows

    @property
    def n(self) -> int:
        return self.block_size * self.block_size

    def operator(self, m: int) -> np.ndarray:
        """First m rows: the measurement operator at per-block rate m."""
        if not 1 <= m <= self.n:
            raise RateError(f"block rate {m} outside [1, {self.n}]")
        return self.rows[:m]


def _gram_schmidt_rows(a: np.ndarray) -> np.ndarray:
    """Orthonormalize rows in order, with a second projection pass for
    numerical hygiene. Row order is preserved so row prefixes are stable."""
    q = a.astype(np.float64, copy=True)
    n = q.shape[0]
    for i in range(n):
        for _ in range(2):
            if i:
                q[i] -= q[:i].T @ (q[:i] @ q[i])
        norm = np.linalg.norm(q[i])
        if norm < 1e-12:
            raise ConfigError("degenerate draw: row collapsed during orthonormalization")
        q[i] /= norm
    return q


def generate_sampling_matrix(block_size: int, seed: int) -> SamplingMatrix:
    if block_size < 2:
        raise ConfigError("block size must be >= 2")
    n = block_size * block_size
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, n))
    return SamplingMatrix(block_size=block_size, seed=seed,
                          rows=_gram_schmidt_rows(gauss))


def sample_block(x: np.ndarray, m: int, phi: SamplingMatrix) -> np.ndarray:
    return phi.operator(m) @ np.asarray(x, dtype=np.float64)


def pseudo_inverse_init(y: np.ndarray, m: int, phi: SamplingMatrix) -> np.ndarray:
    """Transpose back-projection; for orthonormal rows this is the pinv."""
    return phi.operator(m).T @ np.asarray(y, dtype=np.float64)


@dataclass
class MeasurementSet:
    """Per-block measurement vectors of one encoded frame.

    `rows[j]` lists which sampling-matrix rows produced samples[j]; None
    means the plain prefix 0..counts[j]-1 (the encoder always emits
    prefixes; erasures punch holes in them on the way to the decoder).
    """

    samples: list
    counts: np.ndarray
    kind: str
    frame_index: int
    rows: list | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.samples) != self.counts.size:
            raise ConfigError("sample list and count vector disagree")
        if self.kind not in ("I", "P"):
            raise ConfigError(f"frame kind must be I or P, got {self.kind!r}")

    @property
    def block_count(self) -> int:
        return self.counts.size

    def row_indices(self, j: int) -> np.ndarray:
        if self.rows is None:
            return np.arange(self.counts[j])
        return self.rows[j]


def sample_frame(frame: Frame, rates, phi: SamplingMatrix, kind: str,
                 frame_index: int) -> MeasurementSet:
    """Sample every block of a (possibly residual) frame at its own rate."""
    blocks = blocks_from_plane(frame.plane, phi.block_size)
    rates = np.asarray(rates, dtype=np.int64)
    if rates.size != blocks.shape[0]:
        raise ConfigError("one rate per block required")
    full = blocks @ phi.rows.T  # (M, n): row j holds all n samples of block j
    samples = [full[j, :rates[j]].copy() for j in range(rates.size)]
    return MeasurementSet(samples=samples, counts=rates, kind=kind,
                          frame_index=frame_index)
