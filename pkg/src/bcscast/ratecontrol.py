"""Two-stage sample budgeting: frames first, then blocks inside a frame.

Both stages share one mechanism: a floor allocation plus a share of the
remaining budget proportional to a weight vector, rounded half away
from zero, then corrected one sample at a time until the sum is exact.
Additions favor the heaviest weights (ties toward the lower index);
removals favor the lightest (ties toward the higher index); entries
already at a bound are skipped.
"""

from __future__ import annotations

import numpy as np

from .errors import BudgetError, ConfigError


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def _normalized_weights(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ConfigError("weight vector must be 1-D and non-empty")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        return np.full(w.size, 1.0 / w.size)
    return w / total


def _exact_budget(weights: np.ndarray, total: int, lo: int, hi: int,
                  what: str) -> np.ndarray:
    n = weights.size
    if lo > hi:
        raise ConfigError("lower bound exceeds upper bound")
    if total < n * lo or total > n * hi:
        raise BudgetError(
            f"{what} budget {total} outside feasible range [{n * lo}, {n * hi}]"
        )
    norm = _normalized_weights(weights)
    alloc = lo + _round_half_away(norm * float(total - n * lo))

    # Clamp overshoot and hand the excess back to the unclamped entries
    # in proportion to their weights; repeat if that clamps new entries.
    clamped = np.zeros(n, dtype=bool)
    while True:
        over = alloc > hi
        if not over.any():
            break
        excess = int((alloc[over] - hi).sum())
        alloc[over] = hi
        clamped |= over
        free = ~clamped
        if not free.any() or excess == 0:
            break
        share = norm[free] / norm[free].sum() if norm[free].sum() > 0 else None
        if share is None:
            break
        alloc[free] += _round_half_away(share * float(excess))

    # One-sample corrections until the sum is exact.
    idx = np.arange(n)
    while True:
        delta = total - int(alloc.sum())
        if delta == 0:
            break
        if delta > 0:
            order = np.lexsort((idx, -norm))
            eligible = order[alloc[order] < hi]
            if eligible.size == 0:
                raise BudgetError(f"{what} correction ran out of headroom")
            take = eligible[:delta]
            alloc[take] += 1
        else:
            order = np.lexsort((-idx, norm))
            eligible = order[alloc[order] > lo]
            if eligible.size == 0:
                raise BudgetError(f"{what} correction ran out of floor room")
            take = eligible[:(-delta)]
            alloc[take] -= 1
    return alloc


def allocate_frame_rates(complexities, data_budget: int, block_count: int,
                         min_block_rate: int, block_size: int) -> np.ndarray:
    """Split the sequence data budget over frames by texture complexity.

    Every frame keeps at least block_count * min_block_rate samples and
    at most block_count * block_size**2; the returned vector sums to
    data_budget exactly.
    """
    c = np.asarray(complexities, dtype=np.float64)
    lo = block_count * min_block_rate
    hi = block_count * block_size * block_size
    return _exact_budget(c, int(data_budget), lo, hi, "frame")


def allocate_block_rates(importance, frame_budget: int, min_block_rate: int,
                         block_size: int) -> np.ndarray:
    """Split one frame's sample budget over its blocks by importance."""
    o = np.asarray(importance, dtype=np.float64)
    return _exact_budget(o, int(frame_budget), min_block_rate,
                         block_size * block_size, "block")


def metadata_overhead(frame_count: int, block_count: int, packet_count: int) -> int:
    """Side-channel cost charged against the gross rate, in sample units."""
    return frame_count * block_count + frame_count * packet_count
