"""Rayleigh-fading OFDM downlink model with unequal packet protection.

Subchannels are handed out greedily so that the packet with the worst
capacity-to-importance ratio always picks the best remaining subchannel.
Power is then split by water-filling inside each packet while a damped
Newton iteration equalizes capacity/importance across packets under the
total power constraint. Subchannels whose water level falls below their
inverse CNR are deactivated and the solve repeats without them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AllocationError, ConfigError, TransmissionError
from .packets import PacketBatch

log = logging.getLogger(__name__)

_LN2 = np.log(2.0)


@dataclass
class ChannelRealization:
    """One OFDM channel draw: flat Rayleigh gain per subchannel."""

    gains: np.ndarray            # complex (L,)
    noise_power: float           # per-subchannel noise variance; 0 = noiseless
    csnr_db: float | None
    total_power: float
    seed: int | None = None

    @property
    def subchannel_count(self) -> int:
        return self.gains.size

    @property
    def noiseless(self) -> bool:
        return self.noise_power == 0.0

    def cnr(self) -> np.ndarray:
        if self.noiseless:
            raise ConfigError("CNR undefined for a noiseless channel")
        return np.abs(self.gains) ** 2 / self.noise_power

    def cnr_matrix(self, packet_count: int) -> np.ndarray:
        return np.tile(self.cnr(), (packet_count, 1))


def draw_channel(subchannel_count: int, csnr_db: float | None,
                 total_power: float, seed: int = 0) -> ChannelRealization:
    """Draw i.i.d. circularly symmetric unit-variance subchannel gains.

    The noise power is pinned so the mean received channel SNR at equal
    power split equals csnr_db; csnr_db=None models a noiseless link.
    """
    if subchannel_count < 1:
        raise ConfigError("need at least one subchannel")
    if total_power <= 0:
        raise ConfigError("total power must be positive")
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal(subchannel_count)
         + 1j * rng.standard_normal(subchannel_count)) / np.sqrt(2.0)
    if csnr_db is None or np.isinf(csnr_db):
        noise = 0.0
    else:
        noise = (total_power / subchannel_count) / (10.0 ** (csnr_db / 10.0))
    return ChannelRealization(gains=h, noise_power=noise, csnr_db=csnr_db,
                              total_power=total_power, seed=seed)


@dataclass
class TransmissionPlan:
    """Subchannel sets and powers for the packets of one frame."""

    packet_ids: np.ndarray        # which packets of the batch are covered
    omega: list                   # omega[i]: subchannel indices of packet_ids[i]
    power: np.ndarray             # per-subchannel power, zeros where unassigned
    capacities: np.ndarray        # per covered packet
    eta: np.ndarray
    total_power: float
    method: str = "waterfill"
    newton_iterations: int = 0
    deactivated: list = field(default_factory=list)

    def subchannels_for(self, i: int) -> np.ndarray:
        return np.sort(np.asarray(self.omega[i], dtype=np.int64))


def allocate_subchannels(cnr: np.ndarray, eta: np.ndarray, g_eq: float) -> list:
    """Greedy subchannel assignment under equal trial power g_eq.

    Every packet first grabs the best free subchannel (in packet order),
    then the packet minimizing capacity/importance repeatedly takes the
    best subchannel still free. Ties resolve to the lowest index.
    """
    cnr = np.asarray(cnr, dtype=np.float64)
    p_count, l_count = cnr.shape
    eta = np.asarray(eta, dtype=np.float64)
    if eta.size != p_count:
        raise ConfigError("one importance weight per packet required")
    if np.any(eta <= 0):
        raise ConfigError("packet importance must be positive")
    if l_count < p_count:
        raise ConfigError(f"{p_count} packets need at least that many subchannels, got {l_count}")

    available = np.ones(l_count, dtype=bool)
    omega = [[] for _ in range(p_count)]
    rates = np.zeros(p_count)

    def grab(p: int) -> None:
        masked = np.where(available, cnr[p], -np.inf)
        l = int(np.argmax(masked))
        available[l] = False
        omega[p].append(l)
        rates[p] += np.log2(1.0 + g_eq * cnr[p, l]) / l_count

    for p in range(p_count):
        grab(p)
    while available.any():
        grab(int(np.argmin(rates / eta)))
    return [np.array(sorted(o), dtype=np.int64) for o in omega]


def packet_capacity(cnr_row: np.ndarray, subchannels, power: np.ndarray,
                    l_count: int) -> float:
    s = np.asarray(subchannels, dtype=np.int64)
    return float(np.log2(1.0 + power[s] * cnr_row[s]).sum() / l_count)


class _PacketState:
    """Water-filling bookkeeping for one packet's active subchannels."""

    def __init__(self, cnr_row, subchannels):
        self.subchannels = list(subchannels)
        self.cnr_row = cnr_row
        self.refresh()

    def refresh(self):
        order = sorted(self.subchannels, key=lambda l: (self.cnr_row[l], l))
        self.active = order
        h = np.array([self.cnr_row[l] for l in order], dtype=np.float64)
        self.h = np.maximum(h, 1e-300)
        self.n = len(order)
        h1 = self.h[0]
        self.mu = float(((self.h - h1) / (self.h * h1)).sum())
        self.log2_xi = float((np.log2(self.h) - np.log2(h1)).sum() / self.n)

    def drop_weakest(self) -> int:
        l = self.active[0]
        self.subchannels.remove(l)
        self.refresh()
        return l

    def rate(self, gamma: float, l_count: int) -> float:
        g1 = (gamma - self.mu) / self.n
        return (self.n / l_count) * (np.log2(1.0 + self.h[0] * g1) + self.log2_xi)

    def rate_slope(self, gamma: float, l_count: int) -> float:
        g1 = (gamma - self.mu) / self.n
        return (self.h[0] / l_count) / ((1.0 + self.h[0] * g1) * _LN2)

    def subchannel_powers(self, gamma: float):
        g1 = (gamma - self.mu) / self.n
        g = g1 + (self.h - self.h[0]) / (self.h * self.h[0])
        return self.active, g


def _newton_equalize(states, eta, total_power, l_count,
                     max_iter=100, tol=1e-9):
    """Solve for per-packet power totals that equalize rate/importance.

    Unknowns are the totals of packets 1..P-1; packet 0 absorbs the
    power constraint. Returns (gamma, residual, iterations).
    """
    p_count = len(states)
    mu = np.array([s.mu for s in states])
    slack = total_power - mu.sum()
    gamma = np.full(p_count, total_power / p_count)
    if np.any(gamma <= mu):
        gamma = mu + slack * eta / eta.sum()

    def residuals(gm):
        r = np.array([states[p].rate(gm[p], l_count) / eta[p]
                      for p in range(p_count)])
        return r[1:] - r[0]

    if p_count == 1:
        return gamma, 0.0, 0

    res = residuals(gamma)
    best = np.max(np.abs(res))
    iters = 0
    for iters in range(1, max_iter + 1):
        if best < 1e-12:
            break
        slopes = np.array([states[p].rate_slope(gamma[p], l_count) / eta[p]
                           for p in range(p_count)])
        jac = np.full((p_count - 1, p_count - 1), slopes[0])
        jac[np.diag_indices(p_count - 1)] += slopes[1:]
        try:
            tail = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise AllocationError("singular Jacobian in power equalization") from exc
        step = np.empty(p_count)
        step[1:] = -tail
        step[0] = tail.sum()  # packet 0 absorbs the move, keeping the total fixed
        t = 1.0
        for _ in range(60):
            trial = gamma + t * step
            if np.all(trial > mu):
                break
            t *= 0.5
        else:
            break
        gamma = gamma + t * step
        res = residuals(gamma)
        cur = np.max(np.abs(res))
        if not np.isfinite(cur):
            raise AllocationError("power equalization diverged")
        best = cur
    return gamma, best, iters


def allocate_power(cnr: np.ndarray, omega: list, eta: np.ndarray,
                   total_power: float) -> TransmissionPlan:
    """Water-fill inside packets and equalize rate/importance across them."""
    cnr = np.asarray(cnr, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    p_count = len(omega)
    l_count = cnr.shape[1]
    if eta.size != p_count or np.any(eta <= 0):
        raise ConfigError("packet importance must be positive, one per packet")
    states = [_PacketState(cnr[p], omega[p]) for p in range(p_count)]
    deactivated = []

    for _round in range(l_count + 1):
        # drop subchannels until the floors leave room for positive power
        while sum(s.mu for s in states) >= total_power:
            victim = max((s for s in states if s.n > 1),
                         key=lambda s: s.mu, default=None)
            if victim is None:
                raise AllocationError("power budget cannot cover the assigned subchannels")
            deactivated.append(victim.drop_weakest())

        gamma, residual, iters = _newton_equalize(states, eta, total_power, l_count)
        if residual < 1e-9:
            break
        # not converged: retire the weakest subchannel of packets pinned
        # against their water-filling floor, then try again
        pinned = [s for p, s in enumerate(states)
                  if s.n > 1 and (gamma[p] - s.mu) / max(total_power, 1.0) < 1e-9]
        if not pinned:
            raise AllocationError(
                f"power equalization stalled at residual {residual:.3e}")
        for s in pinned:
            deactivated.append(s.drop_weakest())
    else:
        raise AllocationError("power allocation failed after exhausting subchannels")

    power = np.zeros(l_count)
    capacities = np.zeros(p_count)
    kept = []
    for p, s in enumerate(states):
        subs, g = s.subchannel_powers(gamma[p])
        if np.any(g < -1e-12):
            raise AllocationError("negative subchannel power after deactivation")
        power[subs] = np.maximum(g, 0.0)
        capacities[p] = s.rate(gamma[p], l_count)
        kept.append(np.array(sorted(subs), dtype=np.int64))
    return TransmissionPlan(packet_ids=np.arange(p_count), omega=kept,
                            power=power, capacities=capacities, eta=eta.copy(),
                            total_power=float(total_power),
                            newton_iterations=iters, deactivated=deactivated)


def equal_power_plan(cnr: np.ndarray | None, omega: list, eta: np.ndarray,
                     total_power: float, l_count: int) -> TransmissionPlan:
    """Fallback: uniform power over every assigned subchannel."""
    p_count = len(omega)
    g = total_power / l_count
    power = np.zeros(l_count)
    capacities = np.zeros(p_count)
    for p in range(p_count):
        idx = np.asarray(omega[p], dtype=np.int64)
        power[idx] = g
        if cnr is not None:
            capacities[p] = packet_capacity(cnr[p], idx, power, l_count)
    return TransmissionPlan(packet_ids=np.arange(p_count),
                            omega=[np.sort(np.asarray(o, dtype=np.int64)) for o in omega],
                            power=power, capacities=capacities,
                            eta=np.asarray(eta, dtype=np.float64),
                            total_power=float(total_power), method="equal")


def transmit(batch: PacketBatch, plan: TransmissionPlan, chan: ChannelRealization,
             noise_seed: int = 0, loss_rate: float = 0.0,
             loss_seed: int | None = None, scale_mode: str = "power") -> PacketBatch:
    """Push one frame's packets through the faded channel.

    Samples of a packet cycle over its subchannels in index order; each
    received sample is equalized back to signal scale, so the output
    batch carries signal plus equalized noise. Whole packets are erased
    with probability loss_rate.
    """
    if scale_mode not in ("power", "amplitude"):
        raise ConfigError(f"unknown scale mode {scale_mode!r}")
    if not 0.0 <= loss_rate <= 1.0:
        raise ConfigError("loss_rate must lie in [0, 1]")
    rng_noise = np.random.default_rng(noise_seed)
    rng_loss = np.random.default_rng(noise_seed + 1 if loss_seed is None else loss_seed)

    out_values = [np.asarray(v, dtype=np.float64).copy() for v in batch.values]
    erased = batch.erased.copy()
    covered = {int(p): i for i, p in enumerate(plan.packet_ids)}
    for p in range(batch.packet_count):
        s = out_values[p]
        if s.size == 0:
            continue
        if p not in covered:
            raise TransmissionError(f"packet {p} carries samples but has no subchannel")
        subs = plan.subchannels_for(covered[p])
        if subs.size == 0:
            raise TransmissionError(f"packet {p} was left without subchannels")
        idx = subs[np.arange(s.size) % subs.size]
        g = plan.power[idx]
        if np.any(g <= 0.0):
            raise TransmissionError(f"packet {p} assigned a zero-power subchannel")
        amp = np.sqrt(g) if scale_mode == "power" else g
        h = chan.gains[idx]
        noise = np.zeros(s.size, dtype=np.complex128)
        if not chan.noiseless:
            noise = (rng_noise.standard_normal(s.size)
                     + 1j * rng_noise.standard_normal(s.size)) * np.sqrt(chan.noise_power / 2.0)
        received = h * amp * s + noise
        out_values[p] = np.real(received / (h * amp))
        if loss_rate > 0.0 and rng_loss.random() < loss_rate:
            erased[p] = True
            out_values[p] = np.zeros(s.size)
    return PacketBatch(frame_index=batch.frame_index, packet_count=batch.packet_count,
                       counts=batch.counts.copy(), values=out_values, erased=erased)
