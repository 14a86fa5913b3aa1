"""Experiment configuration: JSON file, overridable by CLI flags."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

DEFAULT_RATE_FRACTIONS = (0.25, 0.4, 0.55, 0.7)


@dataclass
class ExperimentConfig:
    # source material
    input: str | None = None          # raw .y/.yuv path; None synthesizes
    fmt: str | None = None            # override extension-based format pick
    pattern: str = "textured-noise-pan"
    width: int = 128
    height: int = 128
    frames: int = 32
    velocity: tuple = (1, 2)
    synth_seed: int = 11

    # encoder
    block_size: int = 8
    gop_length: int = 5
    m_min: int = 10
    rates: list | None = None         # gross sample budgets; None = derive
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    complexity_source: str = "encoded"   # or "original"
    importance_source: str = "original"  # or "encoded"
    matrix_seed: int = 7

    # channel
    csnr_db: list = field(default_factory=lambda: [15.0, 25.0, 35.0])
    total_power: float | None = None  # None = one unit per subchannel
    subchannels: int | None = None    # None = packet count (block_size^2)
    loss_rate: float = 0.0
    scale_mode: str = "power"
    channel_seed: int = 1000
    noise_seed: int = 2000
    loss_seed: int = 3000

    # reconstruction
    solver: str = "adaptive"
    kmax: int = 100
    eps: float = 1e-6
    window: int = 32
    knn: int = 10
    wiener: int = 3
    init: str = "spl"
    init_kmax: int | None = None
    p_frame_mode: str = "lift"

    # run control
    label: str | None = None
    out: str = "out"
    jobs: int = 1
    dump_alloc: bool = False
    dump_plan: bool = False
    dump_importance: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.frames < 1:
            raise ConfigError("clip geometry must be positive")
        if self.block_size < 2:
            raise ConfigError("block size must be >= 2")
        if self.m_min < 1 or self.m_min > self.block_size ** 2:
            raise ConfigError("m_min must lie in [1, block_size^2]")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ConfigError("loss_rate must lie in [0, 1]")
        if self.gop_length < 1:
            raise ConfigError("gop_length must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.scale_mode not in ("power", "amplitude"):
            raise ConfigError(f"unknown scale_mode {self.scale_mode!r}")
        if isinstance(self.velocity, list):
            self.velocity = tuple(self.velocity)

    # -- derived quantities ------------------------------------------------
    @property
    def block_count(self) -> int:
        if self.width % self.block_size or self.height % self.block_size:
            raise ConfigError("frame geometry is not tileable by the block size")
        return (self.width // self.block_size) * (self.height // self.block_size)

    @property
    def packet_count(self) -> int:
        return self.block_size ** 2

    @property
    def subchannel_count(self) -> int:
        return self.subchannels if self.subchannels is not None else self.packet_count

    @property
    def power_budget(self) -> float:
        return self.total_power if self.total_power is not None else float(self.subchannel_count)

    def overhead(self) -> int:
        from .ratecontrol import metadata_overhead

        return metadata_overhead(self.frames, self.block_count, self.packet_count)

    def rate_bounds(self) -> tuple:
        lo = self.frames * self.block_count * self.m_min + self.overhead()
        hi = self.frames * self.block_count * self.block_size ** 2 + self.overhead()
        return lo, hi

    def resolved_rates(self) -> list:
        lo, hi = self.rate_bounds()
        if self.rates is None:
            full = self.frames * self.block_count * self.block_size ** 2
            rates = [min(max(int(round(f * full)) + self.overhead(), lo), hi)
                     for f in DEFAULT_RATE_FRACTIONS]
            return sorted(set(rates))
        for r in self.rates:
            if not lo <= r <= hi:
                raise ConfigError(f"rate {r} outside feasible range [{lo}, {hi}]")
        return list(self.rates)

    @property
    def method_label(self) -> str:
        return self.label if self.label else self.solver

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["velocity"] = list(self.velocity)
        return doc


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(doc: dict) -> ExperimentConfig:
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**doc)


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional JSON file plus flag overrides."""
    doc = {}
    if path:
        with open(path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        doc.update(loaded)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return config_from_dict(doc)
