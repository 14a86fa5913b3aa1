"""Sample-interleaved packetization and the on-disk stream formats.

Packet p (0-based here, 1-based in dumps' packet numbering comments)
carries measurement index p of every block whose rate exceeds p, in
raster block order. Losing one packet therefore costs any block at most
one sample. Packet lengths are non-increasing in p and their normalized
form doubles as the packet importance profile.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import MeasurementSet
from .errors import ConfigError, CorruptStreamError, TruncatedInputError

_HEADER = struct.Struct("<IHIB")  # frame u32, packet u16, length u32, erased u8


@dataclass
class PacketBatch:
    """All packets of one frame, in packet order."""

    frame_index: int
    packet_count: int
    counts: np.ndarray               # per-block rates this batch was built from
    values: list = field(repr=False)  # values[p]: samples of packet p
    erased: np.ndarray = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.erased is None:
            self.erased = np.zeros(self.packet_count, dtype=bool)
        self.erased = np.asarray(self.erased, dtype=bool)
        if len(self.values) != self.packet_count or self.erased.size != self.packet_count:
            raise ConfigError("packet arrays disagree with packet_count")

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(v) for v in self.values], dtype=np.int64)

    def member_blocks(self, p: int) -> np.ndarray:
        """Raster-order indices of the blocks contributing to packet p."""
        return np.nonzero(self.counts > p)[0]

    def importance(self) -> np.ndarray:
        """Normalized length profile; zero-length packets get weight 0."""
        ln = self.lengths.astype(np.float64)
        total = ln.sum()
        if total <= 0:
            raise ConfigError("cannot weight an empty packet batch")
        return ln / total


def packetize(ms: MeasurementSet, packet_count: int) -> PacketBatch:
    counts = ms.counts
    if packet_count < int(counts.max(initial=0)):
        raise ConfigError("packet_count smaller than the largest block rate")
    values = []
    for p in range(packet_count):
        members = np.nonzero(counts > p)[0]
        values.append(np.array([ms.samples[j][p] for j in members], dtype=np.float64))
    return PacketBatch(frame_index=ms.frame_index, packet_count=packet_count,
                       counts=counts.copy(), values=values)


def depacketize(batch: PacketBatch, counts) -> tuple:
    """Rebuild per-block sample vectors plus received-sample masks.

    Samples lost to erased packets are zero-filled and flagged False in
    the mask; the caller drops the matching sampling-matrix rows.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if not np.array_equal(counts, batch.counts):
        raise CorruptStreamError("metadata rates disagree with the packet batch")
    m = counts.size
    samples = [np.zeros(counts[j], dtype=np.float64) for j in range(m)]
    masks = [np.zeros(counts[j], dtype=bool) for j in range(m)]
    for p in range(batch.packet_count):
        members = np.nonzero(counts > p)[0]
        vals = batch.values[p]
        if vals.size != members.size:
            raise CorruptStreamError(
                f"packet {p}: {vals.size} samples but {members.size} member blocks"
            )
        if batch.erased[p]:
            continue
        for pos, j in enumerate(members):
            samples[j][p] = vals[pos]
            masks[j][p] = True
    return samples, masks


def write_packet_dump(path: str, batches) -> None:
    with open(path, "wb") as fh:
        for batch in batches:
            for p in range(batch.packet_count):
                vals = np.asarray(batch.values[p], dtype="<f8")
                fh.write(_HEADER.pack(batch.frame_index, p, vals.size,
                                      int(batch.erased[p])))
                fh.write(vals.tobytes())


def read_packet_dump(path: str, meta: "SequenceMetadata") -> list:
    """Read a packet dump back into one PacketBatch per frame."""
    with open(path, "rb") as fh:
        raw = fh.read()
    offset = 0
    per_frame = {}
    while offset < len(raw):
        if offset + _HEADER.size > len(raw):
            raise TruncatedInputError(f"{path}: dangling packet header")
        frame, packet, length, erased = _HEADER.unpack_from(raw, offset)
        offset += _HEADER.size
        nbytes = 8 * length
        if offset + nbytes > len(raw):
            raise TruncatedInputError(f"{path}: packet payload cut short")
        vals = np.frombuffer(raw, dtype="<f8", count=length, offset=offset).copy()
        offset += nbytes
        per_frame.setdefault(frame, {})[packet] = (vals, bool(erased))
    batches = []
    for i, fr in enumerate(meta.frames):
        if i not in per_frame:
            raise CorruptStreamError(f"{path}: frame {i} missing from dump")
        packets = per_frame[i]
        pc = meta.packet_count
        if sorted(packets) != list(range(pc)):
            raise CorruptStreamError(f"{path}: frame {i} has a packet gap")
        values = [packets[p][0] for p in range(pc)]
        erased = np.array([packets[p][1] for p in range(pc)], dtype=bool)
        batch = PacketBatch(frame_index=i, packet_count=pc,
                            counts=np.asarray(fr["counts"], dtype=np.int64),
                            values=values, erased=erased)
        expect = np.array([(batch.counts > p).sum() for p in range(pc)])
        if not np.array_equal(batch.lengths, expect):
            raise CorruptStreamError(f"{path}: frame {i} lengths disagree with rates")
        batches.append(batch)
    return batches


@dataclass
class SequenceMetadata:
    """Lossless side-channel contents for one encoded sequence."""

    width: int
    height: int
    block_size: int
    gop_length: int
    matrix_seed: int
    packet_count: int
    frames: list          # dicts: {"index", "kind", "counts"}
    total_rate: int = 0
    overhead: int = 0
    transmission: dict | None = None

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def save(self, path: str) -> None:
        doc = {
            "width": self.width, "height": self.height,
            "block_size": self.block_size, "gop_length": self.gop_length,
            "matrix_seed": self.matrix_seed, "packet_count": self.packet_count,
            "total_rate": self.total_rate, "overhead": self.overhead,
            "frames": [
                {"index": f["index"], "kind": f["kind"],
                 "counts": [int(c) for c in f["counts"]]}
                for f in self.frames
            ],
        }
        if self.transmission is not None:
            doc["transmission"] = self.transmission
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path: str) -> "SequenceMetadata":
        with open(path) as fh:
            doc = json.load(fh)
        try:
            return cls(width=doc["width"], height=doc["height"],
                       block_size=doc["block_size"], gop_length=doc["gop_length"],
                       matrix_seed=doc["matrix_seed"], packet_count=doc["packet_count"],
                       frames=doc["frames"], total_rate=doc.get("total_rate", 0),
                       overhead=doc.get("overhead", 0),
                       transmission=doc.get("transmission"))
        except KeyError as exc:
            raise CorruptStreamError(f"{path}: missing metadata field {exc}") from exc
