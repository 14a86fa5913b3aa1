"""Raw luma video handling: file IO, synthetic clips, block tiling.

Frames are stored as float64 arrays of shape (H, W) holding 8-bit luma
values promoted to doubles at load time. Blocks are vectorized
column-major (each B x B tile is read column by column) and enumerated
in raster order over the block grid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, DimensionError, TruncatedInputError

SYNTH_PATTERNS = ("constant", "ramp", "moving-gaussian-blob", "textured-noise-pan")


@dataclass
class Frame:
    """A single luma frame; plane has shape (height, width)."""

    plane: np.ndarray

    def __post_init__(self):
        self.plane = np.asarray(self.plane, dtype=np.float64)
        if self.plane.ndim != 2 or self.plane.size == 0:
            raise DimensionError("frame plane must be a non-empty 2-D array")

    @property
    def height(self) -> int:
        return self.plane.shape[0]

    @property
    def width(self) -> int:
        return self.plane.shape[1]

    def copy(self) -> "Frame":
        return Frame(self.plane.copy())


@dataclass
class VideoSequence:
    frames: list
    gop_length: int = 5

    def __post_init__(self):
        if self.gop_length < 1:
            raise ConfigError("gop_length must be >= 1")
        if not self.frames:
            raise DimensionError("sequence must hold at least one frame")
        w, h = self.frames[0].width, self.frames[0].height
        for f in self.frames:
            if f.width != w or f.height != h:
                raise DimensionError("all frames must share one geometry")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def frame_kind(self, i: int) -> str:
        return "I" if i % self.gop_length == 0 else "P"


@dataclass
class BlockGrid:
    """Blocked view of one frame: vectors of length B*B in raster block order."""

    block_size: int
    width: int
    height: int
    blocks: np.ndarray = field(repr=False)  # shape (M, B*B)

    @property
    def count(self) -> int:
        return self.blocks.shape[0]

    def block_origin(self, j: int):
        wb = self.width // self.block_size
        return (j // wb) * self.block_size, (j % wb) * self.block_size


def check_block_geometry(width: int, height: int, block_size: int) -> None:
    if block_size < 2:
        raise ConfigError("block size must be >= 2")
    if width % block_size or height % block_size:
        raise DimensionError(
            f"{width}x{height} frame is not tileable by {block_size}x{block_size} blocks"
        )


def tile_blocks(frame: Frame, block_size: int) -> BlockGrid:
    """Split a frame into column-major block vectors, raster block order."""
    h, w = frame.plane.shape
    check_block_geometry(w, h, block_size)
    b = block_size
    hb, wb = h // b, w // b
    # axes become (block_row, block_col, x, y) so a C-order reshape yields
    # column-major vectors: entry x*b + y is pixel (y, x) of the tile.
    blocks = frame.plane.reshape(hb, b, wb, b).transpose(0, 2, 3, 1).reshape(hb * wb, b * b)
    return BlockGrid(block_size=b, width=w, height=h, blocks=np.ascontiguousarray(blocks))


def untile_blocks(grid: BlockGrid) -> Frame:
    b = grid.block_size
    hb, wb = grid.height // b, grid.width // b
    if grid.blocks.shape != (hb * wb, b * b):
        raise DimensionError("block array does not match the declared geometry")
    plane = grid.blocks.reshape(hb, wb, b, b).transpose(0, 3, 1, 2).reshape(grid.height, grid.width)
    return Frame(np.ascontiguousarray(plane))


def blocks_from_plane(plane: np.ndarray, block_size: int) -> np.ndarray:
    """Convenience wrapper returning just the (M, B*B) array."""
    return tile_blocks(Frame(plane), block_size).blocks


def plane_from_blocks(blocks: np.ndarray, width: int, height: int, block_size: int) -> np.ndarray:
    grid = BlockGrid(block_size=block_size, width=width, height=height, blocks=blocks)
    return untile_blocks(grid).plane


def compute_residual(curr: Frame, prev: Frame) -> Frame:
    if curr.plane.shape != prev.plane.shape:
        raise DimensionError("residual needs frames of identical geometry")
    return Frame(curr.plane - prev.plane)


def _frame_stride(width: int, height: int, fmt: str) -> int:
    if fmt == "y":
        return width * height
    if fmt == "yuv420":
        if width % 2 or height % 2:
            raise DimensionError("yuv420 requires even frame dimensions")
        return width * height * 3 // 2
    raise ConfigError(f"unknown raw video format {fmt!r}")


def format_from_path(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".y":
        return "y"
    if ext == ".yuv":
        return "yuv420"
    raise ConfigError(f"cannot infer raw format from extension {ext!r}")


def load_video(path: str, width: int, height: int, frame_count: int,
               fmt: str | None = None, gop_length: int = 5) -> VideoSequence:
    """Read a headerless raw clip, keeping only the luma plane."""
    if fmt is None:
        fmt = format_from_path(path)
    stride = _frame_stride(width, height, fmt)
    luma = width * height
    data = np.fromfile(path, dtype=np.uint8)
    need = stride * frame_count
    if data.size < need:
        raise TruncatedInputError(
            f"{path}: {data.size} bytes but {need} needed for {frame_count} frames"
        )
    frames = []
    for i in range(frame_count):
        plane = data[i * stride: i * stride + luma].astype(np.float64)
        frames.append(Frame(plane.reshape(height, width)))
    return VideoSequence(frames=frames, gop_length=gop_length)


def write_video(path: str, seq: VideoSequence, fmt: str | None = None) -> None:
    """Write frames back out as raw 8-bit; chroma (if any) is neutral gray."""
    if fmt is None:
        fmt = format_from_path(path)
    _frame_stride(seq.width, seq.height, fmt)  # validates fmt and geometry
    chunks = []
    for f in seq.frames:
        y8 = np.clip(np.rint(f.plane), 0, 255).astype(np.uint8)
        chunks.append(y8.tobytes())
        if fmt == "yuv420":
            chunks.append(np.full(seq.width * seq.height // 2, 128, dtype=np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _blob_base(width, height, rng):
    cy, cx = height / 2.0, width / 2.0
    yy = np.arange(height)[:, None]
    xx = np.arange(width)[None, :]
    # toroidal distances keep integer rolls exact
    dy = np.minimum(np.abs(yy - cy), height - np.abs(yy - cy))
    dx = np.minimum(np.abs(xx - cx), width - np.abs(xx - cx))
    sigma = max(min(width, height) / 8.0, 2.0)
    bump = np.exp(-(dx ** 2 + dy ** 2) / (2.0 * sigma ** 2))
    return 20.0 + 215.0 * bump


def _texture_base(width, height, rng):
    noise = rng.standard_normal((height, width))
    smooth = gaussian_filter(noise, sigma=2.0, mode="wrap")
    lo, hi = smooth.min(), smooth.max()
    if hi - lo < 1e-12:
        return np.full((height, width), 128.0)
    return 255.0 * (smooth - lo) / (hi - lo)


def synthesize_video(width: int, height: int, frame_count: int, pattern: str,
                     seed: int = 0, velocity=(1, 2), gop_length: int = 5) -> VideoSequence:
    """Deterministic synthetic clips for desk experiments.

    Moving patterns advance by integer `velocity` (rows, cols) per frame
    with wraparound, so frame t+1 is exactly frame t rolled by velocity.
    """
    if pattern not in SYNTH_PATTERNS:
        raise ConfigError(f"unknown synth pattern {pattern!r}; choose from {SYNTH_PATTERNS}")
    if frame_count < 1:
        raise ConfigError("frame_count must be >= 1")
    rng = np.random.default_rng(seed)
    vy, vx = int(velocity[0]), int(velocity[1])

    if pattern == "constant":
        base = np.full((height, width), 128.0)
        moving = False
    elif pattern == "ramp":
        base = np.tile(np.linspace(0.0, 255.0, width), (height, 1))
        moving = False
    elif pattern == "moving-gaussian-blob":
        base = _blob_base(width, height, rng)
        moving = True
    else:  # textured-noise-pan
        base = _texture_base(width, height, rng)
        moving = True

    frames = []
    for t in range(frame_count):
        if moving:
            plane = np.roll(base, shift=(t * vy, t * vx), axis=(0, 1))
        else:
            plane = base
        frames.append(Frame(plane.copy()))
    return VideoSequence(frames=frames, gop_length=gop_length)
