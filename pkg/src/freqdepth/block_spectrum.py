"""Patch layout, whole-map block DCT, and subdiagonal frequency scheduling.

Coefficient volumes are stored channel-first: channel ``c = u * S + v``
holds frequency (u, v) of every S x S patch, giving shape
``(..., S*S, H/S, W/S)``.  Leading batch axes pass straight through.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor_ad as ad
from .dct_core import dct2_fast, idct2_fast, make_basis
from .tensor_ad import ShapeError, Tensor

DEFAULT_S = 8
# groups {6,7} and {8..14} merged, everything below kept separate
DEFAULT_MERGE_S8 = [[0], [1], [2], [3], [4], [5], [6, 7], list(range(8, 15))]


@dataclass
class DepthMap:
    """Depth in meters over an (..., H, W) grid; ``valid`` defaults to finite positive values."""

    values: np.ndarray | Tensor
    valid: np.ndarray | None = None

    def __post_init__(self):
        if self.valid is None:
            v = self.array
            self.valid = np.isfinite(v) & (v > 0)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.shape:
            raise ShapeError(f"mask shape {self.valid.shape} != depth shape {self.shape}")

    @property
    def array(self) -> np.ndarray:
        return self.values.data if isinstance(self.values, Tensor) else np.asarray(self.values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def height(self) -> int:
        return self.shape[-2]

    @property
    def width(self) -> int:
        return self.shape[-1]


@dataclass
class CoefficientVolume:
    coeffs: np.ndarray | Tensor
    valid_freq: np.ndarray
    size: int = DEFAULT_S
    # (H, W) before reflect padding, when padding was applied
    crop: tuple[int, int] | None = None

    def __post_init__(self):
        self.valid_freq = np.asarray(self.valid_freq, dtype=bool).reshape(-1)
        s2 = self.size * self.size
        if self.valid_freq.shape != (s2,):
            raise ShapeError(f"valid_freq must have {s2} entries, got {self.valid_freq.shape}")
        if len(self.shape) < 3 or self.shape[-3] != s2:
            raise ShapeError(f"coefficient volume must be (..., {s2}, h, w), got {self.shape}")

    @property
    def array(self) -> np.ndarray:
        return self.coeffs.data if isinstance(self.coeffs, Tensor) else np.asarray(self.coeffs)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.coeffs.shape)

    def channel_mask(self) -> np.ndarray:
        """valid_freq broadcast to the full coefficient shape."""
        return np.broadcast_to(self.valid_freq[:, None, None], self.shape)

    def masked(self) -> "CoefficientVolume":
        m = self.channel_mask()
        c = ad.mul(self.coeffs, m) if isinstance(self.coeffs, Tensor) else np.where(m, self.coeffs, 0.0)
        return CoefficientVolume(c, self.valid_freq.copy(), self.size, self.crop)


@dataclass
class GroupSchedule:
    size: int
    steps: list[list[tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for step in self.steps:
            for uv in step:
                if uv in seen:
                    raise ValueError(f"frequency {uv} appears in more than one step")
                seen.add(uv)
        full = {(u, v) for u in range(self.size) for v in range(self.size)}
        if seen != full:
            raise ValueError(f"schedule misses {len(full - seen)} frequencies")

    def __len__(self) -> int:
        return len(self.steps)

    def step_mask(self, k: int) -> np.ndarray:
        m = np.zeros(self.size * self.size, dtype=bool)
        for u, v in self.steps[k]:
            m[u * self.size + v] = True
        return m

    def cumulative_mask(self, k: int) -> np.ndarray:
        """Channels introduced by steps 0..k (k = -1 gives the empty set)."""
        m = np.zeros(self.size * self.size, dtype=bool)
        for j in range(k + 1):
            m |= self.step_mask(j)
        return m

    def cumulative_counts(self) -> list[int]:
        return [int(self.cumulative_mask(k).sum()) for k in range(len(self))]


# ---------------------------------------------------------------------------
# patch layout

def patchify(x, size: int = DEFAULT_S):
    """(..., H, W) -> (..., H/S, W/S, S, S)."""
    shape = tuple(x.shape)
    h, w = shape[-2:]
    if h % size or w % size:
        raise ShapeError(f"extent {h}x{w} is not a multiple of {size}")
    lead = shape[:-2]
    r = len(lead)
    perm = tuple(range(r)) + (r, r + 2, r + 1, r + 3)
    new = lead + (h // size, size, w // size, size)
    if isinstance(x, Tensor):
        return ad.transpose(ad.reshape(x, new), perm)
    return np.asarray(x).reshape(new).transpose(perm)


def unpatchify(p):
    """(..., hb, wb, S, S) -> (..., hb*S, wb*S)."""
    shape = tuple(p.shape)
    lead, (hb, wb, s, _) = shape[:-4], shape[-4:]
    r = len(lead)
    perm = tuple(range(r)) + (r, r + 2, r + 1, r + 3)
    new = lead + (hb * s, wb * s)
    if isinstance(p, Tensor):
        return ad.reshape(ad.transpose(p, perm), new)
    return np.asarray(p).transpose(perm).reshape(new)


def _to_channels(f, size):
    """(..., hb, wb, S, S) -> (..., S*S, hb, wb)."""
    shape = tuple(f.shape)
    lead, (hb, wb) = shape[:-4], shape[-4:-2]
    r = len(lead)
    flat = lead + (hb, wb, size * size)
    perm = tuple(range(r)) + (r + 2, r, r + 1)
    if isinstance(f, Tensor):
        return ad.transpose(ad.reshape(f, flat), perm)
    return f.reshape(flat).transpose(perm)


def _from_channels(c, size):
    shape = tuple(c.shape)
    lead, (_, hb, wb) = shape[:-3], shape[-3:]
    r = len(lead)
    perm = tuple(range(r)) + (r + 1, r + 2, r)
    new = lead + (hb, wb, size, size)
    if isinstance(c, Tensor):
        return ad.reshape(ad.transpose(c, perm), new)
    return np.asarray(c).transpose(perm).reshape(new)


def block_dct(x, size: int = DEFAULT_S):
    """Blockwise DCT of an (..., H, W) array or Tensor into (..., S*S, H/S, W/S)."""
    return _to_channels(dct2_fast(patchify(x, size), make_basis(size)), size)


def block_idct(c, size: int = DEFAULT_S):
    if not isinstance(c, Tensor):
        # BLAS summation order depends on strides; fix the layout so results are bit-stable
        c = np.ascontiguousarray(c, dtype=np.float64)
    return unpatchify(idct2_fast(_from_channels(c, size), make_basis(size)))


def reflect_pad(values: np.ndarray, size: int) -> np.ndarray:
    h, w = values.shape[-2:]
    ph, pw = (-h) % size, (-w) % size
    if not ph and not pw:
        return values
    width = [(0, 0)] * (values.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(values, width, mode="symmetric")


# ---------------------------------------------------------------------------
# map-level transforms

def forward_block_dct(d: DepthMap, size: int = DEFAULT_S, pad: bool = False) -> CoefficientVolume:
    values = d.values
    crop = None
    h, w = d.height, d.width
    if h % size or w % size:
        if not pad:
            raise ShapeError(f"map {h}x{w} is not a multiple of {size}; pass pad=True to reflect-pad")
        if isinstance(values, Tensor):
            raise ShapeError("padding is only supported for constant maps")
        values = reflect_pad(np.asarray(values, dtype=np.float64), size)
        crop = (h, w)
    return CoefficientVolume(block_dct(values, size), np.ones(size * size, dtype=bool), size, crop)


def inverse_block_dct(c: CoefficientVolume) -> DepthMap:
    """Reassemble a depth map; channels outside ``valid_freq`` count as zero."""
    vals = block_idct(c.masked().coeffs, c.size)
    if c.crop is not None:
        h, w = c.crop
        vals = vals[..., :h, :w]
    arr = vals.data if isinstance(vals, Tensor) else vals
    return DepthMap(vals, np.isfinite(arr) & (arr > 0))


# ---------------------------------------------------------------------------
# frequency grouping

def subdiagonal_groups(size: int = DEFAULT_S) -> list[list[tuple[int, int]]]:
    """Group i holds every (u, v) with u + v == i, ordered by u."""
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    return [[(u, i - u) for u in range(size) if 0 <= i - u < size] for i in range(2 * size - 1)]


def subdiagonal_order(size: int) -> list[tuple[int, int]]:
    return [uv for g in subdiagonal_groups(size) for uv in g]


def make_schedule(size: int = DEFAULT_S, merge_spec: Sequence[Sequence[int]] | None = None) -> GroupSchedule:
    """Merge consecutive subdiagonal groups into schedule steps.

    ``merge_spec`` must partition 0..2S-2 into ascending contiguous runs.
    ``None`` gives the standard merge for S=8 and one step per group otherwise.
    """
    groups = subdiagonal_groups(size)
    if merge_spec is None:
        merge_spec = DEFAULT_MERGE_S8 if size == 8 else [[i] for i in range(len(groups))]
    expect = 0
    for run in merge_spec:
        run = list(run)
        if not run or run != list(range(run[0], run[0] + len(run))):
            raise ValueError(f"merge run {run} is not contiguous")
        if run[0] != expect:
            raise ValueError(f"merge run {run} does not start at group {expect}")
        expect = run[-1] + 1
    if expect != len(groups):
        raise ValueError(f"merge spec covers groups 0..{expect - 1}, need 0..{len(groups) - 1}")
    return GroupSchedule(size, [[uv for i in run for uv in groups[i]] for run in merge_spec])


# ---------------------------------------------------------------------------
# serialization

VOLUME_MAGIC = b"FDCV"


def volume_to_bytes(c: CoefficientVolume) -> bytes:
    arr = c.array
    if arr.ndim != 3:
        raise ShapeError("only unbatched volumes can be serialized")
    s = c.size
    h, w = arr.shape[1] * s, arr.shape[2] * s
    head = VOLUME_MAGIC + struct.pack("<3i", s, h, w)
    return head + c.valid_freq.astype(np.uint8).tobytes() + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def volume_from_bytes(buf: bytes) -> CoefficientVolume:
    if buf[:4] != VOLUME_MAGIC:
        raise ValueError(f"bad magic {buf[:4]!r} at offset 0")
    if len(buf) < 16:
        raise ValueError(f"truncated header at offset {len(buf)}")
    s, h, w = struct.unpack("<3i", buf[4:16])
    s2 = s * s
    n = s2 * (h // s) * (w // s)
    need = 16 + s2 + 8 * n
    if len(buf) < need:
        raise ValueError(f"truncated payload at offset {len(buf)}, expected {need} bytes")
    valid = np.frombuffer(buf[16:16 + s2], dtype=np.uint8).astype(bool)
    coeffs = np.frombuffer(buf[16 + s2:need], dtype="<f8").reshape(s2, h // s, w // s).astype(np.float64)
    return CoefficientVolume(coeffs, valid, s)
