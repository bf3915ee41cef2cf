"""Grayscale PFM (float maps) and 16-bit binary PGM (images)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def write_pfm(values: np.ndarray) -> bytes:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PFM maps must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("PFM values must be finite")
    h, w = arr.shape
    head = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return head + np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Split ``count`` newline-terminated header lines; returns (lines, payload offset)."""
    pos = 0
    lines = []
    for _ in range(count):
        end = buf.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"unterminated header line at byte offset {pos}")
        lines.append(buf[pos:end].strip())
        pos = end + 1
    return lines, pos


def read_pfm(buf: bytes) -> np.ndarray:
    lines, pos = _header_tokens(buf, 3)
    if lines[0] == b"PF":
        raise FormatError("color PFM ('PF') is not supported at byte offset 0; expected 'Pf'")
    if lines[0] != b"Pf":
        raise FormatError(f"bad PFM magic {lines[0]!r} at byte offset 0")
    try:
        w, h = (int(t) for t in lines[1].split())
        scale = float(lines[2])
    except ValueError:
        raise FormatError(f"malformed PFM header near byte offset {len(lines[0]) + 1}") from None
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError(f"invalid PFM dimensions or scale near byte offset {len(lines[0]) + 1}")
    need = 4 * w * h
    if len(buf) - pos < need:
        raise FormatError(f"truncated PFM payload at byte offset {len(buf)}: need {pos + need} bytes")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data[::-1].astype(np.float64)


def write_pgm(image: np.ndarray) -> bytes:
    """Values in [0, 1] are quantized to 16 bits (1.0 -> 65535), big-endian per the format."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ValueError(f"PGM images must be 2-D, got shape {arr.shape}")
    q = np.round(np.clip(arr, 0.0, 1.0) * 65535).astype(">u2")
    h, w = q.shape
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + q.tobytes()


def read_pgm(buf: bytes) -> np.ndarray:
    lines, pos = _header_tokens(buf, 3)
    if lines[0] != b"P5":
        raise FormatError(f"bad PGM magic {lines[0]!r} at byte offset 0")
    try:
        w, h = (int(t) for t in lines[1].split())
        maxval = int(lines[2])
    except ValueError:
        raise FormatError(f"malformed PGM header near byte offset {len(lines[0]) + 1}") from None
    if maxval != 65535:
        raise FormatError(f"only 16-bit PGM (maxval 65535) is supported, got {maxval}")
    need = 2 * w * h
    if len(buf) - pos < need:
        raise FormatError(f"truncated PGM payload at byte offset {len(buf)}: need {pos + need} bytes")
    q = np.frombuffer(buf, dtype=">u2", count=w * h, offset=pos).reshape(h, w)
    return q.astype(np.float64) / 65535.0


def save_pfm(path, values) -> None:
    Path(path).write_bytes(write_pfm(values))


def load_pfm(path) -> np.ndarray:
    return read_pfm(Path(path).read_bytes())


def save_pgm(path, image) -> None:
    Path(path).write_bytes(write_pgm(image))


def load_pgm(path) -> np.ndarray:
    return read_pgm(Path(path).read_bytes())
