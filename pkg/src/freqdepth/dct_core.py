"""Orthonormal 2D DCT-II on square blocks: naive direct-sum oracle and separable fast path."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor_ad import ShapeError, Tensor, make_op


@dataclass(frozen=True, eq=False)
class DctBasis:
    """Row u of ``matrix`` holds alpha(u) * cos(pi * (i + 1/2) * u / S)."""

    size: int
    matrix: np.ndarray

    def alpha(self, u: int) -> float:
        return math.sqrt((1.0 if u == 0 else 2.0) / self.size)


@lru_cache(maxsize=None)
def make_basis(size: int) -> DctBasis:
    if size < 1:
        raise ValueError(f"basis size must be positive, got {size}")
    u = np.arange(size, dtype=np.float64)[:, None]
    i = np.arange(size, dtype=np.float64)[None, :]
    alpha = np.full((size, 1), math.sqrt(2.0 / size))
    alpha[0, 0] = math.sqrt(1.0 / size)
    m = alpha * np.cos(math.pi * (i + 0.5) * u / size)
    m.flags.writeable = False
    return DctBasis(size, m)


def _check_square(x: np.ndarray, basis: DctBasis, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = basis.size
    if x.shape != (s, s):
        raise ShapeError(f"{what}: expected ({s}, {s}) grid, got {x.shape}")
    return x


def dct2_naive(x, basis: DctBasis) -> np.ndarray:
    """f[u, v] = sum_i sum_j x[i, j] * B[u, i] * B[v, j], evaluated term by term."""
    x = _check_square(x, basis, "dct2_naive")
    s = basis.size
    b = basis.matrix.tolist()
    xs = x.tolist()
    f = [[0.0] * s for _ in range(s)]
    for u in range(s):
        bu = b[u]
        for v in range(s):
            bv = b[v]
            acc = 0.0
            for i in range(s):
                xi = xs[i]
                w = bu[i]
                for j in range(s):
                    acc += xi[j] * w * bv[j]
            f[u][v] = acc
    return np.array(f)


def idct2_naive(f, basis: DctBasis) -> np.ndarray:
    """x[i, j] = sum_u sum_v f[u, v] * B[u, i] * B[v, j], evaluated term by term."""
    f = _check_square(f, basis, "idct2_naive")
    s = basis.size
    b = basis.matrix.tolist()
    fs = f.tolist()
    x = [[0.0] * s for _ in range(s)]
    for i in range(s):
        for j in range(s):
            acc = 0.0
            for u in range(s):
                fu = fs[u]
                w = b[u][i]
                for v in range(s):
                    acc += fu[v] * w * b[v][j]
            x[i][j] = acc
    return np.array(x)


def _blocks_forward(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    return m @ x @ m.T


def _blocks_inverse(f: np.ndarray, m: np.ndarray) -> np.ndarray:
    return m.T @ f @ m


def dct2_fast(x, basis: DctBasis | None = None):
    """Separable DCT over the trailing two axes (any leading batch shape).

    Accepts an ndarray or a Tensor; Tensors stay on the tape with the
    inverse transform as their backward pass.
    """
    return _separable(x, basis, inverse=False)


def idct2_fast(f, basis: DctBasis | None = None):
    return _separable(f, basis, inverse=True)


def _separable(x, basis, inverse):
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim < 2 or data.shape[-1] != data.shape[-2]:
        raise ShapeError(f"expected square trailing blocks, got {data.shape}")
    basis = basis or make_basis(data.shape[-1])
    if data.shape[-1] != basis.size:
        raise ShapeError(f"block extent {data.shape[-1]} does not match basis size {basis.size}")
    m = basis.matrix
    fwd, inv = (_blocks_inverse, _blocks_forward) if inverse else (_blocks_forward, _blocks_inverse)
    out = fwd(data, m)
    if not isinstance(x, Tensor):
        return out
    # orthonormal: the adjoint of the transform is its inverse
    return make_op("idct2" if inverse else "dct2", out, (x,), lambda g: (inv(g, m),))
