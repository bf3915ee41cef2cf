"""Central-difference gradient checking against the reverse-mode engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor_ad import Tensor, backward


def numeric_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-5,
                 indices=None) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. entries of ``arr`` (perturbed in place).

    ``indices`` restricts the check to a subset of flat positions; unchecked
    entries are left as NaN.
    """
    flat = arr.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * step)
    return out.reshape(arr.shape)


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """max |a - n| over the checked entries, scaled by the largest gradient magnitude."""
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max(), floor)
    return float(np.abs(a - n).max() / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], step: float = 1e-5,
                    max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``fn(*tensors)`` with central differences.

    Returns the worst relative error across all inputs.  With ``max_entries``
    a random subset of each input's entries is probed.
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    backward(loss)
    worst = 0.0
    for k, (a, t) in enumerate(zip(arrays, tensors)):
        work = [x.copy() for x in arrays]

        def f():
            return fn(*[Tensor(x) for x in work]).item()

        indices = None
        if max_entries is not None and a.size > max_entries:
            rng = rng or np.random.default_rng(0)
            indices = rng.choice(a.size, max_entries, replace=False)
        num = numeric_grad(f, work[k], step, indices)
        worst = max(worst, max_rel_error(t.grad, num))
    return worst
