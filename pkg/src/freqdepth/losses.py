"""Training losses and depth evaluation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import tensor_ad as ad
from .block_spectrum import CoefficientVolume, DepthMap
from .tensor_ad import DomainError, ShapeError, Tensor


@dataclass(frozen=True)
class LossWeights:
    alpha_silog: float = 10.0
    beta_decay: float = 0.8
    lambda_var: float = 0.85
    eps_freq: float = 1.2
    alpha_total: float = 2e-3
    beta_total: float = 0.0
    # "log" compares log-depths; "linear" compares raw depths
    silog_mode: str = "log"

    def __post_init__(self):
        for k in ("alpha_silog", "beta_decay", "lambda_var", "eps_freq", "alpha_total", "beta_total"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")
        if self.silog_mode not in ("log", "linear"):
            raise ValueError(f"unknown silog mode {self.silog_mode!r}")


NYU_PROFILE = LossWeights(alpha_total=2e-3, beta_total=0.0)
KITTI_PROFILE = LossWeights(alpha_total=5e-3, beta_total=5e-3)


def _values(d):
    return d.values if isinstance(d, DepthMap) else d


def silog_loss(preds: Sequence, gt: DepthMap, w: LossWeights = LossWeights(),
               per_sample: bool = False) -> Tensor:
    """alpha * sum_i beta^(N-i) * sqrt(mean(d^2) - lambda * mean(d)^2) over valid pixels.

    By default every leading axis is pooled into one pixel set.  With
    ``per_sample`` the first axis indexes independent samples whose terms
    are averaged.
    """
    if not preds:
        raise ValueError("silog needs at least one prediction")
    mask = gt.valid
    if not mask.any():
        raise ValueError("ground truth has no valid pixels")
    g = gt.array
    if np.any(g[mask] <= 0) and w.silog_mode == "log":
        raise DomainError("non-positive ground-truth depth on a valid pixel")
    axes = tuple(range(1 if per_sample else 0, g.ndim))
    count = mask.sum(axis=axes)
    if np.any(count == 0):
        raise ValueError("a sample has no valid pixels")
    inv_m = 1.0 / count
    n = len(preds)
    total = None
    for i, p in enumerate(preds, start=1):
        pv = ad.as_tensor(_values(p))
        if pv.shape != gt.shape:
            raise ShapeError(f"prediction shape {pv.shape} != ground truth shape {gt.shape}")
        if w.silog_mode == "log":
            if np.any(pv.data[mask] <= 0):
                raise DomainError(f"non-positive predicted depth on a valid pixel at step {i}")
            d = ad.sub(ad.log(ad.where(mask, pv, 1.0)), np.log(np.where(mask, g, 1.0)))
        else:
            d = ad.mul(ad.sub(pv, g), mask.astype(np.float64))
        mu = ad.mul(ad.tsum(d, axis=axes, keepdims=True), np.reshape(inv_m, np.shape(inv_m) + (1,) * len(axes)))
        centered = ad.mul(ad.sub(d, ad.broadcast_to(mu, d.shape)), mask.astype(np.float64))
        sq = ad.mul(ad.tsum(ad.square(d), axis=axes), inv_m)
        var = ad.mul(ad.tsum(ad.square(centered), axis=axes), inv_m)
        # (1 - lambda) mean(d^2) + lambda var(d) == mean(d^2) - lambda mean(d)^2, but never negative
        inner = ad.add(sq * (1.0 - w.lambda_var), var * w.lambda_var)
        term = ad.mean(ad.sqrt(inner)) * (w.beta_decay ** (n - i))
        total = term if total is None else ad.add(total, term)
    return total * w.alpha_silog


def freq_weights(size: int, eps: float) -> np.ndarray:
    u = np.arange(size)
    return (eps ** (u[:, None] + u[None, :]) - 1.0).reshape(-1)


def freq_reg(spectrum: CoefficientVolume, w: LossWeights = LossWeights()) -> Tensor:
    """Sum over frequencies of (eps^(u+v) - 1) |f_uv|, averaged over patches."""
    c = spectrum.coeffs
    wt = np.broadcast_to(freq_weights(spectrum.size, w.eps_freq)[:, None, None], c.shape)
    patches = int(np.prod(c.shape)) // (spectrum.size ** 2)
    return ad.tsum(ad.mul(ad.tabs(c), wt)) * (1.0 / patches)


def _image_grads(image: np.ndarray):
    img = np.asarray(image, dtype=np.float64)
    gx = np.abs(np.diff(img, axis=-1))
    gy = np.abs(np.diff(img, axis=-2))
    # (C, H, W) or (N, C, H, W): average over channels
    if img.ndim >= 3:
        gx, gy = gx.mean(axis=-3), gy.mean(axis=-3)
    return gx, gy


def smooth_reg(d, image, w: LossWeights = LossWeights()) -> Tensor:
    """Edge-aware smoothness: mean |dD/dx| e^{-|dI/dx|} + mean |dD/dy| e^{-|dI/dy|}."""
    dv = ad.as_tensor(_values(d))
    gx, gy = _image_grads(image)
    if gx.shape[-2:] != (dv.shape[-2], dv.shape[-1] - 1):
        raise ShapeError(f"image extent does not match depth extent {dv.shape[-2:]}")
    gx = np.broadcast_to(gx, dv.shape[:-1] + (dv.shape[-1] - 1,))
    gy = np.broadcast_to(gy, dv.shape[:-2] + (dv.shape[-2] - 1, dv.shape[-1]))
    h, wd = dv.shape[-2:]
    ddx = ad.sub(dv[..., :, 1:], dv[..., :, :wd - 1])
    ddy = ad.sub(dv[..., 1:, :], dv[..., :h - 1, :])
    tx = ad.mean(ad.mul(ad.tabs(ddx), np.exp(-gx)))
    ty = ad.mean(ad.mul(ad.tabs(ddy), np.exp(-gy)))
    return ad.add(tx, ty)


def total_loss(l_depth, l_freq, l_smooth, w: LossWeights = LossWeights()) -> Tensor:
    return ad.add(ad.add(ad.as_tensor(l_depth), ad.mul(l_freq, w.alpha_total)),
                  ad.mul(l_smooth, w.beta_total))


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    log10: float
    rmse_log: float
    irmse: float
    silog: float
    d1: float
    d2: float
    d3: float

    COLUMNS = ("abs_rel", "sq_rel", "rmse", "log10", "rmse_log", "irmse", "silog", "d1", "d2", "d3")
    # column order of the usual indoor benchmark table
    TABLE_ORDER = ("abs_rel", "sq_rel", "rmse", "log10", "d1", "d2", "d3")

    def as_dict(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items()}

    def tsv(self) -> str:
        return "\t".join(self.COLUMNS) + "\n" + "\t".join(f"{getattr(self, k):.6f}" for k in self.COLUMNS)


def eval_metrics(pred: DepthMap | np.ndarray, gt: DepthMap, cap: float = 10.0,
                 min_depth: float = 1e-3) -> MetricReport:
    """Standard monocular depth metrics over valid ground truth within (min_depth, cap].

    Predictions are clipped into [min_depth, cap].  iRMSE is in 1/km, SILog
    is scaled by 100.
    """
    p = pred.array if isinstance(pred, DepthMap) else np.asarray(pred, dtype=np.float64)
    g = gt.array
    if p.shape != g.shape:
        raise ShapeError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    mask = gt.valid & (g > min_depth) & (g <= cap)
    if not mask.any():
        raise ValueError("no valid ground-truth pixels after capping")
    p = np.clip(p[mask], min_depth, cap)
    g = g[mask]
    ratio = np.maximum(p / g, g / p)
    err = p - g
    dlog = np.log(p) - np.log(g)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err ** 2 / g)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        rmse_log=float(np.sqrt(np.mean(dlog ** 2))),
        irmse=float(np.sqrt(np.mean((1000.0 / p - 1000.0 / g) ** 2))),
        silog=float(100.0 * np.sqrt(max(np.mean(dlog ** 2) - np.mean(dlog) ** 2, 0.0))),
        d1=float(np.mean(ratio < 1.25)),
        d2=float(np.mean(ratio < 1.25 ** 2)),
        d3=float(np.mean(ratio < 1.25 ** 3)),
    )
