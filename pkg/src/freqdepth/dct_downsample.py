"""DCT-based feature downsampling: blockwise DCT, channel squeeze, fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ad as ad
from .block_spectrum import block_dct, subdiagonal_order
from .tensor_ad import ShapeError, Tensor


@dataclass(frozen=True)
class DownsampleConfig:
    factor: int = 2          # R
    reduction: int = 2       # r
    channels: int = 16       # C
    out_channels: int = 16   # C'
    mode: str = "learned"

    def __post_init__(self):
        if (self.factor ** 2) % self.reduction:
            raise ValueError(f"R^2={self.factor ** 2} is not divisible by r={self.reduction}")
        if self.mode not in ("learned", "truncate"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def kept_per_channel(self) -> int:
        return self.factor ** 2 // self.reduction

    @property
    def squeezed(self) -> int:
        return self.channels * self.kept_per_channel


@dataclass
class DownsampleParams:
    squeeze: Tensor   # (C*R^2/r, R^2, 1, 1), groups = C
    fuse_w: Tensor    # (C', C*R^2/r, 1, 1)
    fuse_b: Tensor
    dw_w: Tensor      # (C', 1, 5, 5), depthwise
    dw_b: Tensor

    @classmethod
    def init(cls, cfg: DownsampleConfig, rng: np.random.Generator, name: str = "down"):
        r2 = cfg.factor ** 2
        k, co = cfg.kept_per_channel, cfg.out_channels

        # depthwise fusion starts near identity so each output keeps its own block's spectrum
        dw = rng.normal(0, 0.02, (co, 1, 5, 5))
        dw[:, 0, 2, 2] += 1.0

        def p(arr, tag):
            return Tensor(arr, requires_grad=True, name=f"{name}.{tag}")

        return cls(
            p(rng.normal(0, np.sqrt(1.0 / r2), (cfg.squeezed, r2, 1, 1)), "squeeze"),
            p(rng.normal(0, np.sqrt(1.0 / cfg.squeezed), (co, cfg.squeezed, 1, 1)), "fuse_w"),
            p(np.zeros(co), "fuse_b"),
            p(dw, "dw_w"),
            p(np.zeros(co), "dw_b"),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"squeeze": self.squeeze, "fuse_w": self.fuse_w, "fuse_b": self.fuse_b,
                "dw_w": self.dw_w, "dw_b": self.dw_b}


def _check(shape, cfg):
    if len(shape) != 4:
        raise ShapeError(f"expected NCHW features, got {shape}")
    _, c, h, w = shape
    if c != cfg.channels:
        raise ShapeError(f"expected {cfg.channels} channels, got {c}")
    if h % cfg.factor or w % cfg.factor:
        raise ShapeError(f"extent {h}x{w} is not a multiple of R={cfg.factor}")


def _spectrum(f, cfg):
    """(N, C, H, W) -> (N, C*R^2, H/R, W/R), channel c*R^2 + u*R + v."""
    n, c, h, w = f.shape
    spec = block_dct(f, cfg.factor)
    shape = (n, c * cfg.factor ** 2, h // cfg.factor, w // cfg.factor)
    return ad.reshape(spec, shape) if isinstance(spec, Tensor) else spec.reshape(shape)


def downsample_truncate(f, cfg: DownsampleConfig):
    """Keep the R^2/r lowest frequencies (subdiagonal order) of every R x R block."""
    was_3d = np.ndim(f.data if isinstance(f, Tensor) else f) == 3
    if was_3d:
        f = ad.reshape(f, (1,) + f.shape) if isinstance(f, Tensor) else np.asarray(f)[None]
    _check(f.shape, cfg)
    n, c, h, w = f.shape
    r, k = cfg.factor, cfg.kept_per_channel
    order = [u * r + v for u, v in subdiagonal_order(r)][:k]
    idx = (np.arange(c)[:, None] * r * r + np.array(order)[None, :]).reshape(-1)
    spec = _spectrum(f, cfg)
    out = spec[:, idx]
    if was_3d:
        out = out[0]
    return out


def downsample_learned(f, cfg: DownsampleConfig, params: DownsampleParams) -> Tensor:
    _check(f.shape, cfg)
    r2 = cfg.factor ** 2
    expect = {
        "squeeze": (cfg.squeezed, r2, 1, 1),
        "fuse_w": (cfg.out_channels, cfg.squeezed, 1, 1),
        "fuse_b": (cfg.out_channels,),
        "dw_w": (cfg.out_channels, 1, 5, 5),
        "dw_b": (cfg.out_channels,),
    }
    for name, t in params.tensors().items():
        if t.shape != expect[name]:
            raise ShapeError(f"downsample parameter {name} has shape {t.shape}, expected {expect[name]}")
    spec = _spectrum(f if isinstance(f, Tensor) else Tensor(f), cfg)
    x = ad.conv2d(spec, params.squeeze, groups=cfg.channels)
    x = ad.conv2d(x, params.fuse_w, params.fuse_b)
    return ad.conv2d(x, params.dw_w, params.dw_b, padding=2, groups=cfg.out_channels)
