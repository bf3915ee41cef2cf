"""Convolution, convolutional GRU cell and per-pixel token attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (ShapeError, Tensor, as_tensor, broadcast_to, concat, make_op, mul,
                   sigmoid, sub, add, tanh, matmul, softmax, reshape, transpose, tsum)


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Cross-correlation of an NCHW input with an (O, C/groups, K, K) kernel."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIKK kernel, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    if stride < 1 or padding < 0:
        raise ValueError("stride must be positive and padding non-negative")
    if c % groups or o % groups or cg * groups != c:
        raise ShapeError(f"conv2d: {c} input channels do not match kernel {w.shape} with groups={groups}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: non-positive output extent {ho}x{wo}")
    g, og = groups, o // groups

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (g, N*Ho*Wo, cg*K*K)
    cols = win.reshape(n, g, cg, ho, wo, kh, kw).transpose(1, 0, 3, 4, 2, 5, 6).reshape(g, n * ho * wo, cg * kh * kw)
    wm = w.data.reshape(g, og, cg * kh * kw).transpose(0, 2, 1)
    out = cols @ wm  # (g, NHW, og)
    out = out.reshape(g, n, ho, wo, og).transpose(1, 0, 4, 2, 3).reshape(n, o, ho, wo)
    inputs = [x, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} != ({o},)")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)

    def bw(gout):
        gm = gout.reshape(n, g, og, ho, wo).transpose(1, 0, 3, 4, 2).reshape(g, n * ho * wo, og)
        gw = None
        if w.requires_grad:
            gw = (cols.transpose(0, 2, 1) @ gm).transpose(0, 2, 1).reshape(o, cg, kh, kw)
        gx = None
        if x.requires_grad:
            gcols = (gm @ wm.transpose(0, 2, 1)).reshape(g, n, ho, wo, cg, kh, kw)
            gcols = gcols.transpose(1, 0, 4, 5, 6, 2, 3).reshape(n, c, kh, kw, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(gout.sum(axis=(0, 2, 3)))
        return grads

    return make_op("conv2d", out, inputs, bw)


@dataclass
class GruParams:
    """Weights of a 3x3 convolutional GRU; each kernel sees concat(hidden, input)."""

    wz: Tensor
    bz: Tensor
    wr: Tensor
    br: Tensor
    wq: Tensor
    bq: Tensor

    @classmethod
    def init(cls, hidden: int, inp: int, rng: np.random.Generator, kernel: int = 3, name: str = "gru"):
        fan_in = (hidden + inp) * kernel * kernel
        scale = np.sqrt(1.0 / fan_in)

        def w(tag):
            return Tensor(rng.uniform(-scale, scale, (hidden, hidden + inp, kernel, kernel)),
                          requires_grad=True, name=f"{name}.w{tag}")

        def b(tag):
            return Tensor(np.zeros(hidden), requires_grad=True, name=f"{name}.b{tag}")

        return cls(w("z"), b("z"), w("r"), b("r"), w("q"), b("q"))

    def tensors(self) -> dict[str, Tensor]:
        return {"wz": self.wz, "bz": self.bz, "wr": self.wr, "br": self.br, "wq": self.wq, "bq": self.bq}


def gru_cell(hidden, inp, params: GruParams) -> Tensor:
    """h' = (1 - z) * h + z * q with z, r sigmoid gates and q = tanh(conv([r*h, x]))."""
    hidden, inp = as_tensor(hidden), as_tensor(inp)
    if hidden.shape[0] != inp.shape[0] or hidden.shape[2:] != inp.shape[2:]:
        raise ShapeError(f"gru_cell: hidden {hidden.shape} and input {inp.shape} differ spatially")
    pad = params.wz.shape[-1] // 2
    hx = concat([hidden, inp], axis=1)
    z = sigmoid(conv2d(hx, params.wz, params.bz, padding=pad))
    r = sigmoid(conv2d(hx, params.wr, params.br, padding=pad))
    q = tanh(conv2d(concat([mul(r, hidden), inp], axis=1), params.wq, params.bq, padding=pad))
    return add(hidden, mul(z, sub(q, hidden)))


def token_attention(token, feats, wq, wk, wv) -> Tensor:
    """Per-pixel cross-attention where one learned token queries L feature chunks.

    token: (1, C); feats: (N, L, C, H, W); projections: (C, D).
    Returns (N, D, H, W), independent of L.
    """
    token, feats = as_tensor(token), as_tensor(feats)
    n, l, c, h, w = feats.shape
    d = wq.shape[1]
    q = matmul(token, wq)  # (1, D)
    f = reshape(transpose(feats, (0, 3, 4, 1, 2)), (n * h * w, l, c))
    k = matmul(f, wk)  # (NHW, L, D)
    v = matmul(f, wv)
    qb = broadcast_to(reshape(q, (1, d, 1)), (n * h * w, d, 1))
    scores = matmul(k, qb) * (1.0 / np.sqrt(d))  # (NHW, L, 1)
    attn = softmax(scores, axis=1)
    out = tsum(mul(v, broadcast_to(attn, v.shape)), axis=1)  # (NHW, D)
    return transpose(reshape(out, (n, h, w, d)), (0, 3, 1, 2))
