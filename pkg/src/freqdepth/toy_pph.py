"""Desk-scale progressive prediction head.

A small convolutional image encoder seeds the recurrent state; each step
encodes the previous depth estimate (spatial encoder) and the previously
predicted coefficients (per-frequency encoder plus token attention), runs
a conv-GRU update and emits a masked coefficient correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_ad as ad
from .block_spectrum import CoefficientVolume, DepthMap, GroupSchedule, make_schedule
from .dct_downsample import DownsampleConfig, DownsampleParams, downsample_learned
from .progressive import ProgressiveState, ScheduleError, apply_update, current_depth, init_state
from .tensor_ad import GruParams, ShapeError, Tensor


@dataclass(frozen=True)
class PphConfig:
    size: int = 8
    encoder_widths: tuple[int, int, int] = (16, 32, 32)
    down_out: int = 16
    # lossless 8x8 DCT of the input image; 0 disables the branch
    image_dct_out: int = 0
    spatial_widths: tuple[int, int, int] = (8, 16, 16)
    freq_width: int = 16
    head_width: int = 64
    # inputs are divided by these before encoding; head outputs are multiplied by coeff_scale
    depth_scale: float = 10.0
    coeff_scale: float = 8.0
    # initial DC bias, in meters
    depth_prior: float = 5.5

    @property
    def hidden(self) -> int:
        return self.encoder_widths[2] + self.down_out + self.image_dct_out

    @property
    def gru_input(self) -> int:
        return self.spatial_widths[2] + self.freq_width


def _conv_init(rng, o, i, k, gain=1.0):
    return rng.normal(0.0, gain * np.sqrt(2.0 / (i * k * k)), (o, i, k, k))


def init_params(cfg: PphConfig = PphConfig(), seed: int = 0, zero_head: bool = False) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    p: dict[str, np.ndarray] = {}
    ew, sw, fw = cfg.encoder_widths, cfg.spatial_widths, cfg.freq_width
    for k, (i, o) in enumerate(zip((1,) + ew[:2], ew)):
        p[f"enc{k}.w"], p[f"enc{k}.b"] = _conv_init(rng, o, i, 3), np.zeros(o)
    for k, (i, o) in enumerate(zip((1,) + sw[:2], sw)):
        p[f"es{k}.w"], p[f"es{k}.b"] = _conv_init(rng, o, i, 3), np.zeros(o)
    for k, (i, o) in enumerate(zip((1, fw, fw), (fw, fw, fw))):
        p[f"ef{k}.w"], p[f"ef{k}.b"] = _conv_init(rng, o, i, 3), np.zeros(o)
    p["ef.token"] = rng.normal(0.0, 1.0, (1, fw))
    for tag in "qkv":
        p[f"ef.w{tag}"] = rng.normal(0.0, np.sqrt(1.0 / fw), (fw, fw))
    dcfg = _down_cfg(cfg)
    for k, t in DownsampleParams.init(dcfg, rng).tensors().items():
        p[f"down.{k}"] = t.data
    if cfg.image_dct_out:
        for k, t in DownsampleParams.init(_image_down_cfg(cfg), rng).tensors().items():
            p[f"imgdct.{k}"] = t.data
    for k, t in GruParams.init(cfg.hidden, cfg.gru_input, rng).tensors().items():
        p[f"gru.{k}"] = t.data
    s2 = cfg.size ** 2
    p["head0.w"], p["head0.b"] = _conv_init(rng, cfg.head_width, cfg.hidden, 3), np.zeros(cfg.head_width)
    p["head1.w"] = rng.normal(0.0, 1e-3, (s2, cfg.head_width, 1, 1))
    p["head1.b"] = np.zeros(s2)
    p["head1.b"][0] = cfg.depth_prior * cfg.size / cfg.coeff_scale
    if zero_head:
        p["head1.w"][:] = 0.0
        p["head1.b"][:] = 0.0
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


def param_count(params: dict[str, Tensor]) -> int:
    return sum(t.size for t in params.values())


def _down_cfg(cfg: PphConfig) -> DownsampleConfig:
    return DownsampleConfig(factor=2, reduction=2, channels=cfg.encoder_widths[1], out_channels=cfg.down_out)


def _image_down_cfg(cfg: PphConfig) -> DownsampleConfig:
    return DownsampleConfig(factor=8, reduction=1, channels=1, out_channels=cfg.image_dct_out)


def _down_params(params, prefix):
    return DownsampleParams(*(params[f"{prefix}.{k}"] for k in ("squeeze", "fuse_w", "fuse_b", "dw_w", "dw_b")))


def _conv(x, p, name, stride=1):
    return ad.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, padding=1)


def _check_extent(h, w, cfg):
    if h % 8 or w % 8 or h % cfg.size or w % cfg.size:
        raise ShapeError(f"extent {h}x{w} must be a multiple of 8 and of S={cfg.size}")


def encode_image(image, params, cfg: PphConfig = PphConfig()) -> Tensor:
    """Initial hidden state at 1/8 scale.

    Concatenates the last encoder layer, the DCT-downsampled 1/4-scale
    features and (if enabled) the DCT-downsampled image itself.  The strided
    convolutions lose where an edge sits inside each 8x8 block; the image
    spectrum keeps it.
    """
    x = ad.as_tensor(image)
    _check_extent(x.shape[-2], x.shape[-1], cfg)
    f1 = ad.swish(_conv(x, params, "enc0", 2))
    f2 = ad.swish(_conv(f1, params, "enc1", 2))
    f3 = ad.swish(_conv(f2, params, "enc2", 2))
    parts = [f3, downsample_learned(f2, _down_cfg(cfg), _down_params(params, "down"))]
    if cfg.image_dct_out:
        parts.append(downsample_learned(x, _image_down_cfg(cfg), _down_params(params, "imgdct")))
    return ad.tanh(ad.concat(parts, axis=1))


def spatial_encode(depth, params, cfg: PphConfig = PphConfig()) -> Tensor:
    """(N, H, W) depth -> (N, C_s, H/8, W/8) via three stride-2 convolutions."""
    v = depth.values if isinstance(depth, DepthMap) else depth
    v = ad.as_tensor(v)
    if v.ndim == 2:
        v = ad.reshape(v, (1,) + v.shape)
    n, h, w = v.shape
    _check_extent(h, w, cfg)
    x = ad.reshape(v, (n, 1, h, w)) * (1.0 / cfg.depth_scale)
    for k in range(3):
        x = ad.swish(_conv(x, params, f"es{k}", 2))
    return x


def frequency_encode(c: CoefficientVolume, params, cfg: PphConfig = PphConfig()) -> Tensor:
    """Shared 3-conv swish stack per valid channel, merged by a learned query token."""
    idx = np.flatnonzero(c.valid_freq)
    if idx.size == 0:
        raise ValueError("frequency encoder needs at least one valid channel")
    coeffs = ad.as_tensor(c.coeffs)
    if coeffs.ndim == 3:
        coeffs = ad.reshape(coeffs, (1,) + coeffs.shape)
    n, _, h, w = coeffs.shape
    l = idx.size
    chunks = ad.reshape(coeffs[:, idx], (n * l, 1, h, w)) * (1.0 / cfg.coeff_scale)
    x = chunks
    for k in range(3):
        x = ad.swish(_conv(x, params, f"ef{k}"))
    feats = ad.reshape(x, (n, l, cfg.freq_width, h, w))
    return ad.token_attention(params["ef.token"], feats, params["ef.wq"], params["ef.wk"], params["ef.wv"])


def step(state: ProgressiveState, hidden, params, cfg: PphConfig = PphConfig()):
    """One refinement step: returns (delta, new hidden)."""
    if state.done:
        raise ScheduleError("schedule exhausted")
    hidden = ad.as_tensor(hidden)
    n, _, h, w = hidden.shape
    depth = current_depth(state) if state.step >= 0 else DepthMap(np.zeros((n, h * cfg.size, w * cfg.size)))
    if hidden.shape[2:] != (state.coeffs.shape[-2], state.coeffs.shape[-1]):
        raise ShapeError(f"hidden extent {hidden.shape[2:]} does not match coefficient grid")
    es = spatial_encode(depth, params, cfg)
    if state.step < 0:
        # before the first prediction: a single all-zero DC chunk
        s2 = cfg.size ** 2
        vf = np.zeros(s2, dtype=bool)
        vf[0] = True
        prev = CoefficientVolume(np.zeros((n, s2, h, w)), vf, cfg.size)
    else:
        prev = state.coeffs
    ef = frequency_encode(prev, params, cfg)
    hidden = ad.gru_cell(hidden, ad.concat([es, ef], axis=1),
                         GruParams(*(params[f"gru.{k}"] for k in ("wz", "bz", "wr", "br", "wq", "bq"))))
    x = ad.swish(ad.conv2d(hidden, params["head0.w"], params["head0.b"], padding=1))
    allowed = state.next_mask()
    fresh = allowed & ~state.coeffs.valid_freq
    # bias only seeds channels entering at this step; refinements are bias-free
    bias = ad.mul(params["head1.b"], fresh.astype(np.float64))
    out = ad.conv2d(x, params["head1.w"], bias) * cfg.coeff_scale
    delta = CoefficientVolume(out, allowed, cfg.size).masked()
    return delta, hidden


def forward_full(image, params, schedule: GroupSchedule | None = None, cfg: PphConfig = PphConfig(),
                 return_states: bool = False):
    """One depth map per schedule step for an (N, 1, H, W) image batch."""
    schedule = schedule or make_schedule(cfg.size)
    x = ad.as_tensor(image)
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    n, _, h, w = x.shape
    _check_extent(h, w, cfg)
    hidden = encode_image(x, params, cfg)
    state = init_state(schedule, h, w, lead=(n,))
    states = []
    for _ in range(len(schedule)):
        delta, hidden = step(state, hidden, params, cfg)
        state = apply_update(state, delta)
        states.append(state)
    if return_states:
        return state.depth_history, states
    return state.depth_history
