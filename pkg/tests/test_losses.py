import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqdepth import tensor_ad as ad
from freqdepth.block_spectrum import CoefficientVolume, DepthMap
from freqdepth.gradcheck import check_gradients
from freqdepth.losses import (KITTI_PROFILE, NYU_PROFILE, LossWeights, MetricReport, eval_metrics, freq_reg,
                              freq_weights, silog_loss, smooth_reg, total_loss)
from freqdepth.tensor_ad import DomainError, ShapeError, Tensor


def _gt(seed=0, shape=(16, 16)):
    return DepthMap(np.random.default_rng(seed).uniform(1, 10, size=shape))


def test_defaults():
    w = LossWeights()
    assert (w.alpha_silog, w.beta_decay, w.lambda_var, w.eps_freq) == (10.0, 0.8, 0.85, 1.2)
    assert (NYU_PROFILE.alpha_total, NYU_PROFILE.beta_total) == (2e-3, 0.0)
    assert (KITTI_PROFILE.alpha_total, KITTI_PROFILE.beta_total) == (5e-3, 5e-3)
    with pytest.raises(ValueError):
        LossWeights(beta_total=-1.0)


# ---------------------------------------------------------------------------
# silog

def test_silog_perfect_is_zero():
    gt = _gt()
    assert silog_loss([gt.array, gt.array], gt).item() == 0.0


def test_silog_constant_log_offset():
    gt = _gt(1)
    out = silog_loss([gt.array * math.exp(0.1)], gt).item()
    assert out == pytest.approx(10 * math.sqrt(0.01 - 0.85 * 0.01), abs=1e-9)
    assert out == pytest.approx(0.387298, abs=1e-6)


@pytest.mark.parametrize("c", [-0.7, -0.05, 0.3, 1.5])
def test_silog_offset_scaling(c):
    gt = _gt(2)
    out = silog_loss([gt.array * math.exp(c)], gt).item()
    assert abs(out - 10 * math.sqrt(0.15) * abs(c)) < 1e-9


def test_silog_step_weights():
    gt = _gt(3)
    p = gt.array * math.exp(0.2)
    one = silog_loss([p], gt).item()
    three = silog_loss([p, p, p], gt).item()
    assert three == pytest.approx(one * (0.8 ** 2 + 0.8 + 1.0), rel=1e-12)
    # only the first step wrong: weighted by beta^(N-1)
    first = silog_loss([p, gt.array, gt.array], gt).item()
    assert first == pytest.approx(one * 0.64, rel=1e-12)


def test_silog_scale_invariant_with_lambda_one():
    gt = _gt(4)
    w = LossWeights(lambda_var=1.0)
    p = gt.array * np.random.default_rng(5).uniform(0.8, 1.2, size=gt.shape)
    base = silog_loss([p], gt, w).item()
    for k in (0.3, 2.0, 17.0):
        assert abs(silog_loss([p * k], gt, w).item() - base) < 1e-9


def test_silog_ignores_invalid_pixels():
    g = np.random.default_rng(6).uniform(1, 10, size=(8, 8))
    valid = np.ones((8, 8), dtype=bool)
    valid[:2] = False
    p = g.copy()
    p[:2] = -5.0
    assert silog_loss([p], DepthMap(g, valid)).item() == 0.0


def test_silog_errors():
    g = _gt()
    with pytest.raises(ValueError):
        silog_loss([], g)
    with pytest.raises(ValueError):
        silog_loss([g.array], DepthMap(g.array, np.zeros(g.shape, dtype=bool)))
    bad = g.array.copy()
    bad[0, 0] = 0.0
    with pytest.raises(DomainError):
        silog_loss([bad], g)
    with pytest.raises(ShapeError):
        silog_loss([np.ones((4, 4))], g)


def test_silog_linear_mode():
    gt = _gt(7)
    out = silog_loss([gt.array + 0.5], gt, LossWeights(silog_mode="linear")).item()
    assert out == pytest.approx(10 * math.sqrt(0.15) * 0.5, abs=1e-9)


def test_silog_per_sample_averages():
    g = np.random.default_rng(8).uniform(1, 10, size=(2, 8, 8))
    p = g * np.exp(np.array([0.1, 0.3]))[:, None, None]
    out = silog_loss([p], DepthMap(g), per_sample=True).item()
    assert out == pytest.approx(10 * math.sqrt(0.15) * 0.2, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_silog_gradient(seed):
    rng = np.random.default_rng(seed)
    gt = DepthMap(rng.uniform(1, 10, size=(6, 6)))
    preds = [rng.uniform(1, 10, size=(6, 6)) for _ in range(2)]
    assert check_gradients(lambda a, b: silog_loss([a, b], gt), preds) < 1e-5


# ---------------------------------------------------------------------------
# frequency regularizer

def test_freq_weights():
    w = freq_weights(8, 1.2)
    assert w[0] == 0.0
    assert w[1 * 8 + 1] == pytest.approx(1.2 ** 2 - 1, abs=1e-15)


def test_freq_reg_dc_only_is_zero():
    c = np.zeros((64, 3, 3))
    c[0] = np.random.default_rng(0).normal(size=(3, 3)) * 100
    assert freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item() == 0.0


def test_freq_reg_single_coefficient():
    c = np.zeros((64, 1, 1))
    c[9] = 2.0
    out = freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item()
    assert abs(out - 0.88) < 1e-12
    for u, v in [(0, 3), (5, 2), (7, 7)]:
        c = np.zeros((64, 1, 1))
        c[u * 8 + v] = -1.5
        out = freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item()
        assert abs(out - (1.2 ** (u + v) - 1) * 1.5) < 1e-12


def test_freq_reg_averages_patches():
    c = np.zeros((64, 2, 2))
    c[9, 0, 0] = 2.0
    out = freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item()
    assert out == pytest.approx(0.22, abs=1e-12)


def test_freq_reg_homogeneous():
    c = np.random.default_rng(1).normal(size=(64, 2, 3))
    a = freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item()
    b = freq_reg(CoefficientVolume(2 * c, np.ones(64, dtype=bool))).item()
    assert b == pytest.approx(2 * a, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 63), st.floats(0.0, 10.0), st.integers(0, 2**31))
def test_freq_reg_monotone(ch, bump, seed):
    c = np.random.default_rng(seed).normal(size=(64, 1, 2))
    a = freq_reg(CoefficientVolume(c, np.ones(64, dtype=bool))).item()
    c2 = c.copy()
    c2[ch, 0, 0] = np.sign(c2[ch, 0, 0]) * (abs(c2[ch, 0, 0]) + bump)
    assert freq_reg(CoefficientVolume(c2, np.ones(64, dtype=bool))).item() >= a


def test_freq_reg_gradient():
    c = np.random.default_rng(2).normal(size=(64, 2, 2))
    err = check_gradients(lambda t: freq_reg(CoefficientVolume(t, np.ones(64, dtype=bool))), [c])
    assert err < 1e-4


def test_freq_reg_zero_subgradient():
    t = Tensor(np.zeros((64, 1, 1)), requires_grad=True)
    ad.backward(freq_reg(CoefficientVolume(t, np.ones(64, dtype=bool))))
    assert not t.grad.any()


# ---------------------------------------------------------------------------
# smoothness

def test_smooth_constant_depth_zero():
    img = np.random.default_rng(0).uniform(size=(1, 8, 8))
    assert smooth_reg(np.full((8, 8), 3.0), img).item() == 0.0


def test_smooth_ramp_constant_image():
    d = np.tile(np.arange(8.0), (8, 1))
    tx = smooth_reg(d, np.ones((1, 8, 8))).item()
    assert tx == pytest.approx(1.0, abs=1e-15)


def test_smooth_edge_suppression():
    d = np.ones((4, 8))
    d[:, 4:] = 5.0
    flat = smooth_reg(d, np.zeros((1, 4, 8))).item()
    img = np.zeros((1, 4, 8))
    img[:, :, 4:] = 50.0
    edged = smooth_reg(d, img).item()
    assert flat > 0 and edged < 1e-20


def test_smooth_extent_mismatch():
    with pytest.raises(ShapeError):
        smooth_reg(np.ones((8, 8)), np.ones((1, 8, 6)))


def test_smooth_gradient():
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(2, 6, 6))
    assert check_gradients(lambda d: smooth_reg(d, img), [rng.normal(size=(6, 6))]) < 1e-4


# ---------------------------------------------------------------------------
# total loss

def test_total_loss_kitti_units():
    assert total_loss(1.0, 1.0, 1.0, KITTI_PROFILE).item() == pytest.approx(1.01, abs=1e-15)
    assert total_loss(0.0, 0.0, 0.0, KITTI_PROFILE).item() == 0.0


def test_zero_beta_total_blocks_smoothness_gradient():
    d = Tensor(np.random.default_rng(4).normal(size=(6, 6)), requires_grad=True)
    ls = smooth_reg(d, np.zeros((1, 6, 6)))
    ad.backward(total_loss(1.0, 0.0, ls, NYU_PROFILE))
    assert not d.grad.any()


# ---------------------------------------------------------------------------
# metrics

def test_metrics_perfect():
    gt = _gt(0)
    m = eval_metrics(gt.array, gt)
    assert m.abs_rel == 0 and m.rmse == 0 and m.d1 == m.d2 == m.d3 == 1.0


def test_metrics_scaled_prediction():
    gt = DepthMap(np.full((8, 8), 4.0))
    m = eval_metrics(gt.array * 1.25, gt)
    assert m.abs_rel == 0.25 and m.rmse == 1.0
    assert m.d1 == 0.0 and m.d2 == 1.0 and m.d3 == 1.0


def test_metrics_swap_symmetric_deltas():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(1, 9, size=(2, 16, 16))
    m1, m2 = eval_metrics(a, DepthMap(b)), eval_metrics(b, DepthMap(a))
    assert (m1.d1, m1.d2, m1.d3) == (m2.d1, m2.d2, m2.d3)


def test_metrics_cap_and_clip():
    gt = DepthMap(np.array([[2.0, 20.0]]))
    m = eval_metrics(np.array([[50.0, 20.0]]), gt, cap=10.0)
    # the 20 m pixel is dropped; the 50 m prediction is clipped to 10 m
    assert m.rmse == pytest.approx(8.0)


def test_metrics_irmse_units():
    gt = DepthMap(np.full((2, 2), 2.0))
    m = eval_metrics(np.full((2, 2), 4.0), gt)
    assert m.irmse == pytest.approx(250.0)


def test_metrics_empty_rejected():
    with pytest.raises(ValueError):
        eval_metrics(np.ones((2, 2)), DepthMap(np.full((2, 2), 20.0)), cap=10.0)


def test_metric_report_tsv():
    m = eval_metrics(np.full((2, 2), 4.0), DepthMap(np.full((2, 2), 2.0)))
    head, row = m.tsv().split("\n")
    assert head.split("\t") == list(MetricReport.COLUMNS)
    assert len(row.split("\t")) == 10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_delta_ordering(seed, spread):
    rng = np.random.default_rng(seed)
    g = rng.uniform(0.5, 10, size=(5, 5))
    p = g * np.exp(rng.normal(0, spread, size=g.shape))
    m = eval_metrics(p, DepthMap(g))
    assert 0 <= m.d1 <= m.d2 <= m.d3 <= 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_perfect_pixel_never_hurts_delta(seed):
    rng = np.random.default_rng(seed)
    g = rng.uniform(0.5, 10, size=7)
    p = g * np.exp(rng.normal(0, 0.4, size=7))
    before = eval_metrics(p[None], DepthMap(g[None]))
    after = eval_metrics(np.append(p, 3.0)[None], DepthMap(np.append(g, 3.0)[None]))
    assert after.d1 >= before.d1 and after.d2 >= before.d2 and after.d3 >= before.d3
