import numpy as np
import pytest

from freqdepth.block_spectrum import CoefficientVolume, DepthMap, forward_block_dct, make_schedule
from freqdepth.progressive import (ScheduleError, apply_update, current_depth, init_state,
                                   reconstruct_from_truth, rmse, truth_deltas)
from freqdepth.synth import make_dataset

SCHED = make_schedule(8)


def _delta(mask, value=0.0, shape=(64, 4, 4)):
    return CoefficientVolume(np.full(shape, value), mask)


def test_fresh_state():
    st = init_state(SCHED, 32, 32)
    assert st.valid_count == 0 and st.step == -1
    assert not current_depth(st).array.any()


def test_first_update_is_dc_only():
    st = apply_update(init_state(SCHED, 32, 32), _delta(SCHED.cumulative_mask(0), 1.0))
    assert st.valid_count == 1
    assert len(st.depth_history) == 1
    assert not st.coeffs.array[1:].any()


def test_valid_freq_tracks_cumulative_set():
    st = init_state(SCHED, 32, 32)
    for k in range(len(SCHED)):
        st = apply_update(st, _delta(SCHED.step_mask(k), 0.5))
        np.testing.assert_array_equal(st.coeffs.valid_freq, SCHED.cumulative_mask(k))
        assert len(st.depth_history) == k + 1
        assert not st.coeffs.array[~SCHED.cumulative_mask(k)].any()
    assert st.done


def test_zero_delta_leaves_depth_unchanged():
    st = apply_update(init_state(SCHED, 32, 32), _delta(SCHED.cumulative_mask(0), 3.0))
    nxt = apply_update(st, _delta(SCHED.cumulative_mask(1), 0.0))
    np.testing.assert_array_equal(nxt.depth_history[-1].array, st.depth_history[-1].array)


def test_plus_minus_cancels_exactly():
    v = np.random.default_rng(0).normal(size=(64, 4, 4))
    st = apply_update(init_state(SCHED, 32, 32), CoefficientVolume(v, SCHED.cumulative_mask(0)))
    st = apply_update(st, CoefficientVolume(-v, SCHED.cumulative_mask(1)))
    assert (st.coeffs.array[0] == 0.0).all()


def test_entries_outside_delta_mask_ignored():
    mask = SCHED.cumulative_mask(0)
    st = apply_update(init_state(SCHED, 16, 16), CoefficientVolume(np.ones((64, 2, 2)), mask))
    assert st.coeffs.array[0].sum() == 4.0 and st.coeffs.array[1:].sum() == 0.0


def test_schedule_violation_rejected():
    st = init_state(SCHED, 16, 16)
    with pytest.raises(ScheduleError):
        apply_update(st, _delta(SCHED.cumulative_mask(1), shape=(64, 2, 2)))


def test_exhausted_schedule_rejected():
    st = init_state(SCHED, 16, 16)
    for k in range(len(SCHED)):
        st = apply_update(st, _delta(SCHED.step_mask(k), shape=(64, 2, 2)))
    with pytest.raises(ScheduleError):
        apply_update(st, _delta(SCHED.step_mask(0), shape=(64, 2, 2)))


def test_truth_deltas_reproduce_oracle_bit_exactly():
    d = DepthMap(np.random.default_rng(1).uniform(1, 10, size=(32, 48)))
    st = init_state(SCHED, 32, 48)
    for delta in truth_deltas(d, SCHED):
        st = apply_update(st, delta)
    ref = reconstruct_from_truth(d, SCHED)
    for a, b in zip(st.depth_history, ref):
        np.testing.assert_array_equal(a.array, b.array)


def test_true_dc_step_gives_patch_means():
    d = DepthMap(np.random.default_rng(2).uniform(1, 10, size=(16, 16)))
    st = apply_update(init_state(SCHED, 16, 16), truth_deltas(d, SCHED)[0])
    means = d.array.reshape(2, 8, 2, 8).mean(axis=(1, 3))
    np.testing.assert_allclose(current_depth(st).array, np.kron(means, np.ones((8, 8))), atol=1e-12)


def test_constant_map_exact_at_step_zero():
    out = reconstruct_from_truth(DepthMap(np.full((16, 24), 4.5)), SCHED)
    assert np.abs(out[0].array - 4.5).max() < 1e-12


@pytest.mark.parametrize("schedule", [SCHED, make_schedule(8, [[i] for i in range(15)]), make_schedule(4)])
def test_playback_monotone_and_complete(schedule):
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = DepthMap(rng.uniform(1, 10, size=(32, 32)))
        errs = [rmse(x, d) for x in reconstruct_from_truth(d, schedule)]
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-10
        assert errs[len(errs) // 2] > errs[-1]


def test_rmse_matches_discarded_energy():
    d = DepthMap(make_dataset(5, 1, 64)[1][0])
    vol = forward_block_dct(d)
    for k, out in enumerate(reconstruct_from_truth(d, SCHED)[:-1]):
        dropped = (vol.array[~SCHED.cumulative_mask(k)] ** 2).sum()
        expect = np.sqrt(dropped / d.array.size)
        assert abs(rmse(out, d) - expect) / expect < 1e-9
