import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqdepth.block_spectrum import (CoefficientVolume, DepthMap, GroupSchedule, forward_block_dct,
                                      inverse_block_dct, make_schedule, patchify, subdiagonal_groups,
                                      unpatchify, volume_from_bytes, volume_to_bytes)
from freqdepth.dct_core import dct2_naive, make_basis
from freqdepth.tensor_ad import ShapeError


def _rand_map(seed, h=64, w=64):
    return DepthMap(np.random.default_rng(seed).uniform(1.0, 10.0, size=(h, w)))


def test_constant_map_dc_only():
    vol = forward_block_dct(DepthMap(np.full((32, 24), 2.0)))
    assert vol.shape == (64, 4, 3)
    np.testing.assert_allclose(vol.array[0], 16.0, atol=1e-12)
    assert np.abs(vol.array[1:]).max() < 1e-12
    assert vol.valid_freq.all()


def test_single_patch_matches_dct2():
    x = np.random.default_rng(0).normal(size=(8, 8))
    vol = forward_block_dct(DepthMap(x))
    assert vol.shape == (64, 1, 1)
    np.testing.assert_allclose(vol.array[:, 0, 0], dct2_naive(x, make_basis(8)).reshape(-1), atol=1e-12)


def test_channel_order_is_row_major():
    x = np.random.default_rng(1).normal(size=(16, 16))
    vol = forward_block_dct(DepthMap(x))
    ref = dct2_naive(x[8:16, 0:8], make_basis(8))
    for u, v in [(0, 0), (1, 0), (0, 1), (3, 5), (7, 7)]:
        assert vol.array[u * 8 + v, 1, 0] == pytest.approx(ref[u, v], abs=1e-12)


def test_per_patch_parseval():
    d = _rand_map(2)
    vol = forward_block_dct(d)
    p = patchify(d.array)
    for i in range(8):
        for j in range(8):
            e_x = (p[i, j] ** 2).sum()
            e_f = (vol.array[:, i, j] ** 2).sum()
            assert abs(e_f - e_x) / e_x < 1e-9


def test_round_trip():
    d = _rand_map(3)
    out = inverse_block_dct(forward_block_dct(d))
    assert np.abs(out.array - d.array).max() < 1e-10


def test_dc_only_gives_patch_means():
    d = _rand_map(4, 32, 40)
    vol = forward_block_dct(d)
    keep = np.zeros(64, dtype=bool)
    keep[0] = True
    out = inverse_block_dct(CoefficientVolume(vol.array, keep)).array
    means = patchify(d.array).mean(axis=(-2, -1))
    np.testing.assert_allclose(out, np.kron(means, np.ones((8, 8))), atol=1e-12)


def test_half_zeroed_energy_bookkeeping():
    d = _rand_map(5)
    vol = forward_block_dct(d)
    keep = np.zeros(64, dtype=bool)
    keep[::2] = True
    out = inverse_block_dct(CoefficientVolume(vol.array, keep)).array
    err = ((out - d.array) ** 2).sum()
    dropped = (vol.array[~keep] ** 2).sum()
    assert abs(err - dropped) / dropped < 1e-9


def test_non_multiple_rejected_without_padding():
    with pytest.raises(ShapeError):
        forward_block_dct(DepthMap(np.ones((30, 32))))


def test_padding_round_trip_crops():
    d = DepthMap(np.random.default_rng(6).uniform(1, 5, size=(30, 21)))
    vol = forward_block_dct(d, pad=True)
    assert vol.shape == (64, 4, 3) and vol.crop == (30, 21)
    out = inverse_block_dct(vol)
    assert out.shape == (30, 21)
    assert np.abs(out.array - d.array).max() < 1e-10


def test_batched_leading_axes():
    x = np.random.default_rng(7).normal(size=(3, 2, 16, 24))
    vol = forward_block_dct(DepthMap(np.abs(x) + 1))
    assert vol.shape == (3, 2, 64, 2, 3)
    single = forward_block_dct(DepthMap(np.abs(x[1, 0]) + 1))
    np.testing.assert_array_equal(vol.array[1, 0], single.array)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=0, max_size=2), st.integers(1, 4), st.integers(1, 4),
       st.sampled_from([1, 2, 4, 8]))
def test_patchify_inverse(lead, hb, wb, s):
    x = np.random.default_rng(0).normal(size=tuple(lead) + (hb * s, wb * s))
    p = patchify(x, s)
    assert p.shape == tuple(lead) + (hb, wb, s, s)
    np.testing.assert_array_equal(unpatchify(p), x)


# ---------------------------------------------------------------------------
# groups and schedules

def test_groups_s8():
    g = subdiagonal_groups(8)
    assert len(g) == 15
    assert [len(x) for x in g] == [1, 2, 3, 4, 5, 6, 7, 8, 7, 6, 5, 4, 3, 2, 1]
    assert sorted(g[7]) == [(u, 7 - u) for u in range(8)]
    for i, grp in enumerate(g):
        assert all(u + v == i for u, v in grp)


def test_groups_s1():
    assert subdiagonal_groups(1) == [[(0, 0)]]


def test_default_schedule():
    s = make_schedule(8)
    assert len(s) == 8
    assert s.cumulative_counts() == [1, 3, 6, 10, 15, 21, 36, 64]


def test_default_schedule_ordering():
    s = make_schedule(8)
    for k in range(len(s) - 2):
        hi = max(u + v for u, v in s.steps[k])
        lo = min(u + v for u, v in s.steps[k + 2])
        assert hi < lo


def test_unmerged_schedule():
    s = make_schedule(8, [[i] for i in range(15)])
    assert len(s) == 15
    assert s.cumulative_counts()[-1] == 64


def test_single_run_schedule():
    s = make_schedule(8, [list(range(15))])
    assert len(s) == 1 and s.step_mask(0).all()


@pytest.mark.parametrize("spec", [
    [[0], [2, 1]] + [[i] for i in range(3, 15)],
    [[0, 2]] + [[1]] + [[i] for i in range(3, 15)],
    [[0], [1], [1, 2]] + [[i] for i in range(3, 15)],
    [[i] for i in range(14)],
    [[1]] + [[i] for i in range(2, 15)],
])
def test_bad_merge_spec_rejected(spec):
    with pytest.raises(ValueError):
        make_schedule(8, spec)


def test_schedule_requires_partition():
    with pytest.raises(ValueError):
        GroupSchedule(2, [[(0, 0)], [(0, 1), (1, 0)]])
    with pytest.raises(ValueError):
        GroupSchedule(2, [[(0, 0), (0, 1)], [(0, 1), (1, 0), (1, 1)]])


@pytest.mark.parametrize("size", [1, 2, 4, 8, 16])
def test_every_schedule_partitions(size):
    s = make_schedule(size)
    masks = np.stack([s.step_mask(k) for k in range(len(s))])
    assert (masks.sum(axis=0) == 1).all()


# ---------------------------------------------------------------------------
# serialization

def test_volume_round_trip_bytes():
    vol = forward_block_dct(_rand_map(8, 16, 24))
    vol.valid_freq[5:] = False
    buf = volume_to_bytes(vol)
    assert buf[:4] == b"FDCV"
    assert len(buf) == 16 + 64 + 8 * 64 * 2 * 3
    back = volume_from_bytes(buf)
    np.testing.assert_array_equal(back.array, vol.array)
    np.testing.assert_array_equal(back.valid_freq, vol.valid_freq)


def test_volume_bad_magic_and_truncation():
    buf = volume_to_bytes(forward_block_dct(_rand_map(9, 8, 8)))
    with pytest.raises(ValueError, match="magic"):
        volume_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(ValueError, match="offset"):
        volume_from_bytes(buf[:-3])
