"""Global-to-local coefficient accumulation over a frequency schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_ad as ad
from .block_spectrum import (CoefficientVolume, DepthMap, GroupSchedule, forward_block_dct,
                             inverse_block_dct)
from .tensor_ad import Tensor


class ScheduleError(ValueError):
    pass


@dataclass
class ProgressiveState:
    """``step`` is the last completed schedule step; -1 before any update."""

    schedule: GroupSchedule
    coeffs: CoefficientVolume
    step: int = -1
    depth_history: list[DepthMap] = field(default_factory=list)

    @property
    def valid_count(self) -> int:
        return int(self.coeffs.valid_freq.sum())

    @property
    def done(self) -> bool:
        return self.step + 1 >= len(self.schedule)

    def next_mask(self) -> np.ndarray:
        """Channels a correction may touch at the next step."""
        if self.done:
            raise ScheduleError(f"schedule exhausted after {len(self.schedule)} steps")
        return self.schedule.cumulative_mask(self.step + 1)


def init_state(schedule: GroupSchedule, height: int, width: int, lead: tuple[int, ...] = ()) -> ProgressiveState:
    s = schedule.size
    if height % s or width % s:
        raise ValueError(f"extent {height}x{width} is not a multiple of {s}")
    zeros = np.zeros(lead + (s * s, height // s, width // s))
    return ProgressiveState(schedule, CoefficientVolume(zeros, np.zeros(s * s, dtype=bool), s))


def apply_update(state: ProgressiveState, delta: CoefficientVolume) -> ProgressiveState:
    """C_k = C_{k-1} + delta, restricted to delta's own valid channels."""
    allowed = state.next_mask()
    extra = delta.valid_freq & ~allowed
    if extra.any():
        bad = [divmod(int(c), state.schedule.size) for c in np.flatnonzero(extra)]
        raise ScheduleError(f"correction at step {state.step + 1} touches unscheduled frequencies {bad}")
    if delta.shape != state.coeffs.shape:
        raise ad.ShapeError(f"correction shape {delta.shape} != state shape {state.coeffs.shape}")
    inc = delta.masked().coeffs
    prev = state.coeffs.coeffs
    if isinstance(inc, Tensor) or isinstance(prev, Tensor):
        new = ad.add(prev, inc)
    else:
        new = prev + inc
    vol = CoefficientVolume(new, allowed.copy(), state.schedule.size)
    nxt = ProgressiveState(state.schedule, vol, state.step + 1, list(state.depth_history))
    nxt.depth_history.append(current_depth(nxt))
    return nxt


def current_depth(state: ProgressiveState) -> DepthMap:
    """Inverse block DCT of the accumulated spectrum, unpredicted channels as zero."""
    return inverse_block_dct(state.coeffs)


def truth_deltas(d: DepthMap, schedule: GroupSchedule) -> list[CoefficientVolume]:
    """Per-step corrections carrying exactly the true coefficients of that step's group."""
    truth = forward_block_dct(d, schedule.size)
    return [CoefficientVolume(np.where(np.broadcast_to(schedule.step_mask(k)[:, None, None], truth.shape),
                                       truth.array, 0.0),
                              schedule.step_mask(k), schedule.size)
            for k in range(len(schedule))]


def reconstruct_from_truth(d: DepthMap, schedule: GroupSchedule) -> list[DepthMap]:
    """Step t keeps the true coefficients of schedule steps 0..t."""
    truth = forward_block_dct(d, schedule.size)
    out = []
    for k in range(len(schedule)):
        vol = CoefficientVolume(truth.array, schedule.cumulative_mask(k), schedule.size, truth.crop)
        out.append(inverse_block_dct(vol))
    return out


def rmse(a: DepthMap | np.ndarray, b: DepthMap | np.ndarray) -> float:
    x = a.array if isinstance(a, DepthMap) else np.asarray(a)
    y = b.array if isinstance(b, DepthMap) else np.asarray(b)
    return float(np.sqrt(np.mean((x - y) ** 2)))
