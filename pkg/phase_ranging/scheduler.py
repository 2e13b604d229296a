"""Ordering of tone gaps for network-based recovery."""

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, Field

from phase_ranging.models import GapMap, ToneGap

__all__ = (
    "ScheduleResult",
    "neighbor_inputs",
    "schedule_gaps",
)

logger = logging.getLogger(__name__)


class ScheduleResult(BaseModel):
    """Recovery order of the gaps of a gap map."""

    order: list[ToneGap] = Field(default_factory=list, description="Gaps in recovery order.")
    inputs_complete: list[bool] = Field(
        default_factory=list,
        description="Per ordered gap: whether all its inputs are available once the gaps before it are recovered.",
    )
    rounds: int = Field(0, description="Number of scheduling rounds.")


def neighbor_inputs(gap: ToneGap, width: int, K: int) -> np.ndarray:  # noqa: N803
    """The `width` tones before and after `gap`, clipped to the grid."""
    before = np.arange(max(gap.first - width, 0), gap.first)
    after = np.arange(gap.last + 1, min(gap.last + 1 + width, K))
    return np.concatenate((before, after))


def schedule_gaps(
    gap_map: GapMap,
    available: np.ndarray,
    w_required: Sequence[int] | None = None,
    *,
    inputs: Sequence[np.ndarray] | None = None,
) -> ScheduleResult:
    """Order gaps so that each is recovered after the gaps that hold its inputs.

    Every round schedules the gaps whose inputs are all available and adds
    their tones to the available set. When a round schedules nothing twice
    in a row the remaining gaps depend on each other; they are appended by
    increasing width and recovered with the missing inputs zero-padded.

    :param gap_map: The gaps.
    :param available: Availability mask over the grid.
    :param w_required: Context width per gap; the gap width when omitted.
    :param inputs: Explicit input tone indices per gap, instead of `w_required`.
    :return: The schedule, a permutation of the gap map.
    """
    available = np.asarray(available, dtype=bool).copy()
    K = available.size  # noqa: N806
    gaps = list(gap_map.gaps)
    if inputs is None:
        widths = w_required if w_required is not None else [gap.width for gap in gaps]
        inputs = [neighbor_inputs(gap, w, K) for gap, w in zip(gaps, widths, strict=True)]
    required = {id(gap): np.asarray(idx, dtype=np.intp) for gap, idx in zip(gaps, inputs, strict=True)}

    def ready(gap: ToneGap) -> bool:
        return bool(available[required[id(gap)]].all())

    result = ScheduleResult()
    current = gaps
    old_not_scheduled: list[ToneGap] = []
    while current:
        result.rounds += 1
        scheduled = [gap for gap in current if ready(gap)]
        not_scheduled = [gap for gap in current if not ready(gap)]

        if not not_scheduled:
            result.order += scheduled
            result.inputs_complete += [True] * len(scheduled)
            current = []
        elif not_scheduled == old_not_scheduled:
            logger.debug("Gaps %s depend on each other; recovering the smallest first", [str(g) for g in not_scheduled])
            for gap in sorted(not_scheduled, key=lambda g: g.width):
                result.order.append(gap)
                result.inputs_complete.append(ready(gap))
                available[gap.first : gap.last + 1] = True
            current = []
        else:
            result.order += scheduled
            result.inputs_complete += [True] * len(scheduled)
            for gap in scheduled:
                available[gap.first : gap.last + 1] = True
            current = not_scheduled
            old_not_scheduled = not_scheduled
    return result
