import math
from typing import Optional

from ped_prune.errors import BadK, CannotPruneBelowOne, ScheduleExhausted
from ped_prune.types import StageSchedule


def next_k(active_count: int, schedule: Optional[StageSchedule] = None, stage: int = 0) -> int:
    """
    Number of units to keep at `stage` when `active_count` are active.

    decrement: active_count - 1
    fraction:  min(active_count - 1, max(1, ceil(keep_ratio * active_count)))
    An explicit k_sequence overrides the rule; its entry must satisfy
    1 <= k < active_count.

    Raises:
        CannotPruneBelowOne, ScheduleExhausted, BadK
    """
    if active_count < 2:
        raise CannotPruneBelowOne(active_count)
    schedule = schedule or StageSchedule()

    if schedule.k_sequence is not None:
        if stage >= len(schedule.k_sequence):
            raise ScheduleExhausted(f"k_sequence has no entry for stage {stage}")
        k = schedule.k_sequence[stage]
        if not 1 <= k < active_count:
            raise BadK(k, active_count - 1)
        return k

    if schedule.rule == "fraction":
        return min(active_count - 1, max(1, math.ceil(schedule.keep_ratio * active_count)))
    return active_count - 1
