"""
The PED stage loop and its offline single-step counterpart.

Each stage: dependence profile of the active units -> keep K of them ->
apply the policy -> retrain from the current weights -> report. Units are
only ever removed, so active sets shrink monotonically.
"""

import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar, Union

from ped_prune.errors import AdapterFailure, CannotPruneBelowOne, ScheduleExhausted
from ped_prune.functions.adapter.base import BaseModelAdapter
from ped_prune.functions.io.reports import read_profile, write_json
from ped_prune.functions.ped.schedule import next_k
from ped_prune.functions.ped.selection import select_units, select_with_details
from ped_prune.types import HeadMode, PruningPolicy, StageReport, StageSchedule, Strategy, Variant

logger = logging.getLogger("ped-prune.ped")

T = TypeVar("T")


def _reduction(base: int, now: int) -> float:
    return 100.0 * (1.0 - now / base) if base else 0.0


def _adapter_call(stage: int, fn: Callable[..., T], *args) -> T:
    try:
        return fn(*args)
    except Exception as e:
        raise AdapterFailure(stage, e) from e


def run_ped(
    adapter: BaseModelAdapter,
    schedule: StageSchedule,
    strategy: Strategy = "cluster-head",
    seed: int = 0,
    head_mode: HeadMode = "max",
    variant: Variant = "v",
    subsample_cap: Optional[int] = None,
) -> List[StageReport]:
    """
    Run `schedule.n_stages` PED stages on `adapter`.

    Args:
        adapter: the model; its current policy is the starting active set
        schedule: stage count and the K rule
        strategy: unit selection strategy
        seed: run seed; stage t draws from the stream [seed, t]
        head_mode: cluster representative for the cluster-head strategy
        variant, subsample_cap: passed on to the dependence profile

    Returns:
        One StageReport per stage, in order (empty for n_stages = 0)

    Raises:
        AdapterFailure: anything the adapter raised, tagged with the stage
        ScheduleExhausted: the schedule asks for more stages than units allow
        BadK: an explicit k_sequence entry is out of range
    """
    reports: List[StageReport] = []
    base_params = _adapter_call(0, adapter.count_params)
    base_flops = _adapter_call(0, adapter.count_flops)

    for stage in range(schedule.n_stages):
        started = time.perf_counter()
        active = adapter.policy.active_set
        try:
            k = next_k(len(active), schedule, stage)
        except CannotPruneBelowOne:
            raise ScheduleExhausted(
                f"stage {stage} of {schedule.n_stages}: only {len(active)} unit(s) remain"
            ) from None

        profile = _adapter_call(stage, adapter.profile, variant, subsample_cap, [seed, stage], stage)
        policy, summary = select_with_details(profile, k, strategy, [seed, stage], head_mode)
        _adapter_call(stage, adapter.apply_policy, policy)
        metrics = _adapter_call(stage, adapter.retrain, stage)
        params = _adapter_call(stage, adapter.count_params)
        flops = _adapter_call(stage, adapter.count_flops)

        report = StageReport(
            stage=stage,
            k=k,
            active_count=len(policy.active_set),
            strategy=strategy,
            profile=profile,
            clustering=summary,
            policy=policy,
            train_accuracy=metrics.train_accuracy,
            test_accuracy=metrics.test_accuracy,
            param_count=params,
            flop_count=flops,
            param_reduction_pct=_reduction(base_params, params),
            flop_reduction_pct=_reduction(base_flops, flops),
            wall_time=time.perf_counter() - started,
        )
        reports.append(report)
        logger.info(
            f"Stage {stage}: kept {report.active_count}/{len(active)} units ({strategy}), "
            f"test accuracy {report.test_accuracy:.4f}, params -{report.param_reduction_pct:.1f}%"
        )

    return reports


def offline_step(
    profile_path: Union[str, Path],
    k: int,
    strategy: Strategy = "cluster-head",
    seed=0,
    out: Optional[Union[str, Path]] = None,
    head_mode: HeadMode = "max",
    meta: Optional[Dict[str, Any]] = None,
) -> PruningPolicy:
    """
    One PED iteration for an external model: profile file in, policy file out.

    The user retrains out of band and brings fresh dumps to the next stage.
    `meta` entries (for example the effective config) are written alongside
    the policy fields. Keeping every unit is allowed but logged as a warning.

    Raises:
        ProfileFormatError, BadK
    """
    profile = read_profile(profile_path)
    if k == len(profile.units):
        logger.warning(f"k={k} keeps every profiled unit; nothing is pruned")
    policy = select_units(profile, k, strategy, seed, head_mode)
    write_json({**policy.model_dump(mode="json"), **(meta or {})}, out)
    return policy
