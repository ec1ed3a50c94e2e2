"""Perception error metrics, mission outcome classification, and success aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

TAU = 2.0 * math.pi

# z for a 95% Wilson interval.
WILSON_Z = 1.959964

OUTCOME_KINDS = ("success", "collision", "off_lane", "timeout", "aborted")


@dataclass(frozen=True)
class DetectionPair:
    """A detected pose matched with its ground truth, both in the same planar frame."""

    x_d: float
    y_d: float
    theta_d: float
    x_gt: float
    y_gt: float
    theta_gt: float


@dataclass(frozen=True)
class MissionOutcome:
    kind: str
    time_of_event: float

    def __post_init__(self) -> None:
        if self.kind not in OUTCOME_KINDS:
            raise ValueError(f"unknown outcome kind: {self.kind!r}")

    @property
    def is_success(self) -> bool:
        return self.kind == "success"


@dataclass(frozen=True)
class SuccessAggregate:
    successes: int
    trials: int
    rate: float
    ci_low: float
    ci_high: float


def wrap_angle_abs(delta: float) -> float:
    """Map an angle difference onto [0, pi]."""
    d = math.fmod(abs(delta), TAU)
    if d > math.pi:
        d = TAU - d
    return d


def position_error(pairs: Sequence[DetectionPair]) -> float:
    """Mean Euclidean distance between detected and ground-truth centers."""
    if not pairs:
        raise ValueError("position_error requires at least one pair")
    total = 0.0
    for p in pairs:
        total += math.hypot(p.x_d - p.x_gt, p.y_d - p.y_gt)
    return total / len(pairs)


def orientation_error(pairs: Sequence[DetectionPair], wrapped: bool = True) -> float:
    """Mean absolute orientation difference.

    The wrapped form (default) maps each difference into [0, pi], which is the
    physically meaningful distance across the +/-pi seam; ``wrapped=False``
    gives the raw mean |theta_d - theta_gt| for comparison.
    """
    if not pairs:
        raise ValueError("orientation_error requires at least one pair")
    total = 0.0
    for p in pairs:
        d = abs(p.theta_d - p.theta_gt)
        total += wrap_angle_abs(d) if wrapped else d
    return total / len(pairs)


def classify_mission(
    events: Iterable[tuple[float, str]],
    reached_target_time: float | None,
    timeout: float,
    malformed: bool = False,
) -> MissionOutcome:
    """Classify a trial from its event stream.

    ``events`` are (time, kind) with kind in {"collision", "off_lane"};
    ``reached_target_time`` is the time the ego first reached the mission's
    target arc length, or None if it never did. The first terminal thing wins:
    an event before target completion fails the mission, otherwise reaching
    the target before the timeout succeeds, otherwise the trial timed out.
    """
    if malformed:
        return MissionOutcome("aborted", 0.0)
    first_event: tuple[float, str] | None = None
    for t, kind in events:
        if kind not in ("collision", "off_lane"):
            return MissionOutcome("aborted", t)
        if first_event is None or t < first_event[0]:
            first_event = (t, kind)
    if first_event is not None:
        if reached_target_time is None or first_event[0] <= reached_target_time:
            return MissionOutcome(first_event[1], first_event[0])
    if reached_target_time is not None and reached_target_time <= timeout:
        return MissionOutcome("success", reached_target_time)
    return MissionOutcome("timeout", timeout)


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def aggregate(outcomes: Sequence[MissionOutcome]) -> SuccessAggregate:
    """Success rate over outcomes with a Wilson 95% interval.

    Timeouts count as failures; callers that want the narrower
    crash/off-lane-only failure definition can recompute from the raw
    outcome kinds.
    """
    if not outcomes:
        raise ValueError("aggregate requires at least one outcome")
    k = sum(1 for o in outcomes if o.is_success)
    n = len(outcomes)
    lo, hi = wilson_interval(k, n)
    return SuccessAggregate(successes=k, trials=n, rate=k / n, ci_low=lo, ci_high=hi)
