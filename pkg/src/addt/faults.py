"""Bit-flip fault injection into registered pipeline state."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .pipeline import Pipeline


class InvalidFaultAddress(Exception):
    """A fault spec points outside the registered state manifest."""


@dataclass(frozen=True)
class FaultSpec:
    node: str
    state_index: int
    bit: int
    trigger_tick: int
    mode: str = "flip"  # "flip" | "stuck"
    stuck_value: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.bit <= 63:
            raise ValueError(f"bit must be in [0, 63], got {self.bit}")
        if self.trigger_tick < 0:
            raise ValueError("trigger_tick must be >= 0")
        if self.mode not in ("flip", "stuck"):
            raise ValueError(f"unknown fault mode: {self.mode!r}")

    def to_json(self) -> dict:
        d = {
            "node": self.node,
            "state_index": self.state_index,
            "bit": self.bit,
            "trigger_tick": self.trigger_tick,
            "mode": self.mode,
        }
        if self.mode == "stuck":
            d["stuck_value"] = self.stuck_value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FaultSpec":
        return cls(
            node=d["node"],
            state_index=int(d["state_index"]),
            bit=int(d.get("bit", 0)),
            trigger_tick=int(d["trigger_tick"]),
            mode=d.get("mode", "flip"),
            stuck_value=float(d.get("stuck_value", 0.0)),
        )


@dataclass(frozen=True)
class FaultLogEntry:
    tick: int
    node: str
    state_index: int
    bit: int
    value_before: float
    value_after: float


@dataclass
class FaultLog:
    entries: list[FaultLogEntry] = field(default_factory=list)

    def record(self, entry: FaultLogEntry) -> None:
        self.entries.append(entry)


def flip_bit(value: float, bit: int) -> float:
    """Invert one bit of the binary64 pattern of ``value``.

    NaN and infinity results are legitimate outcomes and are returned as-is.
    """
    if not 0 <= bit <= 63:
        raise ValueError(f"bit must be in [0, 63], got {bit}")
    (pattern,) = struct.unpack("<Q", struct.pack("<d", value))
    (flipped,) = struct.unpack("<d", struct.pack("<Q", pattern ^ (1 << bit)))
    return flipped


class FaultInjector:
    """Applies a fault schedule to a pipeline's registered state, tick by tick.

    Flip faults fire exactly once at their trigger tick; stuck faults
    overwrite the address on the trigger tick and on every later tick until
    the trial ends. Applications that change a value are logged with
    before/after.
    """

    def __init__(self, schedule: list[FaultSpec]):
        self.schedule = sorted(schedule, key=lambda s: (s.trigger_tick, s.node, s.state_index, s.bit))
        self.log = FaultLog()
        self._active_stuck: list[FaultSpec] = []
        self._cursor = 0

    def apply(self, pipeline: "Pipeline", tick: int) -> None:
        while self._cursor < len(self.schedule) and self.schedule[self._cursor].trigger_tick == tick:
            spec = self.schedule[self._cursor]
            self._cursor += 1
            if spec.mode == "stuck":
                self._active_stuck.append(spec)
            else:
                self._inject_flip(pipeline, spec, tick)
        for spec in self._active_stuck:
            self._inject_stuck(pipeline, spec, tick)

    def _inject_flip(self, pipeline: "Pipeline", spec: FaultSpec, tick: int) -> None:
        before = pipeline.read_state(spec.node, spec.state_index)
        after = flip_bit(before, spec.bit)
        pipeline.write_state(spec.node, spec.state_index, after)
        self.log.record(FaultLogEntry(tick, spec.node, spec.state_index, spec.bit, before, after))

    def _inject_stuck(self, pipeline: "Pipeline", spec: FaultSpec, tick: int) -> None:
        before = pipeline.read_state(spec.node, spec.state_index)
        after = spec.stuck_value
        pipeline.write_state(spec.node, spec.state_index, after)
        if before != after:
            self.log.record(FaultLogEntry(tick, spec.node, spec.state_index, spec.bit, before, after))


def schedule_faults(
    node: str,
    count: int,
    tick_range: tuple[int, int],
    rng: np.random.Generator,
    manifest: dict[str, list[str]],
    mode: str = "flip",
    stuck_value: float = 0.0,
) -> list[FaultSpec]:
    """Draw ``count`` uniformly random fault specs against one node's manifest."""
    if count < 0:
        raise ValueError("count must be >= 0")
    names = manifest.get(node)
    if not names:
        raise InvalidFaultAddress(f"no registered state for node {node!r}")
    lo, hi = tick_range
    if lo > hi:
        raise ValueError("empty tick range")
    specs = []
    for _ in range(count):
        idx = int(rng.integers(0, len(names)))
        bit = int(rng.integers(0, 64))
        tick = int(rng.integers(lo, hi + 1))
        specs.append(FaultSpec(node=node, state_index=idx, bit=bit, trigger_tick=tick,
                               mode=mode, stuck_value=stuck_value))
    return specs
