"""Workload-dependent compute latency model and distribution statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEADLINE_MS = 100.0


@dataclass(frozen=True)
class NodeLatency:
    """Affine-in-workload lognormal latency for one pipeline node.

    A sample is (alpha + beta * n_obj) * exp(sigma * Z) with Z standard
    normal, so the scale term is also the median and sigma=0 is exact.
    """

    alpha_ms: float
    beta_ms_per_obj: float
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha_ms < 0 or self.beta_ms_per_obj < 0 or self.sigma < 0:
            raise ValueError("latency model parameters must be >= 0")


@dataclass(frozen=True)
class LatencyModel:
    nodes: dict[str, NodeLatency]
    coupling: str = "record_only"  # "record_only" | "delay_command"
    deadline_ms: float = DEADLINE_MS

    def __post_init__(self) -> None:
        if self.coupling not in ("record_only", "delay_command"):
            raise ValueError(f"unknown coupling mode: {self.coupling!r}")


def default_latency_model(coupling: str = "record_only", sigma: float = 0.2) -> LatencyModel:
    """Shipped defaults: total scale 20 + 2*n_obj ms, crossing 100 ms at 40 objects."""
    return LatencyModel(
        nodes={
            "perception": NodeLatency(12.0, 1.5, sigma),
            "planning": NodeLatency(5.0, 0.4, sigma),
            "control": NodeLatency(3.0, 0.1, sigma),
        },
        coupling=coupling,
    )


@dataclass(frozen=True)
class LatencySample:
    tick: int
    per_node_ms: dict[str, float]
    e2e_ms: float
    n_obj: int
    violated: bool


@dataclass(frozen=True)
class LatencyStats:
    best_ms: float
    mean_ms: float
    p99_ms: float
    violation_rate: float


def sample_node_latency(model: LatencyModel, node: str, n_obj: int, rng: np.random.Generator) -> float:
    if n_obj < 0:
        raise ValueError("n_obj must be >= 0")
    nl = model.nodes[node]
    scale = nl.alpha_ms + nl.beta_ms_per_obj * n_obj
    if nl.sigma == 0.0:
        return scale
    return scale * math.exp(nl.sigma * rng.standard_normal())


def sample_cycle(model: LatencyModel, tick: int, n_obj: int, rng: np.random.Generator) -> LatencySample:
    """One end-to-end decision-cycle sample along the sensor-to-control path."""
    per_node = {name: sample_node_latency(model, name, n_obj, rng) for name in model.nodes}
    e2e = sum(per_node.values())
    return LatencySample(tick=tick, per_node_ms=per_node, e2e_ms=e2e, n_obj=n_obj,
                         violated=e2e > model.deadline_ms)


def nearest_rank_percentile(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the value at 1-based index ceil(q*n) of the sorted sample."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    idx = math.ceil(q * n)
    idx = min(max(idx, 1), n)
    return sorted_values[idx - 1]


def stats(samples: Sequence[float], deadline_ms: float = DEADLINE_MS) -> LatencyStats:
    """Best/mean/p99/violation-rate over raw e2e latency values."""
    if not samples:
        raise ValueError("stats requires at least one sample")
    ordered = sorted(samples)
    n = len(ordered)
    return LatencyStats(
        best_ms=ordered[0],
        mean_ms=sum(ordered) / n,
        p99_ms=nearest_rank_percentile(ordered, 0.99),
        violation_rate=sum(1 for v in ordered if v > deadline_ms) / n,
    )


def check_deadline(e2e_ms: float, deadline_ms: float = DEADLINE_MS) -> bool:
    """True iff the sample violates the deadline (strict >; exactly on time is fine)."""
    return e2e_ms > deadline_ms


def kl_divergence(
    p_samples: Sequence[float],
    q_samples: Sequence[float],
    bin_count: int = 50,
    smoothing: float = 1e-9,
) -> float:
    """KL(P||Q) in nats from equal-width histograms over the shared sample range.

    Each bin receives ``smoothing`` mass before normalization so empty bins
    stay finite; the estimator is deterministic for fixed inputs.
    """
    if len(p_samples) == 0 or len(q_samples) == 0:
        raise ValueError("both sample sets must be non-empty")
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    p = np.asarray(p_samples, dtype=float)
    q = np.asarray(q_samples, dtype=float)
    lo = min(p.min(), q.min())
    hi = max(p.max(), q.max())
    if lo == hi:
        # Degenerate shared support: both distributions collapse to one bin.
        return 0.0
    p_hist, edges = np.histogram(p, bins=bin_count, range=(lo, hi))
    q_hist, _ = np.histogram(q, bins=bin_count, range=(lo, hi))
    p_mass = p_hist.astype(float) + smoothing
    q_mass = q_hist.astype(float) + smoothing
    p_mass /= p_mass.sum()
    q_mass /= q_mass.sum()
    return float(np.sum(p_mass * np.log(p_mass / q_mass)))
