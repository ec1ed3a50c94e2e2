"""Deterministic closed-loop driving simulator with fault injection campaigns."""

from .dsl import (
    Diagnostic,
    ResolvedConfig,
    ScenarioError,
    ScenarioSpec,
    expand_sweeps,
    parse_scenario,
    serialize,
    validate,
)
from .faults import FaultInjector, FaultSpec, flip_bit, schedule_faults
from .latency import LatencyModel, default_latency_model, kl_divergence, stats
from .metrics import (
    DetectionPair,
    MissionOutcome,
    SuccessAggregate,
    aggregate,
    orientation_error,
    position_error,
)
from .campaign import CampaignPlan, config_hash, run_campaign
from .seeding import derive_seed, splitmix64_mix
from .trial import TrialOptions, TrialRecord, run_trial

__version__ = "0.1.0"

__all__ = [
    "CampaignPlan",
    "DetectionPair",
    "Diagnostic",
    "FaultInjector",
    "FaultSpec",
    "LatencyModel",
    "MissionOutcome",
    "ResolvedConfig",
    "ScenarioError",
    "ScenarioSpec",
    "SuccessAggregate",
    "TrialOptions",
    "TrialRecord",
    "aggregate",
    "config_hash",
    "default_latency_model",
    "derive_seed",
    "expand_sweeps",
    "flip_bit",
    "kl_divergence",
    "orientation_error",
    "parse_scenario",
    "position_error",
    "run_campaign",
    "run_trial",
    "schedule_faults",
    "serialize",
    "splitmix64_mix",
    "stats",
    "validate",
]
