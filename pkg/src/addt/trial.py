"""One closed-loop trial: scenario in, mission outcome and metrics out."""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import latency as latency_mod
from .dsl import BitflipFaultDecl, DropFaultDecl, ResolvedConfig, ShiftFaultDecl
from .faults import FaultInjector, FaultSpec, InvalidFaultAddress, schedule_faults
from .latency import LatencyModel, default_latency_model
from .metrics import DetectionPair, MissionOutcome, orientation_error, position_error
from .pipeline import CONTROL_PERIOD, MissionContext, Pipeline
from .road import RoadModel
from .seeding import (
    STREAM_EXTRINSICS,
    STREAM_FAULTS,
    STREAM_LATENCY,
    STREAM_SENSOR_NOISE,
    STREAM_TEMPORAL,
    substream_seed,
)
from .sensor import (
    Extrinsics,
    IDENTITY_EXTRINSICS,
    SensorConfig,
    SpatialFaultSpec,
    TemporalFaultSpec,
    agents_in_ego_frame,
    apply_temporal_fault,
    perturb_extrinsics,
    sample_frame,
    to_ego_frame,
)
from .world import (
    Agent,
    BehaviorScript,
    VehicleState,
    WorldState,
    check_collision,
    make_agent,
    step_behaviors,
    step_vehicle,
)

DT = CONTROL_PERIOD

TRACE_HEADER = (
    "tick,time,ego_s,ego_d,ego_x,ego_y,ego_yaw,ego_speed,"
    "n_tracks,traj_offset,traj_speed,traj_valid,agents,event"
)


@dataclass(frozen=True)
class TrialOptions:
    latency_coupling: str = "record_only"
    trace: bool = False
    extra_faults: tuple[FaultSpec, ...] = ()
    sensor: SensorConfig | None = None
    latency_model: LatencyModel | None = None
    # Attach the injector even with an empty schedule (used to verify that an
    # idle injector leaves trials bit-identical).
    attach_injector: bool = False


@dataclass
class TrialRecord:
    config_id: str
    trial_index: int
    seed: int
    outcome: MissionOutcome
    e_p: float | None
    e_theta: float | None
    latency_best: float
    latency_mean: float
    latency_p99: float
    latency_violation_rate: float
    fault_log: list = field(default_factory=list)
    ticks: int = 0
    wall_ms: float = 0.0
    trace_rows: list[str] | None = None

    def to_row(self) -> dict:
        """Deterministic per-trial fields (wall time deliberately excluded)."""
        return {
            "config_id": self.config_id,
            "trial_index": self.trial_index,
            "seed": self.seed,
            "outcome": self.outcome.kind,
            "time_of_event": self.outcome.time_of_event,
            "e_p": self.e_p,
            "e_theta": self.e_theta,
            "latency_best_ms": self.latency_best,
            "latency_mean_ms": self.latency_mean,
            "latency_p99_ms": self.latency_p99,
            "latency_violation_rate": self.latency_violation_rate,
            "ticks": self.ticks,
            "n_fault_injections": len(self.fault_log),
        }


def build_road(config: ResolvedConfig) -> RoadModel:
    decl = config.scenario.road
    segments = decl.segments
    if not segments:
        # Default: one straight segment comfortably longer than the mission.
        segments = ((float(config.scenario.mission.target_s) + 500.0, 0.0),)
    return RoadModel(int(decl.lane_count), float(decl.lane_width), tuple(segments))


def build_world(config: ResolvedConfig, road: RoadModel) -> WorldState:
    spec = config.scenario
    ex, ey, eyaw = road.to_cartesian(float(spec.ego.s), road.lane_center(int(spec.ego.lane)))
    ego = VehicleState(
        x=ex, y=ey, yaw=eyaw, speed=float(spec.ego.speed),
        wheelbase=float(spec.ego.wheelbase),
        half_length=float(spec.ego.length) / 2.0,
        half_width=float(spec.ego.width) / 2.0,
    )
    agents = []
    for decl in spec.agents:
        script = BehaviorScript(
            kind=decl.behavior,
            at=float(decl.at),
            decel=float(decl.decel),
            target_lane=int(decl.target_lane),
            duration=float(decl.duration),
        )
        agents.append(make_agent(
            decl.name, road, int(decl.lane), float(decl.s), float(decl.speed), script,
            wheelbase=float(decl.wheelbase),
            half_length=float(decl.length) / 2.0,
            half_width=float(decl.width) / 2.0,
        ))
    return WorldState(tick=0, time=0.0, ego=ego, agents=tuple(agents))


def _trial_faults(config: ResolvedConfig) -> tuple[TemporalFaultSpec | None,
                                                   SpatialFaultSpec | None,
                                                   list[BitflipFaultDecl]]:
    temporal = None
    spatial = None
    bitflips = []
    for decl in config.scenario.faults:
        if isinstance(decl, DropFaultDecl):
            temporal = TemporalFaultSpec(drop_rate=float(decl.rate),
                                         delay_sigma=float(decl.delay_sigma))
        elif isinstance(decl, ShiftFaultDecl):
            if decl.has_fixed_offset:
                spatial = SpatialFaultSpec(
                    fixed_translation=(float(decl.dx), float(decl.dy), float(decl.dz)),
                    fixed_rotation=(float(decl.yaw), float(decl.pitch), float(decl.roll)),
                )
            else:
                spatial = SpatialFaultSpec(
                    translation_sigma=float(decl.translation_sigma),
                    rotation_sigma=float(decl.rotation_sigma),
                )
        elif isinstance(decl, BitflipFaultDecl):
            bitflips.append(decl)
    return temporal, spatial, bitflips


def run_trial(config: ResolvedConfig, seed: int, trial_index: int = 0,
              options: TrialOptions = TrialOptions()) -> TrialRecord:
    """Run the closed loop at dt=0.01 s until a terminal event or timeout.

    All randomness flows from per-concern substreams of ``seed``, so a
    (config, seed) pair reproduces the trial bit-for-bit.
    """
    start = _time.perf_counter()
    spec = config.scenario
    road = build_road(config)
    world = build_world(config, road)
    pipeline = Pipeline()

    sensor_cfg = options.sensor or SensorConfig()
    lat_model = options.latency_model or default_latency_model(coupling=options.latency_coupling)
    mission = MissionContext(
        cruise_speed=float(spec.ego.speed),
        lane_center=road.lane_center(int(spec.mission.lane)),
        target_s=float(spec.mission.target_s),
    )
    timeout = float(spec.mission.timeout)
    max_ticks = int(round(timeout / DT))

    rng_noise = np.random.Generator(np.random.PCG64(substream_seed(seed, STREAM_SENSOR_NOISE)))
    rng_temporal = np.random.Generator(np.random.PCG64(substream_seed(seed, STREAM_TEMPORAL)))
    rng_extr = np.random.Generator(np.random.PCG64(substream_seed(seed, STREAM_EXTRINSICS)))
    rng_latency = np.random.Generator(np.random.PCG64(substream_seed(seed, STREAM_LATENCY)))
    rng_faults = np.random.Generator(np.random.PCG64(substream_seed(seed, STREAM_FAULTS)))

    temporal_spec, spatial_spec, bitflip_decls = _trial_faults(config)
    nominal = IDENTITY_EXTRINSICS
    actual = perturb_extrinsics(nominal, spatial_spec, rng_extr) if spatial_spec else nominal

    schedule: list[FaultSpec] = list(options.extra_faults)
    aborted = False
    try:
        manifest = pipeline.manifest_names()
        for decl in bitflip_decls:
            to_tick = int(decl.to_tick)
            if to_tick < 0:
                to_tick = int(max_ticks * 0.8)
            node = decl.node if isinstance(decl.node, str) else str(decl.node)
            schedule.extend(schedule_faults(
                node, int(decl.count), (int(decl.from_tick), to_tick),
                rng_faults, manifest, mode=decl.mode, stuck_value=float(decl.value),
            ))
        injector = FaultInjector(schedule) if (schedule or options.attach_injector) else None
    except (InvalidFaultAddress, ValueError):
        injector = None
        aborted = True

    pairs: list[DetectionPair] = []
    e2e_samples: list[float] = []
    frames_per_tick = max(1, round(1.0 / (sensor_cfg.rate_hz * DT)))

    trace_rows: list[str] | None = [TRACE_HEADER] if options.trace else None
    outcome: MissionOutcome | None = None
    pending_cmd = None
    last_applied = pipeline.last_command
    tick = 0

    if aborted:
        outcome = MissionOutcome("aborted", 0.0)
    else:
        ego_s, ego_d = road.to_frenet(world.ego.x, world.ego.y)

    while outcome is None and tick < max_ticks:
        if injector is not None:
            try:
                injector.apply(pipeline, tick)
            except InvalidFaultAddress:
                outcome = MissionOutcome("aborted", tick * DT)
                break

        ego = world.ego
        detections = None
        frame_received = False
        if tick % frames_per_tick == 0:
            seq = tick // frames_per_tick
            frame = sample_frame(world, actual, sensor_cfg, seq, rng_noise)
            if temporal_spec is not None:
                frame = apply_temporal_fault(frame, temporal_spec, sensor_cfg, rng_temporal)
            if not frame.dropped:
                frame_received = True
                detections = to_ego_frame(frame, nominal)
                truth = {obj_id: (x, y, yaw) for obj_id, x, y, yaw in agents_in_ego_frame(world)}
                for det in detections:
                    gt = truth.get(det.obj_id)
                    if gt is not None:
                        pairs.append(DetectionPair(det.x, det.y, det.yaw, gt[0], gt[1], gt[2]))
            sample = latency_mod.sample_cycle(
                lat_model, tick, len(frame.detections), rng_latency)
            e2e_samples.append(sample.e2e_ms)
            cycle_violated = sample.violated
        else:
            cycle_violated = False

        cmd = pipeline.tick(tick, detections, frame_received, ego, ego_s, ego_d, road, mission)

        if lat_model.coupling == "delay_command" and cycle_violated:
            # The late decision holds the previous actuation one more period.
            apply_cmd = last_applied
            pending_cmd = cmd
        else:
            apply_cmd = pending_cmd if pending_cmd is not None else cmd
            pending_cmd = None
        last_applied = apply_cmd

        new_ego = step_vehicle(ego, apply_cmd.steer, apply_cmd.accel, DT)
        world = step_behaviors(replace(world, ego=new_ego), road, DT)

        if trace_rows is not None:
            trace_rows.append(_trace_row(world, road, pipeline, ego_s, ego_d, ""))

        # Terminal checks on the post-step world.
        now = world.time
        ego = world.ego
        if not (math.isfinite(ego.x) and math.isfinite(ego.y) and math.isfinite(ego.yaw)
                and math.isfinite(ego.speed)):
            outcome = MissionOutcome("off_lane", now)
            break
        collision = check_collision(world)
        if collision is not None:
            outcome = MissionOutcome("collision", collision[0])
            break
        ego_s, ego_d = road.to_frenet(ego.x, ego.y)
        lane_center = road.lane_center(road.nearest_lane(ego_d))
        if abs(ego_d - lane_center) > road.lane_width / 2.0:
            outcome = MissionOutcome("off_lane", now)
            break
        if ego_s >= mission.target_s:
            outcome = MissionOutcome("success", now)
            break
        tick += 1

    if outcome is None:
        outcome = MissionOutcome("timeout", timeout)
    if trace_rows is not None and outcome.kind in ("collision", "off_lane"):
        trace_rows.append(f"# terminal event: {outcome.kind} at t={outcome.time_of_event}")

    if e2e_samples:
        lat_stats = latency_mod.stats(e2e_samples, lat_model.deadline_ms)
    else:
        lat_stats = latency_mod.LatencyStats(0.0, 0.0, 0.0, 0.0)

    wall_ms = (_time.perf_counter() - start) * 1e3
    return TrialRecord(
        config_id=config.config_id,
        trial_index=trial_index,
        seed=seed,
        outcome=outcome,
        e_p=position_error(pairs) if pairs else None,
        e_theta=orientation_error(pairs) if pairs else None,
        latency_best=lat_stats.best_ms,
        latency_mean=lat_stats.mean_ms,
        latency_p99=lat_stats.p99_ms,
        latency_violation_rate=lat_stats.violation_rate,
        fault_log=(injector.log.entries if injector is not None else []),
        ticks=world.tick,
        wall_ms=wall_ms,
        trace_rows=trace_rows,
    )


def _trace_row(world: WorldState, road: RoadModel, pipeline: Pipeline,
               ego_s: float, ego_d: float, event: str) -> str:
    ego = world.ego
    traj = pipeline.current_trajectory(ego_s)
    agents = ";".join(
        f"{a.agent_id}:{a.state.x:.3f}:{a.state.y:.3f}:{a.state.yaw:.4f}:{a.state.speed:.3f}"
        for a in world.agents
    )
    n_tracks = len(pipeline.tracks())
    return (
        f"{world.tick},{world.time:.2f},{ego_s:.3f},{ego_d:.3f},{ego.x:.3f},{ego.y:.3f},"
        f"{ego.yaw:.4f},{ego.speed:.3f},{n_tracks},{traj.lateral_offset_target:.3f},"
        f"{traj.speed_profile[0][1]:.3f},{int(traj.valid)},{agents},{event}"
    )
