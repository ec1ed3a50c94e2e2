"""Ground-truth vehicle motion, scripted traffic behaviors, and safety events."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .road import RoadModel, wrap_pi

DT = 0.01
MAX_STEER = 0.6

# Sedan footprint defaults; overridable per scenario.
DEFAULT_WHEELBASE = 2.5
DEFAULT_HALF_LENGTH = 2.25
DEFAULT_HALF_WIDTH = 0.9

# Scripted-agent lane tracking (Stanley-style) and speed-hold gains.
AGENT_STANLEY_GAIN = 2.0
AGENT_HEADING_GAIN = 1.0
AGENT_SPEED_GAIN = 1.0
AGENT_MAX_HOLD_ACCEL = 2.0
STOP_BEHAVIOR_DECEL = 3.0


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    yaw: float
    speed: float
    wheelbase: float = DEFAULT_WHEELBASE
    half_length: float = DEFAULT_HALF_LENGTH
    half_width: float = DEFAULT_HALF_WIDTH


@dataclass(frozen=True)
class BehaviorScript:
    """Scripted traffic agent behavior.

    kind: "cruise" holds the initial speed and lane; "emergency_brake"
    cruises then applies ``decel`` from time ``at`` until stopped; "cut_in"
    transitions laterally to ``target_lane`` over ``duration`` starting at
    ``at``; "stop" brakes gently from the start.
    """

    kind: str = "cruise"
    at: float = 0.0
    decel: float = 6.0
    target_lane: int = 0
    duration: float = 2.0
    start_lane: int = 0
    cruise_speed: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("cruise", "emergency_brake", "cut_in", "stop"):
            raise ValueError(f"unknown behavior kind: {self.kind!r}")
        if self.at < 0:
            raise ValueError("behavior start time must be >= 0")
        if self.kind == "emergency_brake" and self.decel <= 0:
            raise ValueError("decel must be > 0")
        if self.kind == "cut_in" and self.duration <= 0:
            raise ValueError("cut_in duration must be > 0")


@dataclass(frozen=True)
class Agent:
    agent_id: str
    state: VehicleState
    script: BehaviorScript


@dataclass(frozen=True)
class WorldState:
    tick: int
    time: float
    ego: VehicleState
    agents: tuple[Agent, ...]
    events: tuple[tuple[float, str], ...] = ()


def step_vehicle(state: VehicleState, steer: float, accel: float, dt: float) -> VehicleState:
    """Kinematic bicycle update; steer is clamped to +/-0.6 rad, speed to >= 0."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    steer = min(max(steer, -MAX_STEER), MAX_STEER)
    v = state.speed
    new_yaw = state.yaw + (v / state.wheelbase) * math.tan(steer) * dt
    new_x = state.x + v * math.cos(state.yaw) * dt
    new_y = state.y + v * math.sin(state.yaw) * dt
    new_speed = max(0.0, v + accel * dt)
    return replace(state, x=new_x, y=new_y, yaw=new_yaw, speed=new_speed)


def _smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _script_lateral_target(script: BehaviorScript, road: RoadModel, t: float) -> tuple[float, float]:
    """Commanded (lateral offset, d offset rate) for a scripted agent at time t."""
    d_start = road.lane_center(script.start_lane)
    if script.kind != "cut_in" or t <= script.at:
        return d_start, 0.0
    d_end = road.lane_center(script.target_lane)
    u = (t - script.at) / script.duration
    if u >= 1.0:
        return d_end, 0.0
    gain = d_end - d_start
    rate = gain * 6.0 * u * (1.0 - u) / script.duration
    return d_start + gain * _smoothstep(u), rate


def _script_accel(script: BehaviorScript, t: float, speed: float) -> float:
    if script.kind == "stop" or (script.kind == "emergency_brake" and t >= script.at):
        decel = script.decel if script.kind == "emergency_brake" else STOP_BEHAVIOR_DECEL
        return -decel if speed > 0 else 0.0
    err = script.cruise_speed - speed
    return min(max(AGENT_SPEED_GAIN * err, -AGENT_MAX_HOLD_ACCEL), AGENT_MAX_HOLD_ACCEL)


def _script_steer(state: VehicleState, script: BehaviorScript, road: RoadModel, t: float) -> float:
    s, d = road.to_frenet(state.x, state.y)
    d_cmd, d_rate = _script_lateral_target(script, road, t)
    _, _, road_yaw = road.to_cartesian(min(s, road.total_length), 0.0)
    v = max(state.speed, 0.5)
    theta_des = road_yaw + math.atan2(d_rate, v)
    heading_err = wrap_pi(theta_des - state.yaw)
    cross_track = d_cmd - d
    steer_ff = math.atan(state.wheelbase * road.offset_curvature(s, d_cmd))
    return steer_ff + AGENT_HEADING_GAIN * heading_err + math.atan2(AGENT_STANLEY_GAIN * cross_track, v)


def step_behaviors(world: WorldState, road: RoadModel, dt: float) -> WorldState:
    """Advance all traffic agents one step and move the clock forward one tick.

    The ego is advanced by the caller (from pipeline commands) before this
    runs, so the returned state is the complete world at tick+1.
    """
    t = world.time
    new_agents = []
    for agent in world.agents:
        steer = _script_steer(agent.state, agent.script, road, t)
        accel = _script_accel(agent.script, t, agent.state.speed)
        new_agents.append(replace(agent, state=step_vehicle(agent.state, steer, accel, dt)))
    new_tick = world.tick + 1
    return replace(world, tick=new_tick, time=new_tick * dt, agents=tuple(new_agents))


def _corners(state: VehicleState) -> list[tuple[float, float]]:
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    hl, hw = state.half_length, state.half_width
    return [
        (state.x + dx * c - dy * s, state.y + dx * s + dy * c)
        for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
    ]


def _rects_overlap(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis test for two oriented rectangles; touching counts as overlap."""
    ca, cb = _corners(a), _corners(b)
    for yaw in (a.yaw, b.yaw):
        for ax, ay in ((math.cos(yaw), math.sin(yaw)), (-math.sin(yaw), math.cos(yaw))):
            a_projs = [px * ax + py * ay for px, py in ca]
            b_projs = [px * ax + py * ay for px, py in cb]
            if max(a_projs) < min(b_projs) or max(b_projs) < min(a_projs):
                return False
    return True


def check_collision(world: WorldState) -> tuple[float, str] | None:
    """Event (time, "collision") iff the ego's rectangle overlaps any agent's."""
    ego = world.ego
    ego_radius = math.hypot(ego.half_length, ego.half_width)
    for agent in world.agents:
        st = agent.state
        gap = math.hypot(st.x - ego.x, st.y - ego.y)
        if gap > ego_radius + math.hypot(st.half_length, st.half_width):
            continue
        if _rects_overlap(ego, st):
            return (world.time, "collision")
    return None


def check_off_lane(world: WorldState, road: RoadModel) -> bool:
    """True iff the ego center is more than half a lane from its nearest lane center."""
    _, d = road.to_frenet(world.ego.x, world.ego.y)
    center = road.lane_center(road.nearest_lane(d))
    return abs(d - center) > road.lane_width / 2.0


def make_agent(
    agent_id: str,
    road: RoadModel,
    lane: int,
    s: float,
    speed: float,
    script: BehaviorScript,
    wheelbase: float = DEFAULT_WHEELBASE,
    half_length: float = DEFAULT_HALF_LENGTH,
    half_width: float = DEFAULT_HALF_WIDTH,
) -> Agent:
    x, y, yaw = road.to_cartesian(s, road.lane_center(lane))
    state = VehicleState(x=x, y=y, yaw=yaw, speed=speed, wheelbase=wheelbase,
                         half_length=half_length, half_width=half_width)
    script = replace(script, start_lane=lane, cruise_speed=speed)
    return Agent(agent_id=agent_id, state=state, script=script)
