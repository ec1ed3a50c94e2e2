"""Emulated AD software stack: tracking, lattice planning, PID control.

The three nodes run as a fixed sensor->perception->planning->control chain,
perception and planning at 10 Hz and control at 100 Hz. Every scalar the
node arithmetic consumes lives in a per-node registered state vector of
named binary64 values, addressable as (node, index) for fault injection:
tunables are loaded into the vector at construction and read back each
execution, and each node's outputs are written through it, so injected
faults propagate exactly like register corruption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .road import RoadModel, wrap_pi
from .sensor import Detection
from .world import VehicleState

CONTROL_PERIOD = 0.01
PERCEPTION_PERIOD = 0.1
TICKS_PER_CYCLE = round(PERCEPTION_PERIOD / CONTROL_PERIOD)

MAX_STEER_CMD = 0.6
MAX_ACCEL_CMD = 8.0

MAX_TRACKS = 8
_TRACK_FIELDS = ("occ", "id", "x", "y", "yaw", "speed", "age")
_TRACK_STRIDE = len(_TRACK_FIELDS)

# Vehicle extent assumed for tracked objects when predicting conflicts.
TRACK_HALF_LENGTH = 2.25
TRACK_HALF_WIDTH = 0.9

INFEASIBLE = float("inf")


@dataclass(frozen=True)
class TrackedObject:
    track_id: int
    x: float
    y: float
    yaw: float
    speed: float  # longitudinal (ego-x) rate of change, signed, relative to ego
    age: int


@dataclass(frozen=True)
class Trajectory:
    lateral_offset_target: float
    speed_profile: tuple[tuple[float, float], ...]
    cost: float
    valid: bool


@dataclass(frozen=True)
class ControlCommand:
    steer: float
    accel: float
    tick: int


@dataclass(frozen=True)
class MissionContext:
    """Per-trial planner inputs derived from the scenario."""

    cruise_speed: float
    lane_center: float
    target_s: float


# Shipped tunables; they are data loaded into the registered state vectors.
DEFAULT_TUNING = {
    "perception": {
        "assoc_gate_m": 3.0,
        # Extra gate per meter of range: distant detections swing further in
        # the ego frame when the ego itself turns.
        "assoc_gate_per_m": 0.06,
        "stale_limit": 3.0,
        "next_track_id": 1.0,
        # Odometry snapshot used to motion-compensate tracks between cycles.
        "odom_x": 0.0,
        "odom_y": 0.0,
        "odom_yaw": 0.0,
        "odom_speed": 0.0,
        "odom_init": 0.0,
    },
    "planning": {
        "w_collision": 1.0,
        "w_lane": 1.0,
        "w_progress": 0.1,
        "w_commit": 0.8,
        "horizon_s": 3.0,
        "lane_change_time_s": 2.0,
        "margin_lon_m": 2.0,
        "margin_lat_m": 0.4,
        "follow_time_gap_s": 1.2,
        "follow_min_gap_m": 6.0,
        "traj_offset_m": 0.0,
        "traj_speed_mps": 0.0,
        "traj_valid": 0.0,
        "traj_cost": 0.0,
    },
    "control": {
        "kp_speed": 1.2,
        "ki_speed": 0.25,
        "kp_lat": 0.5,
        "ki_lat": 0.02,
        "kd_lat": 0.35,
        "k_heading": 0.9,
        "k_curve_ff": 1.0,
        "integral_speed": 0.0,
        "integral_lat": 0.0,
        "prev_lat_pos": 0.0,
        "out_steer": 0.0,
        "out_accel": 0.0,
    },
}

_PERCEPTION_NAMES = tuple(DEFAULT_TUNING["perception"]) + tuple(
    f"track{i}_{f}" for i in range(MAX_TRACKS) for f in _TRACK_FIELDS
)
_PLANNING_NAMES = tuple(DEFAULT_TUNING["planning"])
_CONTROL_NAMES = tuple(DEFAULT_TUNING["control"])

NODE_LAYOUT: dict[str, tuple[str, ...]] = {
    "perception": _PERCEPTION_NAMES,
    "planning": _PLANNING_NAMES,
    "control": _CONTROL_NAMES,
}

# Which hardware each node's state models (metadata only; the injection
# mechanism is identical).
NODE_HARDWARE = {"perception": "gpu", "planning": "cpu", "control": "cpu"}

_TRACKS_BASE = len(DEFAULT_TUNING["perception"])

# Planning / control state indices, resolved once.
_P = {name: i for i, name in enumerate(_PLANNING_NAMES)}
_C = {name: i for i, name in enumerate(_CONTROL_NAMES)}


class Pipeline:
    """State machine advanced by :meth:`tick`; single-threaded per trial."""

    def __init__(self, tuning: dict[str, dict[str, float]] | None = None):
        tuning = tuning or DEFAULT_TUNING
        self.state: dict[str, list[float]] = {}
        for node, names in NODE_LAYOUT.items():
            node_tuning = tuning.get(node, DEFAULT_TUNING[node])
            values = []
            for name in names:
                if name.startswith("track"):
                    values.append(0.0)
                else:
                    values.append(float(node_tuning.get(name, DEFAULT_TUNING[node][name])))
            self.state[node] = values
        self._index: dict[str, dict[str, int]] = {
            node: {name: i for i, name in enumerate(names)}
            for node, names in NODE_LAYOUT.items()
        }
        self.last_command = ControlCommand(0.0, 0.0, -1)

    # -- registered state access (also the fault injection surface)

    def read_state(self, node: str, index: int) -> float:
        from .faults import InvalidFaultAddress

        values = self.state.get(node)
        if values is None or not 0 <= index < len(values):
            raise InvalidFaultAddress(f"no registered scalar at ({node}, {index})")
        return values[index]

    def write_state(self, node: str, index: int, value: float) -> None:
        from .faults import InvalidFaultAddress

        values = self.state.get(node)
        if values is None or not 0 <= index < len(values):
            raise InvalidFaultAddress(f"no registered scalar at ({node}, {index})")
        values[index] = value

    def export_manifest(self) -> list[dict]:
        """Registered-address manifest: one entry per (node, index, name)."""
        out = []
        for node, names in NODE_LAYOUT.items():
            for i, name in enumerate(names):
                out.append({"node": node, "index": i, "name": name,
                            "hardware": NODE_HARDWARE[node]})
        return out

    def manifest_names(self) -> dict[str, list[str]]:
        return {node: list(names) for node, names in NODE_LAYOUT.items()}

    # -- perception

    def tracks(self) -> list[TrackedObject]:
        st = self.state["perception"]
        out = []
        for slot in range(MAX_TRACKS):
            base = _TRACKS_BASE + slot * _TRACK_STRIDE
            if st[base] != 0.0:
                out.append(TrackedObject(
                    track_id=int(st[base + 1]) if math.isfinite(st[base + 1]) else -1,
                    x=st[base + 2], y=st[base + 3], yaw=st[base + 4],
                    speed=st[base + 5],
                    age=int(st[base + 6]) if math.isfinite(st[base + 6]) else 0,
                ))
        return out

    def compensate_ego_motion(self, ego: VehicleState) -> None:
        """Re-express stored tracks in the current ego frame using odometry.

        Without this, the ego's own motion leaks into the track positions and
        finite-difference speed estimates whenever it turns.
        """
        st = self.state["perception"]
        idx = self._index["perception"]
        if st[idx["odom_init"]] != 0.0:
            prev_x = st[idx["odom_x"]]
            prev_y = st[idx["odom_y"]]
            prev_yaw = st[idx["odom_yaw"]]
            dyaw = ego.yaw - prev_yaw
            cos_n, sin_n = math.cos(ego.yaw), math.sin(ego.yaw)
            # Ego displacement expressed in the new ego frame.
            dx_w = ego.x - prev_x
            dy_w = ego.y - prev_y
            tx = dx_w * cos_n + dy_w * sin_n
            ty = -dx_w * sin_n + dy_w * cos_n
            cos_d, sin_d = math.cos(dyaw), math.sin(dyaw)
            for slot in range(MAX_TRACKS):
                base = _TRACKS_BASE + slot * _TRACK_STRIDE
                if st[base] == 0.0:
                    continue
                x, y = st[base + 2], st[base + 3]
                st[base + 2] = x * cos_d + y * sin_d - tx
                st[base + 3] = -x * sin_d + y * cos_d - ty
                st[base + 4] = wrap_pi(st[base + 4] - dyaw)
        st[idx["odom_x"]] = ego.x
        st[idx["odom_y"]] = ego.y
        st[idx["odom_yaw"]] = ego.yaw
        st[idx["odom_speed"]] = ego.speed
        st[idx["odom_init"]] = 1.0

    def perception_step(self, detections: list[Detection] | None, dt: float) -> list[TrackedObject]:
        """Associate detections to track slots (nearest neighbor within gate).

        Matched tracks take the detection pose and a finite-difference speed;
        unmatched tracks age and are deleted past the stale limit; unmatched
        detections spawn new tracks. ``detections=None`` means the input
        frame was lost, so every track ages.
        """
        st = self.state["perception"]
        gate = st[self._index["perception"]["assoc_gate_m"]]
        gate_per_m = st[self._index["perception"]["assoc_gate_per_m"]]
        stale_limit = st[self._index["perception"]["stale_limit"]]
        id_idx = self._index["perception"]["next_track_id"]

        occupied = [slot for slot in range(MAX_TRACKS)
                    if st[_TRACKS_BASE + slot * _TRACK_STRIDE] != 0.0]
        matched: set[int] = set()

        if detections:
            for det in detections:
                det_range = math.hypot(det.x, det.y)
                best_slot, best_dist = -1, gate + gate_per_m * det_range
                for slot in occupied:
                    if slot in matched:
                        continue
                    base = _TRACKS_BASE + slot * _TRACK_STRIDE
                    dist = math.hypot(det.x - st[base + 2], det.y - st[base + 3])
                    if dist <= best_dist:
                        best_slot, best_dist = slot, dist
                if best_slot >= 0:
                    base = _TRACKS_BASE + best_slot * _TRACK_STRIDE
                    elapsed = (st[base + 6] + 1.0) * dt  # (age + 1) update cycles
                    speed = (det.x - st[base + 2]) / elapsed if elapsed > 0 else 0.0
                    st[base + 2] = det.x
                    st[base + 3] = det.y
                    st[base + 4] = det.yaw
                    st[base + 5] = speed
                    st[base + 6] = 0.0
                    matched.add(best_slot)
                else:
                    self._spawn_track(det, id_idx)

        for slot in occupied:
            if slot in matched:
                continue
            base = _TRACKS_BASE + slot * _TRACK_STRIDE
            st[base + 6] += 1.0
            if st[base + 6] > stale_limit:
                st[base] = 0.0
        return self.tracks()

    def _spawn_track(self, det: Detection, id_idx: int) -> None:
        st = self.state["perception"]
        free = -1
        oldest_slot, oldest_age = -1, -1.0
        for slot in range(MAX_TRACKS):
            base = _TRACKS_BASE + slot * _TRACK_STRIDE
            if st[base] == 0.0:
                free = slot
                break
            if st[base + 6] >= oldest_age:
                oldest_slot, oldest_age = slot, st[base + 6]
        slot = free if free >= 0 else oldest_slot
        base = _TRACKS_BASE + slot * _TRACK_STRIDE
        st[base] = 1.0
        st[base + 1] = st[id_idx]
        st[base + 2] = det.x
        st[base + 3] = det.y
        st[base + 4] = det.yaw
        st[base + 5] = 0.0
        st[base + 6] = 0.0
        st[id_idx] = st[id_idx] + 1.0

    # -- planning

    def plan_step(self, ego: VehicleState, ego_s: float, ego_d: float,
                  road: RoadModel, mission: MissionContext) -> Trajectory:
        """Enumerate lateral offsets x speed profiles and return the argmin.

        Candidates that would intersect a predicted track footprint within
        the horizon get infinite collision risk; ties resolve to the first
        candidate in enumeration order.
        """
        st = self.state["planning"]
        w_col = st[_P["w_collision"]]
        w_lane = st[_P["w_lane"]]
        w_prog = st[_P["w_progress"]]
        w_commit = st[_P["w_commit"]]
        horizon = st[_P["horizon_s"]]
        lane_change_time = st[_P["lane_change_time_s"]]
        margin_lon = st[_P["margin_lon_m"]]
        margin_lat = st[_P["margin_lat_m"]]
        t_gap = st[_P["follow_time_gap_s"]]
        min_gap = st[_P["follow_min_gap_m"]]
        prev_offset = st[_P["traj_offset_m"]]

        w = road.lane_width
        m_off = mission.lane_center
        offsets = (m_off - w, m_off - 0.5 * w, m_off, m_off + 0.5 * w, m_off + w)
        road_lo = -0.5 * w + 0.3
        road_hi = (road.lane_count - 1) * w + 0.5 * w - 0.3

        obstacles = self._predicted_obstacles(ego, road)

        best_cost = INFEASIBLE
        best: tuple[float, float] | None = None
        for offset in offsets:
            if offset < road_lo or offset > road_hi:
                continue
            lane_cost = w_lane * abs(offset - m_off)
            # Hysteresis: switching targets mid-maneuver costs extra.
            if abs(offset - prev_offset) > 1e-9:
                lane_cost += w_commit
            for v_target in self._profile_speeds(ego, ego_s, offset, w, obstacles,
                                                 mission.cruise_speed, t_gap, min_gap):
                risk = self._collision_risk(ego, ego_s, ego_d, offset, v_target,
                                            obstacles, horizon, lane_change_time,
                                            margin_lon, margin_lat, w)
                cost = w_col * risk + lane_cost + w_prog * (mission.cruise_speed - v_target) ** 2
                if cost < best_cost:
                    best_cost = cost
                    best = (offset, v_target)

        valid = best is not None and best_cost < INFEASIBLE
        if valid:
            offset, v_target = best
        else:
            offset, v_target = ego_d, 0.0
        st[_P["traj_offset_m"]] = offset
        st[_P["traj_speed_mps"]] = v_target
        st[_P["traj_valid"]] = 1.0 if valid else 0.0
        st[_P["traj_cost"]] = best_cost if valid else INFEASIBLE
        return self.current_trajectory(ego_s, horizon)

    def current_trajectory(self, ego_s: float, horizon: float | None = None) -> Trajectory:
        """The trajectory as control will see it, read back from registered state."""
        st = self.state["planning"]
        if horizon is None:
            horizon = st[_P["horizon_s"]]
        offset = st[_P["traj_offset_m"]]
        v_target = st[_P["traj_speed_mps"]]
        valid = st[_P["traj_valid"]] != 0.0
        profile = ((ego_s, v_target), (ego_s + max(v_target, 1.0) * horizon, v_target))
        return Trajectory(lateral_offset_target=offset, speed_profile=profile,
                          cost=st[_P["traj_cost"]], valid=valid)

    def _predicted_obstacles(self, ego: VehicleState,
                             road: RoadModel) -> list[tuple[float, float, float]]:
        """Tracks as (s, d, absolute road speed), via the ego's own localization."""
        cos_y, sin_y = math.cos(ego.yaw), math.sin(ego.yaw)
        out = []
        for track in self.tracks():
            wx = ego.x + track.x * cos_y - track.y * sin_y
            wy = ego.y + track.x * sin_y + track.y * cos_y
            if not (math.isfinite(wx) and math.isfinite(wy)):
                continue
            s_t, d_t = road.to_frenet(wx, wy)
            v_abs = ego.speed + track.speed
            if not math.isfinite(v_abs):
                v_abs = 0.0
            out.append((s_t, d_t, v_abs))
        return out

    def _profile_speeds(self, ego: VehicleState, ego_s: float, offset: float, lane_width: float,
                        obstacles: list[tuple[float, float, float]], cruise: float,
                        t_gap: float, min_gap: float) -> tuple[float, ...]:
        """Target speeds for the hold / decelerate-to-follow / stop profiles."""
        lead = None
        for s_t, d_t, v_t in obstacles:
            if s_t > ego_s and abs(d_t - offset) < 0.5 * lane_width:
                if lead is None or s_t < lead[0]:
                    lead = (s_t, v_t)
        if lead is None:
            follow = cruise
        else:
            gap = lead[0] - ego_s
            desired = min_gap + t_gap * ego.speed
            follow = min(cruise, max(0.0, lead[1] + 0.3 * (gap - desired)))
        return (cruise, follow, 0.0)

    def _collision_risk(self, ego: VehicleState, ego_s: float, ego_d: float,
                        offset: float, v_target: float,
                        obstacles: list[tuple[float, float, float]],
                        horizon: float, lane_change_time: float,
                        margin_lon: float, margin_lat: float,
                        lane_width: float) -> float:
        """Infinite risk iff the candidate's swept footprint meets an obstacle's.

        The candidate is modeled in two constant-speed phases: a lateral
        transition (no acceleration above the current speed, duration
        proportional to the remaining lateral distance) and then travel at
        the profile speed along the target offset. Conflicts are found by
        exact interval overlap per phase, so knife-edge geometries cannot
        slip between sample points.
        """
        if not obstacles:
            return 0.0
        lon_clear = ego.half_length + TRACK_HALF_LENGTH + margin_lon
        lat_clear = ego.half_width + TRACK_HALF_WIDTH + margin_lat
        v0 = ego.speed
        d_span = offset - ego_d
        if lane_change_time > 0 and abs(d_span) > 1e-9:
            t_lat = min(lane_change_time * abs(d_span) / lane_width, horizon)
        else:
            t_lat = 0.0
        # (start time, end time, ego s at start, ego speed, d at start, d rate)
        phases = []
        if t_lat > 0.0:
            v_trans = min(v_target, v0)
            phases.append((0.0, t_lat, ego_s, v_trans, ego_d, d_span / t_lat))
            s_mid = ego_s + v_trans * t_lat
            if t_lat < horizon:
                phases.append((t_lat, horizon, s_mid, v_target, offset, 0.0))
        else:
            phases.append((0.0, horizon, ego_s, v_target, offset, 0.0))

        for s_t, d_t, v_t in obstacles:
            for ta, tb, s_a, v_e, d_a, d_rate in phases:
                lon = _window_below(s_t + v_t * ta - s_a, v_t - v_e, lon_clear, ta, tb)
                if lon is None:
                    continue
                lat = _window_below(d_t - d_a, -d_rate, lat_clear, ta, tb)
                if lat is None:
                    continue
                if lon[0] < lat[1] and lat[0] < lon[1]:
                    return INFEASIBLE
        return 0.0

    # -- control

    def control_step(self, traj: Trajectory, ego: VehicleState, ego_s: float, ego_d: float,
                     road: RoadModel, dt: float, tick: int) -> ControlCommand:
        """PID speed + PID-plus-heading lateral control against the trajectory.

        An invalid trajectory means no feasible candidate existed: command a
        full brake with centered steering.
        """
        st = self.state["control"]
        if not traj.valid:
            st[_C["out_steer"]] = 0.0
            st[_C["out_accel"]] = -MAX_ACCEL_CMD
            cmd = ControlCommand(0.0, -MAX_ACCEL_CMD, tick)
            self.last_command = cmd
            return cmd

        v_target = _profile_speed_at(traj.speed_profile, ego_s)
        err_v = v_target - ego.speed
        integral_v = st[_C["integral_speed"]] + err_v * dt
        integral_v = min(max(integral_v, -4.0), 4.0)
        st[_C["integral_speed"]] = integral_v
        accel = st[_C["kp_speed"]] * err_v + st[_C["ki_speed"]] * integral_v
        accel = min(max(accel, -MAX_ACCEL_CMD), MAX_ACCEL_CMD)

        err_d = traj.lateral_offset_target - ego_d
        # Integrate only near the track: large transient errors (lane changes)
        # would otherwise wind the integrator up and bias the settle point.
        integral_d = st[_C["integral_lat"]]
        if -1.0 < err_d < 1.0:
            integral_d = min(max(integral_d + err_d * dt, -0.5), 0.5)
            st[_C["integral_lat"]] = integral_d
        d_rate = (ego_d - st[_C["prev_lat_pos"]]) / dt if tick > 0 else 0.0
        st[_C["prev_lat_pos"]] = ego_d

        _, _, road_yaw = road.to_cartesian(min(ego_s, road.total_length), 0.0)
        err_heading = wrap_pi(road_yaw - ego.yaw)
        kappa = road.offset_curvature(min(ego_s, road.total_length), traj.lateral_offset_target)
        steer = (
            st[_C["k_curve_ff"]] * math.atan(ego.wheelbase * kappa)
            + st[_C["kp_lat"]] * err_d
            + st[_C["ki_lat"]] * integral_d
            - st[_C["kd_lat"]] * d_rate
            + st[_C["k_heading"]] * err_heading
        )
        steer = min(max(steer, -MAX_STEER_CMD), MAX_STEER_CMD)

        st[_C["out_steer"]] = steer
        st[_C["out_accel"]] = accel
        cmd = ControlCommand(steer, accel, tick)
        self.last_command = cmd
        return cmd

    # -- scheduling

    def tick(self, tick_index: int, detections: list[Detection] | None, frame_received: bool,
             ego: VehicleState, ego_s: float, ego_d: float, road: RoadModel,
             mission: MissionContext) -> ControlCommand:
        """One 100 Hz cycle: perception/planning on 10 Hz boundaries, control always.

        ``frame_received`` False (a dropped or missing frame) still runs
        perception on its boundary so unmatched tracks age.
        """
        if tick_index % TICKS_PER_CYCLE == 0:
            self.compensate_ego_motion(ego)
            self.perception_step(detections if frame_received else None, PERCEPTION_PERIOD)
            self.plan_step(ego, ego_s, ego_d, road, mission)
        traj = self.current_trajectory(ego_s)
        return self.control_step(traj, ego, ego_s, ego_d, road, CONTROL_PERIOD, tick_index)


def _window_below(g0: float, rate: float, clearance: float,
                  ta: float, tb: float) -> tuple[float, float] | None:
    """Sub-interval of [ta, tb] where |g0 + rate*(t - ta)| < clearance, or None."""
    if rate == 0.0:
        return (ta, tb) if abs(g0) < clearance else None
    t1 = ta + (-clearance - g0) / rate
    t2 = ta + (clearance - g0) / rate
    lo, hi = (t1, t2) if t1 <= t2 else (t2, t1)
    lo = max(lo, ta)
    hi = min(hi, tb)
    return (lo, hi) if lo < hi else None


def _profile_speed_at(profile: tuple[tuple[float, float], ...], s: float) -> float:
    v = profile[0][1]
    for s_i, v_i in profile:
        if s_i <= s:
            v = v_i
        else:
            break
    return v
