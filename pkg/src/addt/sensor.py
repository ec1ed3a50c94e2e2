"""Object-list sensor frames with temporal and spatial (calibration) faults.

The sensor is rigidly mounted on the ego body; its actual extrinsics may
differ from the nominal calibration the pipeline uses to invert the
transform, which is exactly how miscalibration corrupts perception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .road import wrap_pi
from .world import WorldState


class DroppedFrame(Exception):
    """Raised when a dropped frame is asked for its detections."""


@dataclass(frozen=True)
class Extrinsics:
    """Sensor-to-body transform: translation plus Z-Y-X (yaw, pitch, roll) rotation."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def rotation(self) -> np.ndarray:
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        cr, sr = math.cos(self.roll), math.sin(self.roll)
        rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
        rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
        return rz @ ry @ rx

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])


IDENTITY_EXTRINSICS = Extrinsics()


@dataclass(frozen=True)
class SensorConfig:
    """Object-list sensor modeled on a multi-camera surround BEV rig.

    The default field of view is the full circle; narrower single-camera
    setups are expressed by shrinking ``fov_half_angle``.
    """

    rate_hz: float = 10.0
    fov_half_angle: float = math.pi
    max_range: float = 120.0
    position_noise_sigma: float = 0.0
    yaw_noise_sigma: float = 0.0
    # Delays beyond this are treated as out-of-order and the frame is lost.
    out_of_order_threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.rate_hz <= 0 or self.max_range <= 0:
            raise ValueError("rate and max_range must be > 0")
        if self.position_noise_sigma < 0 or self.yaw_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class Detection:
    obj_id: str
    x: float
    y: float
    yaw: float
    range: float


@dataclass(frozen=True)
class SensorFrame:
    seq: int
    timestamp: float
    dropped: bool
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class TemporalFaultSpec:
    drop_rate: float = 0.0
    delay_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")
        if self.delay_sigma < 0:
            raise ValueError("delay_sigma must be >= 0")


@dataclass(frozen=True)
class SpatialFaultSpec:
    translation_sigma: float = 0.0
    rotation_sigma: float = 0.0
    fixed_translation: tuple[float, float, float] | None = None
    fixed_rotation: tuple[float, float, float] | None = None  # (yaw, pitch, roll)

    def __post_init__(self) -> None:
        if self.translation_sigma < 0 or self.rotation_sigma < 0:
            raise ValueError("sigmas must be >= 0")


def agents_in_ego_frame(world: WorldState) -> list[tuple[str, float, float, float]]:
    """Ground-truth (id, x, y, yaw) of every traffic agent in the ego body frame."""
    ego = world.ego
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    out = []
    for agent in world.agents:
        dx = agent.state.x - ego.x
        dy = agent.state.y - ego.y
        out.append((
            agent.agent_id,
            dx * c + dy * s,
            -dx * s + dy * c,
            wrap_pi(agent.state.yaw - ego.yaw),
        ))
    return out


def sample_frame(
    world: WorldState,
    actual: Extrinsics,
    cfg: SensorConfig,
    seq: int,
    rng: np.random.Generator,
) -> SensorFrame:
    """Observe the world through the actual (possibly shifted) extrinsics."""
    rot_t = actual.rotation().T
    trans = actual.translation()
    detections = []
    for obj_id, ex, ey, eyaw in agents_in_ego_frame(world):
        p_sensor = rot_t @ (np.array([ex, ey, 0.0]) - trans)
        sx, sy = float(p_sensor[0]), float(p_sensor[1])
        true_range = math.hypot(sx, sy)
        if true_range > cfg.max_range:
            continue
        if abs(math.atan2(sy, sx)) > cfg.fov_half_angle:
            continue
        syaw = wrap_pi(eyaw - actual.yaw)
        if cfg.position_noise_sigma > 0.0:
            sx += cfg.position_noise_sigma * rng.standard_normal()
            sy += cfg.position_noise_sigma * rng.standard_normal()
        if cfg.yaw_noise_sigma > 0.0:
            syaw = wrap_pi(syaw + cfg.yaw_noise_sigma * rng.standard_normal())
        detections.append(Detection(
            obj_id=obj_id, x=sx, y=sy, yaw=syaw,
            range=min(math.hypot(sx, sy), cfg.max_range),
        ))
    return SensorFrame(seq=seq, timestamp=seq / cfg.rate_hz, dropped=False,
                       detections=tuple(detections))


def perturb_extrinsics(
    nominal: Extrinsics,
    spec: SpatialFaultSpec,
    rng: np.random.Generator,
) -> Extrinsics:
    """Shift the true mounting away from the calibrated one.

    Fixed offsets are applied exactly when given; otherwise each component
    gets an independent Gaussian perturbation. Angles are renormalized to
    (-pi, pi].
    """
    if spec.fixed_translation is not None or spec.fixed_rotation is not None:
        dtx, dty, dtz = spec.fixed_translation or (0.0, 0.0, 0.0)
        dyaw, dpitch, droll = spec.fixed_rotation or (0.0, 0.0, 0.0)
    else:
        dtx = dty = dtz = dyaw = dpitch = droll = 0.0
        if spec.translation_sigma > 0.0:
            dtx, dty, dtz = (spec.translation_sigma * rng.standard_normal() for _ in range(3))
        if spec.rotation_sigma > 0.0:
            dyaw, dpitch, droll = (spec.rotation_sigma * rng.standard_normal() for _ in range(3))
    return Extrinsics(
        tx=nominal.tx + dtx, ty=nominal.ty + dty, tz=nominal.tz + dtz,
        yaw=wrap_pi(nominal.yaw + dyaw),
        pitch=wrap_pi(nominal.pitch + dpitch),
        roll=wrap_pi(nominal.roll + droll),
    )


def apply_temporal_fault(
    frame: SensorFrame,
    spec: TemporalFaultSpec,
    cfg: SensorConfig,
    rng: np.random.Generator,
) -> SensorFrame:
    """Randomly delay the frame; delays beyond the out-of-order threshold drop it."""
    if frame.dropped:
        raise ValueError("frame already carries a temporal fault")
    if spec.drop_rate > 0.0 and rng.random() < spec.drop_rate:
        return replace(frame, timestamp=frame.timestamp + 2.0 * cfg.out_of_order_threshold,
                       dropped=True, detections=())
    if spec.delay_sigma > 0.0:
        jitter = abs(spec.delay_sigma * rng.standard_normal())
        dropped = jitter > cfg.out_of_order_threshold
        return replace(frame, timestamp=frame.timestamp + jitter, dropped=dropped,
                       detections=() if dropped else frame.detections)
    return frame


def to_ego_frame(frame: SensorFrame, nominal: Extrinsics) -> list[Detection]:
    """Map detections back to the ego frame using the *nominal* calibration."""
    if frame.dropped:
        raise DroppedFrame(f"frame seq={frame.seq} was dropped")
    rot = nominal.rotation()
    trans = nominal.translation()
    out = []
    for det in frame.detections:
        p_ego = rot @ np.array([det.x, det.y, 0.0]) + trans
        out.append(Detection(
            obj_id=det.obj_id,
            x=float(p_ego[0]),
            y=float(p_ego[1]),
            yaw=wrap_pi(det.yaw + nominal.yaw),
            range=det.range,
        ))
    return out
