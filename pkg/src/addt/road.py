"""Parametric road model: a chain of straight and constant-curvature segments.

The reference line is the centerline of lane 0, starting at the origin and
heading +x. Lateral offset d is positive to the left of the direction of
travel; lane i is centered at d = i * lane_width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TAU = 2.0 * math.pi


def wrap_pi(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(angle, TAU)
    if a > math.pi:
        a -= TAU
    elif a <= -math.pi:
        a += TAU
    return a


@dataclass(frozen=True)
class _SegmentFrame:
    s0: float
    x0: float
    y0: float
    heading0: float
    length: float
    curvature: float


class RoadModel:
    def __init__(
        self,
        lane_count: int,
        lane_width: float,
        segments: tuple[tuple[float, float], ...],
    ):
        if lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if lane_width <= 0:
            raise ValueError("lane_width must be > 0")
        if not segments or sum(length for length, _ in segments) <= 0:
            raise ValueError("road must have positive total length")
        for _, curvature in segments:
            if abs(curvature) * lane_width >= 1.0:
                raise ValueError("curvature too large for lane width (inner lane self-intersects)")
        self.lane_count = lane_count
        self.lane_width = lane_width
        self.segments = tuple((float(l), float(k)) for l, k in segments)
        self._frames = self._build_frames()
        self.total_length = self._frames[-1].s0 + self._frames[-1].length

    def _build_frames(self) -> list[_SegmentFrame]:
        frames = []
        s0, x, y, heading = 0.0, 0.0, 0.0, 0.0
        for length, curvature in self.segments:
            frames.append(_SegmentFrame(s0, x, y, heading, length, curvature))
            if curvature == 0.0:
                x += length * math.cos(heading)
                y += length * math.sin(heading)
            else:
                # Advance along the arc: center is 1/k to the left of the heading.
                r = 1.0 / curvature
                cx = x - r * math.sin(heading)
                cy = y + r * math.cos(heading)
                sweep = curvature * length
                heading_end = heading + sweep
                x = cx + r * math.sin(heading_end)
                y = cy - r * math.cos(heading_end)
                heading = heading_end
            s0 += length
        return frames

    def lane_center(self, lane: int) -> float:
        return lane * self.lane_width

    def nearest_lane(self, d: float) -> int:
        lane = int(round(d / self.lane_width))
        return min(max(lane, 0), self.lane_count - 1)

    def curvature_at(self, s: float) -> float:
        return self._frame_for(s).curvature

    def _frame_for(self, s: float) -> _SegmentFrame:
        frames = self._frames
        for f in frames:
            if s <= f.s0 + f.length:
                return f
        return frames[-1]

    def to_cartesian(self, s: float, d: float = 0.0) -> tuple[float, float, float]:
        """Exact (x, y, tangent yaw) of the point at arc length s, lateral offset d."""
        if s < -1e-9 or s > self.total_length + 1e-9:
            raise ValueError(f"s={s} outside road [0, {self.total_length}]")
        s = min(max(s, 0.0), self.total_length)
        f = self._frame_for(s)
        t = s - f.s0
        if f.curvature == 0.0:
            ch, sh = math.cos(f.heading0), math.sin(f.heading0)
            x = f.x0 + t * ch
            y = f.y0 + t * sh
            yaw = f.heading0
        else:
            r = 1.0 / f.curvature
            cx = f.x0 - r * math.sin(f.heading0)
            cy = f.y0 + r * math.cos(f.heading0)
            yaw = f.heading0 + f.curvature * t
            x = cx + r * math.sin(yaw)
            y = cy - r * math.cos(yaw)
        # Offset to the left of the local tangent.
        return (x - d * math.sin(yaw), y + d * math.cos(yaw), wrap_pi(yaw))

    def to_frenet(self, x: float, y: float) -> tuple[float, float]:
        """Project a point onto the reference line, returning (s, d).

        Each segment yields one candidate (clamped to the segment's range);
        the candidate whose foot point is nearest in Euclidean distance wins,
        which is exact for points inside any segment's lateral tube.
        """
        best: tuple[float, float, float] | None = None  # (dist, s, d)
        for f in self._frames:
            cand = self._project_segment(f, x, y)
            if best is None or cand[0] < best[0]:
                best = cand
        assert best is not None
        return best[1], best[2]

    def _project_segment(self, f: _SegmentFrame, x: float, y: float) -> tuple[float, float, float]:
        if f.curvature == 0.0:
            ch, sh = math.cos(f.heading0), math.sin(f.heading0)
            dx, dy = x - f.x0, y - f.y0
            t = dx * ch + dy * sh
            t = min(max(t, 0.0), f.length)
            fx = f.x0 + t * ch
            fy = f.y0 + t * sh
            # Signed lateral: positive to the left of the tangent.
            d = -(x - fx) * sh + (y - fy) * ch
            dist = math.hypot(x - fx, y - fy)
            return (dist, f.s0 + t, d)
        r = 1.0 / f.curvature
        cx = f.x0 - r * math.sin(f.heading0)
        cy = f.y0 + r * math.cos(f.heading0)
        # Directed sweep angle from the segment start, in the direction of travel.
        phi0 = math.atan2(f.y0 - cy, f.x0 - cx)
        phi = math.atan2(y - cy, x - cx)
        sweep = phi - phi0
        if f.curvature > 0:
            sweep = sweep % TAU
        else:
            sweep = -((-sweep) % TAU)
        t = sweep / f.curvature
        max_sweep = abs(f.curvature) * f.length
        # Points just "behind" the start wrap to near a full circle; snap them back.
        if abs(sweep) > max_sweep:
            overshoot = abs(sweep) - max_sweep
            wrap_back = TAU - abs(sweep)
            t = f.length if overshoot <= wrap_back else 0.0
        t = min(max(t, 0.0), f.length)
        yaw = f.heading0 + f.curvature * t
        fx = cx + r * math.sin(yaw)
        fy = cy - r * math.cos(yaw)
        d = -(x - fx) * math.sin(yaw) + (y - fy) * math.cos(yaw)
        dist = math.hypot(x - fx, y - fy)
        return (dist, f.s0 + t, d)

    def offset_curvature(self, s: float, d: float) -> float:
        """Curvature of the lane-offset curve at (s, d); exact for arcs."""
        k = self.curvature_at(s)
        if k == 0.0:
            return 0.0
        return k / (1.0 - d * k)
