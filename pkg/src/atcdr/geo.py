"""Local coordinate frame, flight kinematics and flight plans.

Unit conventions used throughout the package: horizontal positions and
distances in meters (east/north of the frame origin), altitudes and vertical
distances in feet, horizontal speed in m/s, vertical speed in ft/s, bearings
in radians clockwise from North, 1 NM = 1852 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

EARTH_RADIUS_M = 6371000.0
M_PER_NM = 1852.0
FLIGHT_LEVEL_FT = 1000.0  # one flight level step
TWO_PI = 2.0 * math.pi


def wrap_bearing(chi: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    return chi % TWO_PI


def wrap_signed(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = angle % TWO_PI
    if a > math.pi:
        a -= TWO_PI
    return a


def bearing(dx: float, dy: float) -> float:
    """Bearing of the vector (dx east, dy north), clockwise from North."""
    return wrap_bearing(math.atan2(dx, dy))


@dataclass(frozen=True)
class LocalFrame:
    """Flat-earth equirectangular frame centered on an AoR reference point."""

    origin_lat: float  # degrees
    origin_lon: float  # degrees

    def project(self, lat: float, lon: float) -> tuple[float, float]:
        """(lat, lon) degrees -> (x east, y north) meters."""
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValueError(f"lat/lon out of range: ({lat}, {lon})")
        k = math.pi / 180.0 * EARTH_RADIUS_M
        x = (lon - self.origin_lon) * k * math.cos(math.radians(self.origin_lat))
        y = (lat - self.origin_lat) * k
        return x, y

    def unproject(self, x: float, y: float) -> tuple[float, float]:
        """(x, y) meters -> (lat, lon) degrees. Inverse of :meth:`project`."""
        k = math.pi / 180.0 * EARTH_RADIUS_M
        lat = self.origin_lat + y / k
        lon = self.origin_lon + x / (k * math.cos(math.radians(self.origin_lat)))
        return lat, lon


@dataclass(frozen=True)
class FlightState:
    """Kinematic truth of a single flight at time t."""

    flight_id: str
    x: float  # m east
    y: float  # m north
    alt: float  # ft
    chi: float  # rad, clockwise from North
    h_speed: float  # m/s, >= 0
    v_speed: float  # ft/s
    t: float  # s since scenario start

    def __post_init__(self):
        if self.h_speed < 0:
            raise ValueError(f"{self.flight_id}: h_speed must be >= 0")
        if self.alt < 0:
            raise ValueError(f"{self.flight_id}: alt must be >= 0")
        object.__setattr__(self, "chi", wrap_bearing(self.chi))

    @property
    def vx(self) -> float:
        return self.h_speed * math.sin(self.chi)

    @property
    def vy(self) -> float:
        return self.h_speed * math.cos(self.chi)


@dataclass(frozen=True)
class Waypoint:
    name: str
    x: float  # m
    y: float  # m
    alt: float  # ft, filed altitude
    eto: float  # s, estimated time over


class PlanPosition(NamedTuple):
    x: float
    y: float
    alt: float
    chi: float
    clamped: bool  # True when t fell outside [first eto, last eto]


@dataclass(frozen=True)
class FlightPlan:
    """Ordered waypoint list with the AoR exit point marked."""

    waypoints: tuple[Waypoint, ...]
    exit_index: int

    def __post_init__(self):
        wps = tuple(self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if len(wps) < 2:
            raise ValueError("flight plan needs at least 2 waypoints")
        if not (0 <= self.exit_index < len(wps)):
            raise ValueError(f"exit_index {self.exit_index} out of range")
        for a, b in zip(wps, wps[1:]):
            if b.eto < a.eto:
                raise ValueError(f"eto decreases at waypoint {b.name}")
            if math.hypot(b.x - a.x, b.y - a.y) == 0.0:
                raise ValueError(f"co-located consecutive waypoints {a.name}/{b.name}")

    @property
    def exit_point(self) -> Waypoint:
        return self.waypoints[self.exit_index]

    def segment_bearing(self, k: int) -> float:
        """Bearing of the segment from waypoint k to k+1."""
        a, b = self.waypoints[k], self.waypoints[k + 1]
        return bearing(b.x - a.x, b.y - a.y)


def plan_position_at(plan: FlightPlan, t: float) -> PlanPosition:
    """Position along the plan polyline at time t, interpolating by eto.

    chi is the bearing of the active segment (the final segment's bearing at
    and beyond the last waypoint). Out-of-range t clamps to the nearest
    endpoint and sets the clamped flag.
    """
    wps = plan.waypoints
    if t <= wps[0].eto:
        return PlanPosition(wps[0].x, wps[0].y, wps[0].alt,
                            plan.segment_bearing(0), t < wps[0].eto)
    if t >= wps[-1].eto:
        return PlanPosition(wps[-1].x, wps[-1].y, wps[-1].alt,
                            plan.segment_bearing(len(wps) - 2), t > wps[-1].eto)
    for k in range(len(wps) - 1):
        a, b = wps[k], wps[k + 1]
        if a.eto <= t <= b.eto:
            if b.eto == a.eto:  # zero-duration hop: sit on b
                return PlanPosition(b.x, b.y, b.alt, plan.segment_bearing(k), False)
            f = (t - a.eto) / (b.eto - a.eto)
            return PlanPosition(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                                a.alt + f * (b.alt - a.alt),
                                plan.segment_bearing(k), False)
    raise AssertionError("unreachable: t inside eto range but no segment found")


def path_length_nm(points: Sequence[tuple[float, float]]) -> float:
    """Total Euclidean length of a 2D polyline, in nautical miles."""
    if len(points) < 2:
        raise ValueError(f"need at least 2 points for a track, got {len(points)}")
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total / M_PER_NM


def point_segment_distance(px: float, py: float,
                           ax: float, ay: float,
                           bx: float, by: float) -> tuple[float, float]:
    """Distance from point p to segment ab and the parameter of the foot.

    Returns (distance, s) with s in [0, 1] the position of the closest point
    along ab.
    """
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay), 0.0
    s = ((px - ax) * dx + (py - ay) * dy) / seg2
    s = min(1.0, max(0.0, s))
    return math.hypot(px - (ax + s * dx), py - (ay + s * dy)), s


def closest_point_on_polyline(px: float, py: float,
                              pts: Sequence[tuple[float, float]]) -> tuple[float, int, float]:
    """Closest approach of point p to a polyline.

    Returns (distance, segment index, parameter along that segment).
    """
    best = (math.inf, 0, 0.0)
    for k in range(len(pts) - 1):
        (ax, ay), (bx, by) = pts[k], pts[k + 1]
        d, s = point_segment_distance(px, py, ax, ay, bx, by)
        if d < best[0]:
            best = (d, k, s)
    return best


def segments_intersect(p0: tuple[float, float], p1: tuple[float, float],
                       q0: tuple[float, float], q1: tuple[float, float]) -> bool:
    """True when 2D segments p0p1 and q0q1 intersect (endpoints included)."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) \
            and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and on_seg(q0, q1, p0):
        return True
    if d2 == 0 and on_seg(q0, q1, p1):
        return True
    if d3 == 0 and on_seg(p0, p1, q0):
        return True
    if d4 == 0 and on_seg(p0, p1, q1):
        return True
    return False


def line_intersection(p: tuple[float, float], vp: tuple[float, float],
                      q: tuple[float, float], vq: tuple[float, float]):
    """Intersection parameters of two parametric lines p+s*vp, q+u*vq.

    Returns (s, u) or None for (near-)parallel directions.
    """
    denom = vp[0] * vq[1] - vp[1] * vq[0]
    if abs(denom) < 1e-12:
        return None
    rx, ry = q[0] - p[0], q[1] - p[1]
    s = (rx * vq[1] - ry * vq[0]) / denom
    u = (rx * vp[1] - ry * vp[0]) / denom
    return s, u
