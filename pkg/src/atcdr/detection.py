"""Nominal trajectory projection, conformance, CPA geometry and conflict
classification.

A *loss of separation* is a simultaneous violation of the horizontal and
vertical separation minima at the current time; a *conflict* is a predicted
dual violation within the projection horizon; an *alert* is a conflict whose
CPA lies within a short horizon. Projection is nominal: constant current
speeds along either the flight plan or the current track, the choice made by
the conformance test.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geo import (FlightPlan, FlightState, bearing, line_intersection,
                  point_segment_distance, segments_intersect, wrap_signed,
                  FLIGHT_LEVEL_FT)

_SCAN_DT = 1.0  # s, resolution of the dual-violation / vCPA neighborhood scans
_VCPA_WINDOW = 60.0  # s, half-width of the horizontal search around the vCPA


class EventClass(str, Enum):
    LOSS = "loss"
    ALERT = "alert"
    CONFLICT = "conflict"


class Basis(str, Enum):
    PLAN = "plan"
    TRACK = "track"


class VerticalPhase(str, Enum):
    LEVEL = "level"
    CLIMB = "climb"
    DESCEND = "descend"


@dataclass(frozen=True)
class SeparationParams:
    h_min: float = 5.0 * 1852.0  # m (5 NM)
    v_min_low: float = 1000.0  # ft, below the band boundary
    v_min_high: float = 2000.0  # ft, at/above the band boundary
    rvsm: bool = False  # True moves the band boundary from FL290 to FL410
    alert_horizon: float = 10.0  # s
    d_h: float = 2000.0  # m, conformance distance threshold
    c_h: float = math.radians(20.0)  # rad, conformance course threshold
    t_h_level: float = 600.0  # s, projection horizon for level flights

    def __post_init__(self):
        for name in ("h_min", "v_min_low", "v_min_high", "alert_horizon",
                     "d_h", "c_h", "t_h_level"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def band_boundary_ft(self) -> float:
        return 41000.0 if self.rvsm else 29000.0

    def v_min_for(self, alt_i: float, alt_j: float) -> float:
        """Vertical minimum chosen by the lower aircraft's level."""
        return self.v_min_low if min(alt_i, alt_j) < self.band_boundary_ft \
            else self.v_min_high


@dataclass(frozen=True)
class ProjectionSegment:
    p0: tuple[float, float, float, float]  # (x m, y m, alt ft, t s)
    p1: tuple[float, float, float, float]
    basis: Basis

    def __post_init__(self):
        if self.p1[3] <= self.p0[3]:
            raise ValueError("projection segment must advance in time")


@dataclass(frozen=True)
class CpaGeometry:
    t_cpa: float  # s from now; negative when the CPA lies in the past
    d_h_cpa: float  # m
    d_v_cpa: float  # ft
    a_ij: float  # rad, intersection angle between the current courses
    b_ij: float  # rad, bearing of i seen from j at the CPA, relative to j's course
    d_cp: float  # m, separation when the first flight passes the crossing point
    t_cp: float  # s from now; inf with d_cp when courses never cross ahead
    first_conflict_t: float | None  # s from now
    last_conflict_t: float | None  # s from now
    d_h_now: float  # m
    d_v_now: float  # ft


@dataclass(frozen=True)
class ConflictEvent:
    i: str
    j: str
    event_class: EventClass
    geometry: CpaGeometry
    basis_i: Basis
    basis_j: Basis
    climb_descend_i: VerticalPhase
    climb_descend_j: VerticalPhase

    @property
    def pair(self) -> tuple[str, str]:
        return (self.i, self.j) if self.i <= self.j else (self.j, self.i)

    def involves(self, flight_id: str) -> bool:
        return flight_id in (self.i, self.j)

    def other(self, flight_id: str) -> str:
        return self.j if flight_id == self.i else self.i


def vertical_phase(state: FlightState) -> VerticalPhase:
    if state.v_speed > 0:
        return VerticalPhase.CLIMB
    if state.v_speed < 0:
        return VerticalPhase.DESCEND
    return VerticalPhase.LEVEL


def horizon(state: FlightState, params: SeparationParams) -> float:
    """Projection horizon: time to the next flight level when climbing or
    descending, else the fixed level-flight horizon."""
    if state.v_speed == 0.0:
        return params.t_h_level
    rem = state.alt % FLIGHT_LEVEL_FT
    if state.v_speed > 0:
        delta = FLIGHT_LEVEL_FT - rem if rem > 0 else FLIGHT_LEVEL_FT
    else:
        delta = rem if rem > 0 else FLIGHT_LEVEL_FT
    return delta / abs(state.v_speed)


def conformance(state: FlightState, plan: FlightPlan,
                params: SeparationParams) -> Basis:
    """Plan when the flight is close and aligned to its plan, or when its
    straight-ahead projection crosses the plan's horizontal profile."""
    pts = [(w.x, w.y) for w in plan.waypoints]
    best_d, best_k = math.inf, 0
    for k in range(len(pts) - 1):
        d, _ = point_segment_distance(state.x, state.y, *pts[k], *pts[k + 1])
        if d < best_d:
            best_d, best_k = d, k
    if best_d < params.d_h:
        course_diff = abs(wrap_signed(state.chi - plan.segment_bearing(best_k)))
        if course_diff < params.c_h:
            return Basis.PLAN
    t_h = horizon(state, params)
    track_end = (state.x + state.vx * t_h, state.y + state.vy * t_h)
    for k in range(len(pts) - 1):
        if segments_intersect((state.x, state.y), track_end, pts[k], pts[k + 1]):
            return Basis.PLAN
    return Basis.TRACK


def project_trajectory(state: FlightState, plan: FlightPlan,
                       params: SeparationParams) -> list[ProjectionSegment]:
    """Nominal projection for horizon(state) seconds at current speeds.

    Plan basis follows the plan polyline from the closest plan point; track
    basis is a single straight segment along the current course. The vertical
    profile applies the current vertical speed in both cases.
    """
    t_h = horizon(state, params)
    basis = conformance(state, plan, params)
    t0 = state.t

    def alt_at(dt: float) -> float:
        return state.alt + state.v_speed * dt

    if state.h_speed == 0.0:
        # Stationary in the horizontal plane (degenerate but legal).
        dt = t_h if (state.v_speed != 0.0 or t_h > 0) else params.t_h_level
        return [ProjectionSegment((state.x, state.y, state.alt, t0),
                                  (state.x, state.y, alt_at(dt), t0 + dt),
                                  basis)]

    if basis is Basis.TRACK:
        return [ProjectionSegment(
            (state.x, state.y, state.alt, t0),
            (state.x + state.vx * t_h, state.y + state.vy * t_h,
             alt_at(t_h), t0 + t_h), basis)]

    # Plan basis: start from the closest point of the plan polyline and walk
    # it at the current ground speed; extrapolate along the final bearing if
    # the plan runs out before the horizon.
    pts = [(w.x, w.y) for w in plan.waypoints]
    best = (math.inf, 0, 0.0)
    for k in range(len(pts) - 1):
        d, s = point_segment_distance(state.x, state.y, *pts[k], *pts[k + 1])
        if d < best[0]:
            best = (d, k, s)
    _, k0, s0 = best
    ax, ay = pts[k0]
    bx, by = pts[k0 + 1]
    cur = (ax + s0 * (bx - ax), ay + s0 * (by - ay))

    segs: list[ProjectionSegment] = []
    t_done = 0.0
    node = k0 + 1
    while t_done < t_h - 1e-9 and node < len(pts):
        tx, ty = pts[node]
        leg = math.hypot(tx - cur[0], ty - cur[1])
        if leg < 1e-9:
            node += 1
            continue
        dt = leg / state.h_speed
        if t_done + dt > t_h:  # trim the final leg to the horizon
            f = (t_h - t_done) / dt
            tx = cur[0] + f * (tx - cur[0])
            ty = cur[1] + f * (ty - cur[1])
            dt = t_h - t_done
        segs.append(ProjectionSegment(
            (cur[0], cur[1], alt_at(t_done), t0 + t_done),
            (tx, ty, alt_at(t_done + dt), t0 + t_done + dt), basis))
        cur = (tx, ty)
        t_done += dt
        node += 1
    if t_done < t_h - 1e-9 or not segs:
        # plan exhausted before the horizon: extrapolate the final bearing
        chi_last = plan.segment_bearing(len(pts) - 2)
        remaining = (t_h - t_done) * state.h_speed
        segs.append(ProjectionSegment(
            (cur[0], cur[1], alt_at(t_done), t0 + t_done),
            (cur[0] + remaining * math.sin(chi_last),
             cur[1] + remaining * math.cos(chi_last),
             alt_at(t_h), t0 + t_h), basis))
    return segs


def _seg_velocity(seg: ProjectionSegment) -> tuple[float, float, float]:
    dt = seg.p1[3] - seg.p0[3]
    return ((seg.p1[0] - seg.p0[0]) / dt, (seg.p1[1] - seg.p0[1]) / dt,
            (seg.p1[2] - seg.p0[2]) / dt)


def cpa_horizontal(seg_i: ProjectionSegment,
                   seg_j: ProjectionSegment) -> tuple[float, float]:
    """Constant-velocity horizontal CPA over the temporal overlap of two
    segments: t = -(dp . dv)/|dv|^2, clamped to the overlap window.

    Returns (t_cpa, d_h_cpa) with t_cpa in absolute scenario time.
    """
    t0 = max(seg_i.p0[3], seg_j.p0[3])
    t1 = min(seg_i.p1[3], seg_j.p1[3])
    if t1 < t0:
        raise ValueError("segments do not overlap in time")
    vix, viy, _ = _seg_velocity(seg_i)
    vjx, vjy, _ = _seg_velocity(seg_j)
    xi = seg_i.p0[0] + vix * (t0 - seg_i.p0[3])
    yi = seg_i.p0[1] + viy * (t0 - seg_i.p0[3])
    xj = seg_j.p0[0] + vjx * (t0 - seg_j.p0[3])
    yj = seg_j.p0[1] + vjy * (t0 - seg_j.p0[3])
    dpx, dpy = xi - xj, yi - yj
    dvx, dvy = vix - vjx, viy - vjy
    dv2 = dvx * dvx + dvy * dvy
    if dv2 < 1e-12:
        return t0, math.hypot(dpx, dpy)
    t_rel = -(dpx * dvx + dpy * dvy) / dv2
    t_rel = min(max(t_rel, 0.0), t1 - t0)
    return t0 + t_rel, math.hypot(dpx + dvx * t_rel, dpy + dvy * t_rel)


class _Track:
    """Sampled view of a projection: piecewise-linear position over time,
    with linear extrapolation outside the projected window."""

    def __init__(self, segs: list[ProjectionSegment]):
        knots_t = [segs[0].p0[3]]
        knots_x = [segs[0].p0[0]]
        knots_y = [segs[0].p0[1]]
        knots_a = [segs[0].p0[2]]
        for s in segs:
            knots_t.append(s.p1[3])
            knots_x.append(s.p1[0])
            knots_y.append(s.p1[1])
            knots_a.append(s.p1[2])
        self.t = np.asarray(knots_t)
        self.x = np.asarray(knots_x)
        self.y = np.asarray(knots_y)
        self.alt = np.asarray(knots_a)
        self.v0 = _seg_velocity(segs[0])
        self.v1 = _seg_velocity(segs[-1])
        self.segs = segs

    def sample(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.interp(ts, self.t, self.x),
                np.interp(ts, self.t, self.y),
                np.interp(ts, self.t, self.alt))

    def at(self, t: float) -> tuple[float, float, float]:
        if t < self.t[0]:
            dt = t - self.t[0]
            return (self.x[0] + self.v0[0] * dt, self.y[0] + self.v0[1] * dt,
                    self.alt[0] + self.v0[2] * dt)
        if t > self.t[-1]:
            dt = t - self.t[-1]
            return (self.x[-1] + self.v1[0] * dt, self.y[-1] + self.v1[1] * dt,
                    self.alt[-1] + self.v1[2] * dt)
        k = max(0, bisect.bisect_right(self.t, t) - 1)
        k = min(k, len(self.segs))
        if k == len(self.segs):
            k -= 1
        tk = self.t[k]
        dt = t - tk
        seg = self.segs[min(k, len(self.segs) - 1)]
        vx, vy, va = _seg_velocity(seg)
        return (self.x[k] + vx * dt, self.y[k] + vy * dt, self.alt[k] + va * dt)

    def course_at(self, t: float) -> float:
        if t <= self.t[0]:
            v = self.v0
        elif t >= self.t[-1]:
            v = self.v1
        else:
            k = max(0, bisect.bisect_right(self.t, t) - 1)
            v = _seg_velocity(self.segs[min(k, len(self.segs) - 1)])
        return bearing(v[0], v[1])


def _global_horizontal_cpa(tr_i: _Track, tr_j: _Track,
                           t_start: float, t_end: float) -> tuple[float, float, float]:
    """Global horizontal CPA over overlapping segment pairs within a window.

    Returns (t_cpa, d_h_cpa, unclamped_initial_t): the third value is the
    unclamped minimizer of the initial segment pair, used to report past CPAs.
    """
    best_t, best_d = t_start, math.inf
    unclamped_t0 = None
    first = True
    for si in tr_i.segs:
        for sj in tr_j.segs:
            t0 = max(si.p0[3], sj.p0[3], t_start)
            t1 = min(si.p1[3], sj.p1[3], t_end)
            if t1 < t0:
                continue
            vix, viy, _ = _seg_velocity(si)
            vjx, vjy, _ = _seg_velocity(sj)
            xi = si.p0[0] + vix * (t0 - si.p0[3])
            yi = si.p0[1] + viy * (t0 - si.p0[3])
            xj = sj.p0[0] + vjx * (t0 - sj.p0[3])
            yj = sj.p0[1] + vjy * (t0 - sj.p0[3])
            dpx, dpy = xi - xj, yi - yj
            dvx, dvy = vix - vjx, viy - vjy
            dv2 = dvx * dvx + dvy * dvy
            if dv2 < 1e-12:
                t_rel_raw = 0.0
            else:
                t_rel_raw = -(dpx * dvx + dpy * dvy) / dv2
            if first:
                unclamped_t0 = t0 + t_rel_raw
                first = False
            t_rel = min(max(t_rel_raw, 0.0), t1 - t0)
            d = math.hypot(dpx + dvx * t_rel, dpy + dvy * t_rel)
            if d < best_d:
                best_d, best_t = d, t0 + t_rel
    return best_t, best_d, unclamped_t0 if unclamped_t0 is not None else t_start


def _crossing_point(i_state: FlightState, j_state: FlightState) -> tuple[float, float]:
    """(d_cp, t_cp) for the current course lines; (inf, inf) when the courses
    are parallel or the crossing point is not ahead of both flights."""
    res = line_intersection((i_state.x, i_state.y), (i_state.vx, i_state.vy),
                            (j_state.x, j_state.y), (j_state.vx, j_state.vy))
    if res is None:
        return math.inf, math.inf
    s, u = res  # seconds for i and j to reach the crossing point
    if s <= 0.0 or u <= 0.0:
        return math.inf, math.inf
    t_cp = min(s, u)
    xi = i_state.x + i_state.vx * t_cp
    yi = i_state.y + i_state.vy * t_cp
    xj = j_state.x + j_state.vx * t_cp
    yj = j_state.y + j_state.vy * t_cp
    return math.hypot(xi - xj, yi - yj), t_cp


def detect_pair(i_state: FlightState, i_plan: FlightPlan,
                j_state: FlightState, j_plan: FlightPlan,
                params: SeparationParams) -> ConflictEvent | None:
    """Pairwise detection over the nominal projections.

    Case (a), both level: when the (constant) vertical separation is below
    the minimum, the horizontal CPA over temporally intersecting projection
    segments decides. Case (b), someone climbing/descending: the vertical CPA
    is found first and the neighborhood around it is scanned for a point of
    dual violation.
    """
    segs_i = project_trajectory(i_state, i_plan, params)
    segs_j = project_trajectory(j_state, j_plan, params)
    tr_i, tr_j = _Track(segs_i), _Track(segs_j)
    now = max(segs_i[0].p0[3], segs_j[0].p0[3])
    t_end = min(segs_i[-1].p1[3], segs_j[-1].p1[3])
    if t_end < now:
        return None

    d_h_now = math.hypot(i_state.x - j_state.x, i_state.y - j_state.y)
    d_v_now = abs(i_state.alt - j_state.alt)
    # A violation at the current positions is a loss regardless of what the
    # projections foresee (a plan-conformant projection can look clean while
    # the aircraft are actually overlapping right now).
    current_loss = d_h_now < params.h_min \
        and d_v_now < params.v_min_for(i_state.alt, j_state.alt)

    both_level = i_state.v_speed == 0.0 and j_state.v_speed == 0.0
    violation_found = False
    if both_level:
        if d_v_now < params.v_min_for(i_state.alt, j_state.alt):
            t_cpa_abs, d_h_cpa, _ = _global_horizontal_cpa(tr_i, tr_j, now, t_end)
            violation_found = d_h_cpa < params.h_min
    else:
        dvs = i_state.v_speed - j_state.v_speed
        if abs(dvs) < 1e-12:
            t_v = now
        else:
            t_v = now - (i_state.alt - j_state.alt) / dvs
            t_v = min(max(t_v, now), t_end)
        alt_i_v = i_state.alt + i_state.v_speed * (t_v - now)
        alt_j_v = j_state.alt + j_state.v_speed * (t_v - now)
        if abs(alt_i_v - alt_j_v) < params.v_min_for(alt_i_v, alt_j_v):
            lo = max(now, t_v - _VCPA_WINDOW)
            hi = min(t_end, t_v + _VCPA_WINDOW)
            ts = np.arange(lo, hi + _SCAN_DT / 2, _SCAN_DT)
            xi, yi, ai = tr_i.sample(ts)
            xj, yj, aj = tr_j.sample(ts)
            d_h = np.hypot(xi - xj, yi - yj)
            d_v = np.abs(ai - aj)
            v_min = np.where(np.minimum(ai, aj) < params.band_boundary_ft,
                             params.v_min_low, params.v_min_high)
            violation_found = bool(np.any((d_h < params.h_min) & (d_v < v_min)))

    if not violation_found and not current_loss:
        return None

    # CPA geometry for the event; reported relative to now.
    t_cpa_abs, d_h_cpa, t_unclamped = _global_horizontal_cpa(tr_i, tr_j, now, t_end)
    if t_cpa_abs <= now + 1e-9 and t_unclamped < now:
        # Diverging pair: the true CPA is in the past.
        t_cpa_abs = t_unclamped
        pxi, pyi, _ = tr_i.at(t_cpa_abs)
        pxj, pyj, _ = tr_j.at(t_cpa_abs)
        d_h_cpa = math.hypot(pxi - pxj, pyi - pyj)
    t_cpa = t_cpa_abs - now

    xi_c, yi_c, alt_i_c = tr_i.at(t_cpa_abs)
    xj_c, yj_c, alt_j_c = tr_j.at(t_cpa_abs)
    d_v_cpa = abs(alt_i_c - alt_j_c)
    a_ij = wrap_signed(j_state.chi - i_state.chi)
    b_ij = wrap_signed(bearing(xi_c - xj_c, yi_c - yj_c) - j_state.chi)
    d_cp, t_cp = _crossing_point(i_state, j_state)

    # Dual-violation interval at scan resolution (first and last points).
    ts = np.arange(now, t_end + _SCAN_DT / 2, _SCAN_DT)
    xi, yi, ai = tr_i.sample(ts)
    xj, yj, aj = tr_j.sample(ts)
    d_h = np.hypot(xi - xj, yi - yj)
    d_v = np.abs(ai - aj)
    v_min = np.where(np.minimum(ai, aj) < params.band_boundary_ft,
                     params.v_min_low, params.v_min_high)
    viol = (d_h < params.h_min) & (d_v < v_min)
    if np.any(viol):
        idx = np.nonzero(viol)[0]
        first_t = float(ts[idx[0]] - now)
        last_t = float(ts[idx[-1]] - now)
    else:
        # Violation window narrower than the scan step: collapse to the CPA.
        first_t = last_t = max(t_cpa, 0.0)

    geometry = CpaGeometry(
        t_cpa=t_cpa, d_h_cpa=d_h_cpa, d_v_cpa=d_v_cpa,
        a_ij=a_ij, b_ij=b_ij, d_cp=d_cp, t_cp=t_cp,
        first_conflict_t=first_t, last_conflict_t=last_t,
        d_h_now=d_h_now, d_v_now=d_v_now)

    if current_loss:
        cls = EventClass.LOSS
    elif 0.0 <= t_cpa <= params.alert_horizon:
        cls = EventClass.ALERT
    else:
        cls = EventClass.CONFLICT

    return ConflictEvent(
        i=i_state.flight_id, j=j_state.flight_id, event_class=cls,
        geometry=geometry,
        basis_i=segs_i[0].basis, basis_j=segs_j[0].basis,
        climb_descend_i=vertical_phase(i_state),
        climb_descend_j=vertical_phase(j_state))


def swap_event(ev: ConflictEvent, chi_i: float, chi_j: float) -> ConflictEvent:
    """The same event viewed with the roles of i and j exchanged.

    chi_i/chi_j are the current courses of the event's i and j, needed to
    re-express the intersection angle and relative bearing.
    """
    g = ev.geometry
    b_ji = wrap_signed(g.b_ij + chi_j + math.pi - chi_i)
    return ConflictEvent(
        i=ev.j, j=ev.i, event_class=ev.event_class,
        geometry=replace(g, a_ij=wrap_signed(-g.a_ij), b_ij=b_ji),
        basis_i=ev.basis_j, basis_j=ev.basis_i,
        climb_descend_i=ev.climb_descend_j,
        climb_descend_j=ev.climb_descend_i)


def detect_all(states: dict[str, FlightState], plans: dict[str, FlightPlan],
               params: SeparationParams) -> list[ConflictEvent]:
    """All pairwise events over the given flights (unordered pairs, one event
    per conflicting pair, oriented by ascending flight id)."""
    ids = sorted(states)
    events = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            ev = detect_pair(states[i], plans[i], states[j], plans[j], params)
            if ev is not None:
                events.append(ev)
    return events


def neighbors(flight_id: str, events: list[ConflictEvent],
              states: dict[str, FlightState]) -> list[tuple[str, ConflictEvent]]:
    """Ranked neighbor list for one agent.

    Losses first by current horizontal distance, then alerts by ascending
    t_cpa, then conflicts with non-negative t_cpa by ascending t_cpa, then
    conflicts with negative t_cpa; ties broken by flight id. Each entry is
    (neighbor id, event oriented so that the agent is i).
    """
    mine = []
    for ev in events:
        if not ev.involves(flight_id):
            continue
        if ev.i != flight_id:
            ev = swap_event(ev, states[ev.i].chi, states[ev.j].chi)
        mine.append(ev)

    def rank(ev: ConflictEvent):
        g = ev.geometry
        if ev.event_class is EventClass.LOSS:
            return (0, g.d_h_now, ev.j)
        if ev.event_class is EventClass.ALERT:
            return (1, g.t_cpa, ev.j)
        if g.t_cpa >= 0:
            return (2, g.t_cpa, ev.j)
        return (3, g.t_cpa, ev.j)

    mine.sort(key=rank)
    return [(ev.j, ev) for ev in mine]


def event_to_jsonable(ev: ConflictEvent) -> dict:
    """Conflict-event log object (one JSON object per line in event logs)."""
    g = ev.geometry

    def fin(v):
        return None if v is None or not math.isfinite(v) else v

    return {
        "i": ev.i,
        "j": ev.j,
        "class": ev.event_class.value,
        "t_cpa_s": fin(g.t_cpa),
        "d_h_cpa_m": fin(g.d_h_cpa),
        "d_v_cpa_ft": fin(g.d_v_cpa),
        "a_ij_rad": fin(g.a_ij),
        "b_ij_rad": fin(g.b_ij),
        "d_cp_m": fin(g.d_cp),
        "t_cp_s": fin(g.t_cp),
        "first_conflict_t_s": fin(g.first_conflict_t),
        "last_conflict_t_s": fin(g.last_conflict_t),
        "d_h_now_m": fin(g.d_h_now),
        "d_v_now_ft": fin(g.d_v_now),
        "basis_i": ev.basis_i.value,
        "basis_j": ev.basis_j.value,
        "climb_descend_i": ev.climb_descend_i.value,
        "climb_descend_j": ev.climb_descend_j.value,
    }


def event_log_line(ev: ConflictEvent) -> str:
    return json.dumps(event_to_jsonable(ev))
