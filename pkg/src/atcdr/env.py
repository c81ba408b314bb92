"""Multi-agent conflict resolution environment.

Flights advance in 30 s steps (1 s sub-integration) under a small repertoire
of discrete maneuvers: flight level changes at +-17 ft/s over 1000 ft, course
offsets of +-10/+-20 degrees held for a chosen duration, horizontal speed
changes of +-3.6008 m/s, direct-to one of the next four plan waypoints, or no
action. Each step the detector runs over the active flights and every agent
receives a 24-feature observation, one 11-feature edge vector per ranked
neighbor, a (K+1) x N one-hot adjacency, and an individual reward.

Units: meters, feet, seconds, radians, m/s, ft/s.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .detection import (Basis, ConflictEvent, EventClass, SeparationParams,
                        conformance, detect_all, neighbors)
from .geo import (FlightPlan, FlightState, M_PER_NM, bearing, wrap_bearing,
                  wrap_signed)
from .scenario import Scenario

DT_S = 30.0  # control step
SUB_DT_S = 1.0  # integration step
FL_RATE_FTPS = 17.0  # vertical speed while changing level
FL_STEP_FT = 1000.0  # size of one flight level change
SPEED_DELTA_MPS = 3.6008  # 7 kt
CAPTURE_RADIUS_M = 1.0 * M_PER_NM
DURATIONS_S = (30.0, 60.0, 120.0, 180.0)
COURSE_DELTAS = tuple(math.radians(d) for d in (10.0, -10.0, 20.0, -20.0))


class ActionKind(str, Enum):
    NO_ACTION = "no_action"
    FL_UP = "fl_up"
    FL_DOWN = "fl_down"
    COURSE = "course"
    SPEED = "speed"
    DIRECT_TO = "direct_to"


@dataclass(frozen=True)
class ActionId:
    kind: ActionKind
    course_delta: float | None = None  # rad, COURSE only
    speed_delta: float | None = None  # m/s, SPEED only
    duration: float | None = None  # s, COURSE and SPEED only
    waypoint_offset: int | None = None  # 1..4, DIRECT_TO only

    def label(self) -> str:
        if self.kind is ActionKind.COURSE:
            sign = "+" if self.course_delta > 0 else "-"
            deg = abs(round(math.degrees(self.course_delta)))
            return f"course{sign}{deg}deg/{int(self.duration)}s"
        if self.kind is ActionKind.SPEED:
            sign = "+" if self.speed_delta > 0 else "-"
            return f"speed{sign}{abs(self.speed_delta)}mps/{int(self.duration)}s"
        if self.kind is ActionKind.DIRECT_TO:
            return f"direct_to_wp{self.waypoint_offset}"
        return self.kind.value


def _enumerate_actions() -> tuple[ActionId, ...]:
    acts = [ActionId(kind=ActionKind.NO_ACTION),
            ActionId(kind=ActionKind.FL_UP),
            ActionId(kind=ActionKind.FL_DOWN)]
    for delta in COURSE_DELTAS:
        for dur in DURATIONS_S:
            acts.append(ActionId(kind=ActionKind.COURSE, course_delta=delta,
                                 duration=dur))
    for delta in (SPEED_DELTA_MPS, -SPEED_DELTA_MPS):
        for dur in DURATIONS_S:
            acts.append(ActionId(kind=ActionKind.SPEED, speed_delta=delta,
                                 duration=dur))
    for k in range(1, 5):
        acts.append(ActionId(kind=ActionKind.DIRECT_TO, waypoint_offset=k))
    return tuple(acts)


ACTIONS: tuple[ActionId, ...] = _enumerate_actions()
N_ACTIONS = len(ACTIONS)  # 1 + 2 + 16 + 8 + 4 = 31
NO_ACTION = 0


def action_space() -> tuple[ActionId, ...]:
    return ACTIONS


@dataclass(frozen=True)
class NormalizationConstants:
    max_alt: float = 45000.0  # ft
    min_h_speed: float = 100.0  # m/s
    max_h_speed: float = 350.0  # m/s
    d_exit: float = 100000.0  # m
    hd: float = 100000.0  # m, generic horizontal-distance denominator
    vd: float = 10000.0  # ft, generic vertical-distance denominator
    t_cpa: float = 600.0  # s
    d_h_cpa: float = 4 * 9260.0  # m
    v_d_cpa: float = 2000.0  # ft
    d_cp: float = 100000.0  # m
    t_cp: float = 600.0  # s
    f: float = math.pi  # rad, course-change denominator
    v: float = FL_RATE_FTPS  # ft/s, vertical-rate denominator

    def __post_init__(self):
        for name in ("max_alt", "min_h_speed", "max_h_speed", "d_exit", "hd",
                     "vd", "t_cpa", "d_h_cpa", "v_d_cpa", "d_cp", "t_cp",
                     "f", "v"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.max_h_speed <= self.min_h_speed:
            raise ValueError("max_h_speed must exceed min_h_speed")


OBS_DIM = 24
EDGE_DIM = 11


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


class _Mode(Enum):
    FOLLOW_PLAN = 0
    COURSE_OFFSET = 1
    DIRECT_TO = 2


@dataclass
class _Flight:
    """Mutable per-flight record: kinematic state plus maneuver bookkeeping."""
    fid: str
    plan: FlightPlan
    entry_time: float
    exit_time: float
    x: float
    y: float
    alt: float
    chi: float
    h_speed: float
    v_speed: float
    next_wp: int = 1
    mode: _Mode = _Mode.FOLLOW_PLAN
    offset_expiry: float = 0.0  # s, COURSE_OFFSET only
    direct_target: int = 0  # waypoint index, DIRECT_TO only
    fl_target: float | None = None  # ft, set while changing level
    active: bool = False
    exited: bool = False
    hold_course: bool = False  # no-action while off-plan holds current course
    flown_m: float = 0.0  # horizontal track length since entry

    def state(self, t: float) -> FlightState:
        return FlightState(flight_id=self.fid, x=self.x, y=self.y,
                           alt=self.alt, chi=self.chi, h_speed=self.h_speed,
                           v_speed=self.v_speed, t=t)

    @property
    def vx(self) -> float:
        return self.h_speed * math.sin(self.chi)

    @property
    def vy(self) -> float:
        return self.h_speed * math.cos(self.chi)


@dataclass
class EnvView:
    """What agents see after reset or one step."""
    t: float
    agent_order: list[str]
    obs: dict[str, np.ndarray]  # (24,)
    edges: dict[str, np.ndarray]  # (K+1, 11), row 0 is the zero self edge
    adjacency: dict[str, np.ndarray]  # (K+1, N)
    neighbor_ids: dict[str, list[str]]
    events: list[ConflictEvent]
    rewards: dict[str, float] | None
    done: bool
    info: dict = field(default_factory=dict)


class ConflictEnv:
    """Deterministic environment over one scenario.

    K bounds the neighbors each agent attends to; the detector and the
    normalization constants are injectable for experiments.
    """

    def __init__(self, scenario: Scenario,
                 params: SeparationParams | None = None,
                 norm: NormalizationConstants | None = None,
                 k_neighbors: int = 3):
        if k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        self.scenario = scenario
        self.params = params or SeparationParams()
        self.norm = norm or NormalizationConstants()
        self.k = k_neighbors
        self._ready = False

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> EnvView:
        self.t = 0.0
        self._flights: dict[str, _Flight] = {}
        for sf in self.scenario.flights:
            st = sf.state
            self._flights[st.flight_id] = _Flight(
                fid=st.flight_id, plan=sf.plan, entry_time=sf.entry_time,
                exit_time=sf.exit_time, x=st.x, y=st.y, alt=st.alt,
                chi=st.chi, h_speed=st.h_speed, v_speed=st.v_speed)
        self._activate_due()
        self._ready = True
        self._detect()
        return self._view(rewards=None, info={})

    def clone(self) -> "ConflictEnv":
        """Deep copy for hypothetical rollouts."""
        return copy.deepcopy(self)

    @property
    def active_ids(self) -> list[str]:
        return sorted(f.fid for f in self._flights.values() if f.active)

    def active_states(self) -> dict[str, FlightState]:
        return {fid: self._flights[fid].state(self.t)
                for fid in self.active_ids}

    def track_length_m(self, fid: str) -> float:
        """Horizontal distance flown so far (1 s integration resolution)."""
        return self._flights[fid].flown_m

    def plan_for(self, fid: str) -> FlightPlan:
        return self._flights[fid].plan

    def state_of(self, fid: str) -> FlightState:
        """Kinematic state of any known flight, frozen after its exit."""
        return self._flights[fid].state(self.t)

    def has_exited(self, fid: str) -> bool:
        return self._flights[fid].exited

    def next_waypoint_index(self, fid: str) -> int:
        """Plan sequencing pointer: the waypoint resumed guidance steers to."""
        fl = self._flights[fid]
        return min(fl.next_wp, len(fl.plan.waypoints) - 1)

    def ranked_neighbor_ids(self, fid: str) -> list[str]:
        """The agent's current neighbor slots, nearest-ranked first."""
        return list(self._neighbor_ids[fid])

    def current_events(self) -> list[ConflictEvent]:
        """Detector output for the current snapshot."""
        return list(self._events)

    def override_track(self, fid: str, x: float, y: float, alt: float,
                       h_speed: float, v_speed: float,
                       chi: float | None = None) -> None:
        """Surveillance correction: replace one flight's kinematics and
        re-run the detector. Course defaults to the bearing of the implied
        displacement (unchanged when the fix barely moved)."""
        fl = self._flights[fid]
        if not fl.active:
            raise ValueError(f"flight {fid!r} is not active")
        if chi is None:
            chi = bearing(x - fl.x, y - fl.y) \
                if math.hypot(x - fl.x, y - fl.y) > 1e-6 else fl.chi
        fl.x, fl.y, fl.alt, fl.chi = x, y, alt, chi
        fl.h_speed = h_speed
        fl.v_speed = v_speed
        self._detect()

    def remaining_plan_m(self, fid: str) -> float:
        """Distance to go through the plan's exit point: straight to the
        current guidance target, then along the plan. Zero once exited."""
        fl = self._flights[fid]
        if fl.exited:
            return 0.0
        wps = fl.plan.waypoints
        k0 = fl.direct_target if fl.mode is _Mode.DIRECT_TO \
            else min(fl.next_wp, len(wps) - 1)
        k0 = min(k0, fl.plan.exit_index)
        d = math.hypot(wps[k0].x - fl.x, wps[k0].y - fl.y)
        for k in range(k0, fl.plan.exit_index):
            d += math.hypot(wps[k + 1].x - wps[k].x, wps[k + 1].y - wps[k].y)
        return d

    @property
    def done(self) -> bool:
        if self.t >= self.scenario.duration:
            return True
        for f in self._flights.values():
            if f.active:
                return False
            if not f.exited and f.entry_time > self.t:
                return False  # someone still enters later
        return True

    # -- stepping ----------------------------------------------------------

    def step(self, actions: dict[str, int],
             coerce_isolated: bool = True) -> EnvView:
        """Apply one joint action and advance 30 s.

        actions maps agent id to an index into ACTIONS; omitted active
        agents default to NoAction. Agents with no ranked neighbors are
        forced to NoAction unless coerce_isolated is False.
        """
        if not self._ready:
            raise RuntimeError("reset() must run before step()")
        active = self.active_ids
        for fid in actions:
            if fid not in self._flights:
                raise KeyError(f"unknown flight id {fid!r}")
            if fid not in active:
                raise ValueError(f"action for inactive flight {fid!r}")

        applied: dict[str, int] = {}
        coerced: list[str] = []
        penalties: dict[str, dict] = {}
        for fid in active:
            a_idx = actions.get(fid, NO_ACTION)
            if not 0 <= a_idx < N_ACTIONS:
                raise ValueError(f"action index {a_idx} out of range")
            if coerce_isolated and not self._neighbor_ids.get(fid):
                if a_idx != NO_ACTION:
                    coerced.append(fid)
                a_idx = NO_ACTION
            applied[fid] = a_idx
            penalties[fid] = self._apply_command(self._flights[fid],
                                                 ACTIONS[a_idx])

        for fid in active:
            fl = self._flights[fid]
            if ACTIONS[applied[fid]].kind is ActionKind.NO_ACTION and \
                    fl.mode is _Mode.FOLLOW_PLAN and fl.fl_target is None:
                st = fl.state(self.t)
                fl.hold_course = conformance(st, fl.plan, self.params) \
                    is Basis.TRACK
            else:
                fl.hold_course = False

        n_sub = int(round(DT_S / SUB_DT_S))
        for k in range(n_sub):
            t_sub = self.t + (k + 1) * SUB_DT_S
            for fid in active:
                fl = self._flights[fid]
                if fl.active:
                    self._integrate(fl, t_sub)
        self.t += DT_S
        self._activate_due()
        self._detect()

        rewards = {fid: self._reward(fid, penalties[fid]) for fid in active}
        info = {"applied_actions": applied, "coerced": coerced,
                "exited": [fid for fid in active
                           if self._flights[fid].exited]}
        return self._view(rewards=rewards, info=info)

    def _apply_command(self, fl: _Flight, act: ActionId) -> dict:
        """Instantaneous action effects; returns the commanded deltas that
        the reward penalizes."""
        pen = {"d_chi": 0.0, "d_vs": 0.0, "h_speed_changed": False}
        if act.kind is ActionKind.NO_ACTION:
            return pen
        # Any command preempts pending maneuvers.
        if fl.mode is not _Mode.FOLLOW_PLAN:
            fl.mode = _Mode.FOLLOW_PLAN
            self._skip_passed_waypoints(fl)
        if fl.fl_target is not None:
            fl.fl_target = None
            fl.v_speed = 0.0

        if act.kind is ActionKind.FL_UP:
            fl.fl_target = fl.alt + FL_STEP_FT
            pen["d_vs"] = abs(FL_RATE_FTPS - fl.v_speed)
            fl.v_speed = FL_RATE_FTPS
        elif act.kind is ActionKind.FL_DOWN:
            fl.fl_target = max(fl.alt - FL_STEP_FT, 0.0)
            pen["d_vs"] = abs(-FL_RATE_FTPS - fl.v_speed)
            fl.v_speed = -FL_RATE_FTPS
        elif act.kind is ActionKind.COURSE:
            fl.chi = wrap_bearing(fl.chi + act.course_delta)
            fl.mode = _Mode.COURSE_OFFSET
            fl.offset_expiry = self.t + act.duration
            pen["d_chi"] = abs(act.course_delta)
        elif act.kind is ActionKind.SPEED:
            # The delta persists beyond the nominal duration; reverting
            # would be an uncommanded maneuver.
            fl.h_speed = max(fl.h_speed + act.speed_delta, 0.0)
            pen["h_speed_changed"] = True
        elif act.kind is ActionKind.DIRECT_TO:
            target = min(fl.next_wp + act.waypoint_offset - 1,
                         len(fl.plan.waypoints) - 1)
            old = fl.chi
            fl.chi = bearing(fl.plan.waypoints[target].x - fl.x,
                             fl.plan.waypoints[target].y - fl.y)
            fl.mode = _Mode.DIRECT_TO
            fl.direct_target = target
            pen["d_chi"] = abs(wrap_signed(fl.chi - old))
        return pen

    def _integrate(self, fl: _Flight, t_end: float) -> None:
        """One sub-step of closed-loop guidance plus kinematics."""
        if fl.mode is _Mode.COURSE_OFFSET and t_end - SUB_DT_S >= fl.offset_expiry:
            fl.mode = _Mode.FOLLOW_PLAN
            self._skip_passed_waypoints(fl)
        if fl.mode is _Mode.FOLLOW_PLAN and not fl.hold_course:
            wp = fl.plan.waypoints[min(fl.next_wp, len(fl.plan.waypoints) - 1)]
            dx, dy = wp.x - fl.x, wp.y - fl.y
            if math.hypot(dx, dy) > 1e-6:
                fl.chi = bearing(dx, dy)
        elif fl.mode is _Mode.DIRECT_TO:
            wp = fl.plan.waypoints[fl.direct_target]
            dx, dy = wp.x - fl.x, wp.y - fl.y
            if math.hypot(dx, dy) > 1e-6:
                fl.chi = bearing(dx, dy)

        if fl.fl_target is not None:
            remaining = fl.fl_target - fl.alt
            if abs(remaining) <= abs(fl.v_speed) * SUB_DT_S + 1e-9:
                fl.alt = fl.fl_target
                fl.v_speed = 0.0
                fl.fl_target = None
            else:
                fl.alt += fl.v_speed * SUB_DT_S
        elif fl.v_speed != 0.0:
            fl.alt = max(fl.alt + fl.v_speed * SUB_DT_S, 0.0)

        fl.x += fl.vx * SUB_DT_S
        fl.y += fl.vy * SUB_DT_S
        fl.flown_m += fl.h_speed * SUB_DT_S

        self._sequence_waypoints(fl)
        if fl.active and t_end >= fl.exit_time:
            fl.active = False
            fl.exited = True

    def _sequence_waypoints(self, fl: _Flight) -> None:
        if fl.mode is _Mode.DIRECT_TO:
            wp = fl.plan.waypoints[fl.direct_target]
            if math.hypot(wp.x - fl.x, wp.y - fl.y) <= CAPTURE_RADIUS_M:
                if fl.direct_target >= fl.plan.exit_index:
                    fl.active = False
                    fl.exited = True
                    return
                fl.next_wp = fl.direct_target + 1
                fl.mode = _Mode.FOLLOW_PLAN
            return
        if fl.mode is not _Mode.FOLLOW_PLAN or fl.hold_course:
            return
        while fl.next_wp < len(fl.plan.waypoints):
            wp = fl.plan.waypoints[fl.next_wp]
            if math.hypot(wp.x - fl.x, wp.y - fl.y) > CAPTURE_RADIUS_M:
                break
            if fl.next_wp >= fl.plan.exit_index:
                fl.active = False
                fl.exited = True
                return
            fl.next_wp += 1

    def _skip_passed_waypoints(self, fl: _Flight) -> None:
        """Advance the sequencing pointer past waypoints already abeam, so a
        resumed plan never commands a turn back."""
        wps = fl.plan.waypoints
        while fl.next_wp < len(wps) - 1:
            wp = wps[fl.next_wp]
            prev = wps[fl.next_wp - 1] if fl.next_wp > 0 else wps[0]
            lx, ly = wp.x - prev.x, wp.y - prev.y
            if lx == 0 and ly == 0:
                fl.next_wp += 1
                continue
            if (wp.x - fl.x) * lx + (wp.y - fl.y) * ly < 0:
                fl.next_wp += 1
            else:
                break

    def _activate_due(self) -> None:
        from .geo import plan_position_at
        for fl in self._flights.values():
            if fl.active or fl.exited or fl.entry_time > self.t:
                continue
            if self.t > fl.entry_time:
                # Late activation: place the flight where its plan says.
                pos = plan_position_at(fl.plan, self.t)
                fl.x, fl.y, fl.alt, fl.chi = pos.x, pos.y, pos.alt, pos.chi
                for k, wp in enumerate(fl.plan.waypoints):
                    if wp.eto > self.t:
                        fl.next_wp = k
                        break
                else:
                    fl.next_wp = len(fl.plan.waypoints) - 1
            fl.active = True

    # -- perception --------------------------------------------------------

    def _detect(self) -> None:
        states = self.active_states()
        plans = {fid: self._flights[fid].plan for fid in states}
        self._events = detect_all(states, plans, self.params)
        self._events_by_pair = {ev.pair: ev for ev in self._events}
        self._neighbor_ids = {}
        self._ranked = {}
        for fid in states:
            ranked = neighbors(fid, self._events, states)
            self._ranked[fid] = ranked[:self.k]
            self._neighbor_ids[fid] = [nid for nid, _ in self._ranked[fid]]

    def build_observation(self, fid: str) -> np.ndarray:
        fl = self._flights[fid]
        nc = self.norm
        exit_wp = fl.plan.exit_point
        d_exit = math.hypot(exit_wp.x - fl.x, exit_wp.y - fl.y)
        psi = bearing(exit_wp.x - fl.x, exit_wp.y - fl.y) if d_exit > 1e-9 \
            else fl.chi
        dpsi = wrap_signed(fl.chi - psi)
        alt_at_exit = fl.alt + (fl.v_speed * d_exit / fl.h_speed
                                if fl.h_speed > 0 else 0.0)
        o = np.zeros(OBS_DIM)
        o[0] = _clamp01(fl.alt / nc.max_alt)
        o[1] = math.cos(fl.chi)
        o[2] = math.sin(fl.chi)
        o[3] = _clamp01((fl.h_speed - nc.min_h_speed)
                        / (nc.max_h_speed - nc.min_h_speed))
        o[4] = math.cos(dpsi)
        o[5] = math.sin(dpsi)
        o[6] = _clamp01(d_exit / nc.d_exit)
        o[7] = _clamp01(abs(alt_at_exit - exit_wp.alt) / nc.vd)
        wps = fl.plan.waypoints
        for slot in range(4):
            idx = fl.next_wp + slot
            base = 8 + 4 * slot
            if idx >= len(wps):
                continue  # padded with zeros beyond the plan end
            wp = wps[idx]
            d = math.hypot(wp.x - fl.x, wp.y - fl.y)
            to_wp = bearing(wp.x - fl.x, wp.y - fl.y) if d > 1e-9 else fl.chi
            dc = wrap_signed(fl.chi - to_wp)
            alt_at_wp = fl.alt + (fl.v_speed * d / fl.h_speed
                                  if fl.h_speed > 0 else 0.0)
            o[base] = math.cos(dc)
            o[base + 1] = math.sin(dc)
            o[base + 2] = _clamp01(d / nc.hd)
            o[base + 3] = _clamp01(abs(alt_at_wp - wp.alt) / nc.vd)
        return o

    def edge_vector(self, ev: ConflictEvent) -> np.ndarray:
        """11 normalized features of an event already oriented so that the
        observing agent is the event's i."""
        nc = self.norm
        g = ev.geometry
        e = np.zeros(EDGE_DIM)
        e[0] = min(max(g.t_cpa / nc.t_cpa, -1.0), 1.0)
        e[1] = _clamp01(g.d_h_cpa / nc.d_h_cpa)
        e[2] = math.cos(g.a_ij)
        e[3] = math.sin(g.a_ij)
        e[4] = math.cos(g.b_ij)
        e[5] = math.sin(g.b_ij)
        e[6] = _clamp01(g.d_v_cpa / nc.v_d_cpa)
        e[7] = _clamp01(g.d_cp / nc.d_cp) if math.isfinite(g.d_cp) else 1.0
        e[8] = _clamp01(g.t_cp / nc.t_cp) if math.isfinite(g.t_cp) else 1.0
        e[9] = _clamp01(g.d_h_now / nc.hd)
        e[10] = _clamp01(g.d_v_now / nc.vd)
        return e

    def build_edges(self, fid: str) -> np.ndarray:
        """(K+1, 11): row 0 the zero self edge, rows 1..K ranked neighbor
        edges, zero rows beyond the neighbor count."""
        out = np.zeros((self.k + 1, EDGE_DIM))
        for slot, (_, ev) in enumerate(self._ranked[fid], start=1):
            out[slot] = self.edge_vector(ev)
        return out

    def edges_for(self, fid: str, neighbor_ids: list[str]) -> np.ndarray:
        """Edge rows against a caller-supplied slot assignment, from the
        current events; zero rows for pairs no longer in conflict. Used when
        the adjacency of the previous step must be carried over."""
        from .detection import swap_event
        states = self.active_states()
        out = np.zeros((self.k + 1, EDGE_DIM))
        for slot, nid in enumerate(neighbor_ids[:self.k], start=1):
            key = (fid, nid) if fid <= nid else (nid, fid)
            ev = self._events_by_pair.get(key)
            if ev is None or fid not in states or nid not in states:
                continue
            if ev.i != fid:
                ev = swap_event(ev, states[ev.i].chi, states[ev.j].chi)
            out[slot] = self.edge_vector(ev)
        return out

    def build_adjacency(self, fid: str, agent_order: list[str]) -> np.ndarray:
        n = len(agent_order)
        col = {a: c for c, a in enumerate(agent_order)}
        out = np.zeros((self.k + 1, n))
        out[0, col[fid]] = 1.0
        for slot, nid in enumerate(self._neighbor_ids[fid], start=1):
            out[slot, col[nid]] = 1.0
        return out

    def _view(self, rewards, info) -> EnvView:
        order = self.active_ids
        obs = {fid: self.build_observation(fid) for fid in order}
        edges = {fid: self.build_edges(fid) for fid in order}
        adj = {fid: self.build_adjacency(fid, order) for fid in order}
        return EnvView(t=self.t, agent_order=order, obs=obs, edges=edges,
                       adjacency=adj,
                       neighbor_ids={f: list(self._neighbor_ids[f])
                                     for f in order},
                       events=list(self._events), rewards=rewards,
                       done=self.done, info=info)

    # -- reward ------------------------------------------------------------

    def _reward(self, fid: str, pen: dict) -> float:
        fl = self._flights[fid]
        nc = self.norm
        exit_wp = fl.plan.exit_point
        d_exit = math.hypot(exit_wp.x - fl.x, exit_wp.y - fl.y)
        psi = bearing(exit_wp.x - fl.x, exit_wp.y - fl.y) if d_exit > 1e-9 \
            else fl.chi
        dpsi = abs(wrap_signed(fl.chi - psi))
        alt_at_exit = fl.alt + (fl.v_speed * d_exit / fl.h_speed
                                if fl.h_speed > 0 else 0.0)
        n_alt_diff = _clamp01(abs(alt_at_exit - exit_wp.alt) / nc.vd)
        n_dist = _clamp01(d_exit / nc.d_exit)
        alerts = losses = 0
        if fl.active:
            for ev in self._events:
                if not ev.involves(fid):
                    continue
                if ev.event_class is EventClass.ALERT:
                    alerts += 1
                elif ev.event_class is EventClass.LOSS:
                    losses += 1
        r = (-pen["d_chi"] / nc.f
             - 0.5 * dpsi / math.pi
             - 0.5 * n_alt_diff
             - n_dist
             - (1.0 if pen["h_speed_changed"] else 0.0)
             - pen["d_vs"] / nc.v
             - 10.0 * alerts
             - 5.0 * losses)
        return r
