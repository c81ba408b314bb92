"""Situation-awareness and resolution payloads for operators.

Two report families feed the console. A ConflictReport explains one detected
event: how far each aircraft has strayed from its plan, which projection
basis the detector used, the CPA geometry, per-aircraft distances to the CPA,
the first/last points of predicted violation, the current separation, and
each aircraft's vertical phase. A ResolutionReport explains one maneuver:
track miles added, commanded course deviation, conflicts/losses/alerts the
maneuver itself would induce, the agent's attention over its neighbors, the
foreseen exit-point deviation, and the full ranking of alternatives by Q.

What-if rollouts run on a clone of the environment, so calling them never
disturbs live state. All payloads serialize with ``to_jsonable`` using the
stable field names documented on each dataclass; ``None`` stands in for
non-finite numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import (ConflictEvent, SeparationParams, horizon,
                        project_trajectory, vertical_phase)
from .dgn import Checkpoint, forward
from .env import (ACTIONS, ActionKind, ConflictEnv, DT_S, N_ACTIONS)
from .geo import (FlightPlan, FlightState, bearing, closest_point_on_polyline,
                  line_intersection, wrap_signed)

NM_M = 1852.0


def _fin(v):
    """JSON-safe number: None for anything non-finite."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


# -- conflict reports --------------------------------------------------------


@dataclass(frozen=True)
class TrackPlanDiscrepancy:
    """3D offset between the projected track and the flight plan, evaluated
    at their first intersection or, failing one, at the closest approach."""
    kind: str  # "intersection" | "closest_point"
    horizontal_m: float
    vertical_ft: float
    x_m: float  # where on the plan the discrepancy is evaluated
    y_m: float
    t_s: float  # s ahead of now along the track projection

    def to_jsonable(self) -> dict:
        return {"kind": self.kind, "horizontal_m": _fin(self.horizontal_m),
                "vertical_ft": _fin(self.vertical_ft), "x_m": _fin(self.x_m),
                "y_m": _fin(self.y_m), "t_s": _fin(self.t_s)}


@dataclass(frozen=True)
class CpaDistance:
    """One aircraft's foreseen distance to the CPA."""
    horizontal_m: float
    vertical_ft: float
    temporal_s: float  # negative when the CPA already lies behind

    def to_jsonable(self) -> dict:
        return {"horizontal_m": _fin(self.horizontal_m),
                "vertical_ft": _fin(self.vertical_ft),
                "temporal_s": _fin(self.temporal_s)}


@dataclass(frozen=True)
class ConflictPoint:
    """Projected aircraft positions at one instant of the violation window."""
    t_s: float  # s ahead of now
    positions: dict[str, tuple[float, float, float]]  # fid -> (x, y, alt)

    def to_jsonable(self) -> dict:
        return {"t_s": _fin(self.t_s),
                "positions": {fid: {"x_m": _fin(p[0]), "y_m": _fin(p[1]),
                                    "alt_ft": _fin(p[2])}
                              for fid, p in sorted(self.positions.items())}}


@dataclass(frozen=True)
class ConflictReport:
    """Situation-awareness payload for one detected event.

    JSON schema (keys of ``to_jsonable``):
      flights               [id, id]
      event_class           "loss" | "alert" | "conflict"
      track_plan_discrepancy  {id: TrackPlanDiscrepancy}          (a)
      basis                 {id: "plan" | "track"}                 (b)
      cpa_geometry          {t_cpa_s, d_h_cpa_m, d_v_cpa_ft,
                             a_ij_rad, b_ij_rad, d_cp_m, t_cp_s}   (c)
      distance_to_cpa       {id: CpaDistance}                      (d)
      first_conflict_point  ConflictPoint                          (e)
      last_conflict_point   ConflictPoint                          (e)
      current_distance      {horizontal_m, vertical_ft}            (f)
      phase                 {id: "level" | "climb" | "descend"}    (g)
    """
    flights: tuple[str, str]
    event_class: str
    track_plan_discrepancy: dict[str, TrackPlanDiscrepancy]
    basis: dict[str, str]
    cpa_geometry: dict[str, float]
    distance_to_cpa: dict[str, CpaDistance]
    first_conflict_point: ConflictPoint
    last_conflict_point: ConflictPoint
    current_distance: dict[str, float]
    phase: dict[str, str]

    def to_jsonable(self) -> dict:
        return {
            "flights": list(self.flights),
            "event_class": self.event_class,
            "track_plan_discrepancy": {
                fid: d.to_jsonable()
                for fid, d in sorted(self.track_plan_discrepancy.items())},
            "basis": dict(sorted(self.basis.items())),
            "cpa_geometry": {k: _fin(v) for k, v in self.cpa_geometry.items()},
            "distance_to_cpa": {
                fid: d.to_jsonable()
                for fid, d in sorted(self.distance_to_cpa.items())},
            "first_conflict_point": self.first_conflict_point.to_jsonable(),
            "last_conflict_point": self.last_conflict_point.to_jsonable(),
            "current_distance": {k: _fin(v)
                                 for k, v in self.current_distance.items()},
            "phase": dict(sorted(self.phase.items())),
        }


def _plan_altitude(plan: FlightPlan, seg: int, frac: float) -> float:
    """Filed altitude interpolated along plan segment ``seg``."""
    a = plan.waypoints[seg].alt
    b = plan.waypoints[min(seg + 1, len(plan.waypoints) - 1)].alt
    return a + frac * (b - a)


def track_plan_discrepancy(state: FlightState, plan: FlightPlan,
                           params: SeparationParams) -> TrackPlanDiscrepancy:
    """3D track-vs-plan offset for one aircraft.

    The track is the straight-ahead projection over the aircraft's detection
    horizon. If it crosses the plan's horizontal profile the discrepancy is
    evaluated at the first crossing (horizontal component zero, vertical the
    altitude miss against the filed profile there); otherwise at the point of
    closest horizontal approach, sampled at 1 s resolution.
    """
    t_h = horizon(state, params)
    pts = [(w.x, w.y) for w in plan.waypoints]
    ray = (state.vx * t_h, state.vy * t_h)

    hit_s = None  # earliest crossing, as a fraction of the ray
    hit_pt = None
    if math.hypot(*ray) > 1e-9:
        for k in range(len(pts) - 1):
            seg_v = (pts[k + 1][0] - pts[k][0], pts[k + 1][1] - pts[k][1])
            su = line_intersection((state.x, state.y), ray, pts[k], seg_v)
            if su is None:
                continue
            s, u = su
            if -1e-12 <= s <= 1.0 and -1e-12 <= u <= 1.0:
                if hit_s is None or s < hit_s:
                    hit_s = max(s, 0.0)
                    hit_pt = (pts[k][0] + u * seg_v[0],
                              pts[k][1] + u * seg_v[1], k, u)
    if hit_s is not None:
        t_at = hit_s * t_h
        alt_track = state.alt + state.v_speed * t_at
        alt_plan = _plan_altitude(plan, hit_pt[2], hit_pt[3])
        return TrackPlanDiscrepancy(
            kind="intersection", horizontal_m=0.0,
            vertical_ft=abs(alt_track - alt_plan),
            x_m=hit_pt[0], y_m=hit_pt[1], t_s=t_at)

    # No crossing: closest approach of the sampled ray to the plan profile.
    n = int(t_h) + 1
    best = (math.inf, 0.0, 0, 0.0)
    for i in range(n + 1):
        t_at = t_h * i / n
        px = state.x + state.vx * t_at
        py = state.y + state.vy * t_at
        d, seg, frac = closest_point_on_polyline(px, py, pts)
        if d < best[0]:
            best = (d, t_at, seg, frac)
    d, t_at, seg, frac = best
    ax, ay = pts[seg]
    bx, by = pts[min(seg + 1, len(pts) - 1)]
    alt_track = state.alt + state.v_speed * t_at
    return TrackPlanDiscrepancy(
        kind="closest_point", horizontal_m=d,
        vertical_ft=abs(alt_track - _plan_altitude(plan, seg, frac)),
        x_m=ax + frac * (bx - ax), y_m=ay + frac * (by - ay), t_s=t_at)


def _projected_position(segs, t_abs: float) -> tuple[float, float, float]:
    """(x, y, alt) along a projection at absolute time t_abs, clamped to the
    projection's span."""
    if t_abs <= segs[0].p0[3]:
        return segs[0].p0[:3]
    for seg in segs:
        if t_abs <= seg.p1[3] + 1e-9:
            f = (t_abs - seg.p0[3]) / (seg.p1[3] - seg.p0[3])
            return (seg.p0[0] + f * (seg.p1[0] - seg.p0[0]),
                    seg.p0[1] + f * (seg.p1[1] - seg.p0[1]),
                    seg.p0[2] + f * (seg.p1[2] - seg.p0[2]))
    return segs[-1].p1[:3]


def conflict_report(event: ConflictEvent,
                    states: dict[str, FlightState],
                    plans: dict[str, FlightPlan],
                    params: SeparationParams | None = None) -> ConflictReport:
    """Full situation-awareness report for one detected event.

    ``states``/``plans`` must hold both aircraft of the event and be the
    snapshot the event was detected from.
    """
    params = params or SeparationParams()
    i, j = event.i, event.j
    g = event.geometry
    segs = {fid: project_trajectory(states[fid], plans[fid], params)
            for fid in (i, j)}
    now = max(segs[i][0].p0[3], segs[j][0].p0[3])

    def cpa_distance(fid: str) -> CpaDistance:
        st = states[fid]
        ahead = max(g.t_cpa, 0.0)
        return CpaDistance(horizontal_m=st.h_speed * ahead,
                           vertical_ft=abs(st.v_speed) * ahead,
                           temporal_s=g.t_cpa)

    def point_at(t_rel: float | None) -> ConflictPoint:
        t_rel = 0.0 if t_rel is None else t_rel
        return ConflictPoint(
            t_s=t_rel,
            positions={fid: _projected_position(segs[fid], now + t_rel)
                       for fid in (i, j)})

    return ConflictReport(
        flights=(i, j),
        event_class=event.event_class.value,
        track_plan_discrepancy={
            fid: track_plan_discrepancy(states[fid], plans[fid], params)
            for fid in (i, j)},
        basis={i: event.basis_i.value, j: event.basis_j.value},
        cpa_geometry={"t_cpa_s": g.t_cpa, "d_h_cpa_m": g.d_h_cpa,
                      "d_v_cpa_ft": g.d_v_cpa, "a_ij_rad": g.a_ij,
                      "b_ij_rad": g.b_ij, "d_cp_m": g.d_cp,
                      "t_cp_s": g.t_cp},
        distance_to_cpa={fid: cpa_distance(fid) for fid in (i, j)},
        first_conflict_point=point_at(g.first_conflict_t),
        last_conflict_point=point_at(g.last_conflict_t),
        current_distance={"horizontal_m": g.d_h_now,
                          "vertical_ft": g.d_v_now},
        phase={i: event.climb_descend_i.value,
               j: event.climb_descend_j.value},
    )


# -- what-if rollouts --------------------------------------------------------


@dataclass(frozen=True)
class ExitDeviation:
    """3D offset from the plan's exit waypoint. ``foreseen`` marks estimates
    for flights that had not yet exited when evaluated."""
    horizontal_m: float
    vertical_ft: float
    foreseen: bool

    def to_jsonable(self) -> dict:
        return {"horizontal_m": _fin(self.horizontal_m),
                "vertical_ft": _fin(self.vertical_ft),
                "foreseen": self.foreseen}


@dataclass(frozen=True)
class WhatIfResult:
    """Foreseen effects of one agent's action, all others flying nominally.

    JSON keys: agent, action, action_label, duration_s, added_nm,
    course_deviation_deg, induced_conflicts (list of ConflictReport),
    induced_losses, induced_alerts, exit_point_deviation.
    """
    agent: str
    action: int
    action_label: str
    duration_s: float
    added_nm: float
    course_deviation_deg: float
    induced_conflicts: tuple[ConflictReport, ...]
    induced_losses: int
    induced_alerts: int
    exit_point_deviation: ExitDeviation

    def to_jsonable(self) -> dict:
        return {
            "agent": self.agent,
            "action": self.action,
            "action_label": self.action_label,
            "duration_s": _fin(self.duration_s),
            "added_nm": _fin(self.added_nm),
            "course_deviation_deg": _fin(self.course_deviation_deg),
            "induced_conflicts": [r.to_jsonable()
                                  for r in self.induced_conflicts],
            "induced_losses": self.induced_losses,
            "induced_alerts": self.induced_alerts,
            "exit_point_deviation": self.exit_point_deviation.to_jsonable(),
        }


def commanded_course_change_deg(env: ConflictEnv, fid: str,
                                action: int) -> float:
    """Course change (degrees) the action would command right now."""
    act = ACTIONS[action]
    if act.kind is ActionKind.COURSE:
        return abs(math.degrees(act.course_delta))
    if act.kind is ActionKind.DIRECT_TO:
        st = env.state_of(fid)
        wps = env.plan_for(fid).waypoints
        target = min(env.next_waypoint_index(fid) + act.waypoint_offset - 1,
                     len(wps) - 1)
        to_wp = bearing(wps[target].x - st.x, wps[target].y - st.y)
        return abs(math.degrees(wrap_signed(to_wp - st.chi)))
    return 0.0


def exit_point_deviation(env: ConflictEnv, fid: str) -> ExitDeviation:
    """Deviation from the plan's exit waypoint.

    Exited flights report the actual 3D offset at their exit position.
    Flights still airborne report the foreseen miss under current kinematics:
    horizontal from holding the present course to the closest approach of the
    exit waypoint, vertical from extrapolating the present vertical rate over
    the distance to go.
    """
    st = env.state_of(fid)
    wp = env.plan_for(fid).exit_point
    d_exit = math.hypot(wp.x - st.x, wp.y - st.y)
    if env.has_exited(fid):
        return ExitDeviation(horizontal_m=d_exit,
                             vertical_ft=abs(st.alt - wp.alt), foreseen=False)
    psi = bearing(wp.x - st.x, wp.y - st.y) if d_exit > 1e-9 else st.chi
    dpsi = wrap_signed(st.chi - psi)
    horiz = d_exit if math.cos(dpsi) <= 0.0 else d_exit * abs(math.sin(dpsi))
    alt_at_exit = st.alt + (st.v_speed * d_exit / st.h_speed
                            if st.h_speed > 0 else 0.0)
    return ExitDeviation(horizontal_m=horiz,
                         vertical_ft=abs(alt_at_exit - wp.alt), foreseen=True)


def _rollout(sim: ConflictEnv, agent: str, action: int | None,
             steps: int) -> dict[tuple[str, str], list]:
    """Step ``sim`` forward, the agent applying ``action`` once at the first
    step (None = fly nominally). Returns, per conflicting pair, the first
    event seen plus the snapshot it was detected from and the classes the
    pair reached over the window."""
    seen: dict[tuple[str, str], list] = {}
    for k in range(steps):
        if sim.done:
            break
        acts = {}
        if k == 0 and action is not None and agent in sim.active_ids:
            acts = {agent: action}
        view = sim.step(acts, coerce_isolated=False)
        states = sim.active_states()
        plans = {fid: sim.plan_for(fid) for fid in states}
        for ev in view.events:
            rec = seen.get(ev.pair)
            if rec is None:
                seen[ev.pair] = [ev, states, plans, {ev.event_class}]
            else:
                rec[3].add(ev.event_class)
    return seen


def what_if(env: ConflictEnv, agent: str, action: int,
            horizon_s: float | None = None) -> WhatIfResult:
    """Foreseen effects of ``agent`` applying ``action`` now.

    Two clones roll forward for the detection horizon (or ``horizon_s``):
    one with the action, one all-nominal; every other flight flies nominally
    in both. Effects are the differences: track miles added (flown plus
    distance-to-go through the exit), conflicts/losses/alerts present only
    under the action, and the exit-point deviation at the end of the acted
    rollout. The live environment is never mutated.
    """
    states = env.active_states()
    if agent not in states:
        raise KeyError(f"unknown or inactive flight {agent!r}")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action index {action} out of range")
    if horizon_s is None:
        horizon_s = horizon(states[agent], env.params)
    if horizon_s <= 0:
        raise ValueError("horizon_s must be strictly positive")
    steps = max(1, math.ceil(horizon_s / DT_S))

    course_dev = commanded_course_change_deg(env, agent, action)
    acted_sim, nominal_sim = env.clone(), env.clone()
    acted = _rollout(acted_sim, agent, action, steps)
    nominal = _rollout(nominal_sim, agent, None, steps)

    induced = []
    losses = alerts = 0
    for pair in sorted(acted):
        ev, ev_states, ev_plans, classes = acted[pair]
        base_classes = nominal[pair][3] if pair in nominal else set()
        if pair not in nominal:
            induced.append(conflict_report(ev, ev_states, ev_plans,
                                           env.params))
        if any(c.value == "loss" for c in classes) and \
                not any(c.value == "loss" for c in base_classes):
            losses += 1
        if any(c.value == "alert" for c in classes) and \
                not any(c.value == "alert" for c in base_classes):
            alerts += 1

    added_m = (acted_sim.track_length_m(agent)
               + acted_sim.remaining_plan_m(agent)) \
        - (nominal_sim.track_length_m(agent)
           + nominal_sim.remaining_plan_m(agent))

    act = ACTIONS[action]
    return WhatIfResult(
        agent=agent, action=action, action_label=act.label(),
        duration_s=act.duration or 0.0, added_nm=added_m / NM_M,
        course_deviation_deg=course_dev,
        induced_conflicts=tuple(induced),
        induced_losses=losses, induced_alerts=alerts,
        exit_point_deviation=exit_point_deviation(acted_sim, agent))


# -- ranking and attention ---------------------------------------------------


@dataclass(frozen=True)
class RankedAction:
    """One alternative in the advisory ranking (rank is 1-based)."""
    rank: int
    action: int
    label: str
    q_value: float
    what_if: WhatIfResult | None = None

    def to_jsonable(self) -> dict:
        return {"rank": self.rank, "action": self.action, "label": self.label,
                "q_value": _fin(self.q_value),
                "what_if": None if self.what_if is None
                else self.what_if.to_jsonable()}


def rank_actions(q_row: np.ndarray,
                 what_ifs: dict[int, WhatIfResult] | None = None
                 ) -> tuple[RankedAction, ...]:
    """Total order over the action space: descending Q, ties by action index.

    The top entry is exactly the greedy policy's argmax. ``what_ifs`` maps
    action index to a precomputed rollout summary for the entries that have
    one.
    """
    q = np.asarray(q_row, dtype=float).reshape(-1)
    what_ifs = what_ifs or {}
    order = sorted(range(q.shape[0]), key=lambda a: (-q[a], a))
    return tuple(RankedAction(rank=r + 1, action=a, label=ACTIONS[a].label()
                              if a < N_ACTIONS else str(a),
                              q_value=float(q[a]), what_if=what_ifs.get(a))
                 for r, a in enumerate(order))


def attention_heatmap(checkpoint: Checkpoint, obs: np.ndarray,
                      edges: np.ndarray, adjacency: np.ndarray,
                      agent_index: int) -> np.ndarray:
    """One agent's attention over its neighbor slots.

    Runs the online network, takes the second conv layer's attention row for
    the agent, averages the heads, drops the self slot and padded slots, and
    renormalizes. Returns one weight per occupied neighbor slot, in slot
    order (the order of the agent's ranked neighbor list).

    obs (N, obs_dim), edges (N, K+1, edge_dim), adjacency (N, K+1, N).
    """
    obs = np.asarray(obs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    adjacency = np.asarray(adjacency, dtype=float)
    n = obs.shape[0]
    if not 0 <= agent_index < n:
        raise IndexError(f"agent index {agent_index} out of range")
    occupied = adjacency[agent_index].sum(axis=-1) > 0  # (K+1,)
    if not occupied[1:].any():
        raise ValueError("attention heatmap undefined for an agent "
                         "with no neighbors")
    out = forward(checkpoint.online, checkpoint.config, obs[None],
                  edges[None], adjacency[None])
    per_head = out.attn2[0, agent_index]  # (m, K+1)
    mean = per_head.mean(axis=0)
    weights = mean[1:][occupied[1:]]
    total = weights.sum()
    if total <= 0:  # all attention on the self slot: spread evenly
        return np.full(weights.shape, 1.0 / weights.shape[0])
    return weights / total


def heatmap_by_flight(checkpoint: Checkpoint, obs: np.ndarray,
                      edges: np.ndarray, adjacency: np.ndarray,
                      agent_order: list[str], agent: str,
                      neighbor_ids: list[str]) -> dict[str, float]:
    """attention_heatmap keyed by neighbor flight id."""
    idx = agent_order.index(agent)
    w = attention_heatmap(checkpoint, obs, edges, adjacency, idx)
    return {nid: float(wi) for nid, wi in zip(neighbor_ids, w)}


# -- resolution reports ------------------------------------------------------


@dataclass(frozen=True)
class ResolutionReport:
    """Explanation payload for one chosen maneuver.

    JSON keys: agent, action, action_label, duration_s, added_nm (a),
    course_deviation_deg (b), induced_conflicts (c), induced_losses /
    induced_alerts (d), attention (e: {flight id: weight}, weights sum to 1),
    exit_point_deviation (f), alternatives (ranked actions with Q values).
    """
    agent: str
    action: int
    action_label: str
    duration_s: float
    added_nm: float
    course_deviation_deg: float
    induced_conflicts: tuple[ConflictReport, ...]
    induced_losses: int
    induced_alerts: int
    attention: dict[str, float]
    exit_point_deviation: ExitDeviation
    alternatives: tuple[RankedAction, ...]

    def to_jsonable(self) -> dict:
        return {
            "agent": self.agent,
            "action": self.action,
            "action_label": self.action_label,
            "duration_s": _fin(self.duration_s),
            "added_nm": _fin(self.added_nm),
            "course_deviation_deg": _fin(self.course_deviation_deg),
            "induced_conflicts": [r.to_jsonable()
                                  for r in self.induced_conflicts],
            "induced_losses": self.induced_losses,
            "induced_alerts": self.induced_alerts,
            "attention": {k: _fin(v)
                          for k, v in sorted(self.attention.items())},
            "exit_point_deviation": self.exit_point_deviation.to_jsonable(),
            "alternatives": [a.to_jsonable() for a in self.alternatives],
        }


def resolution_report(env: ConflictEnv, checkpoint: Checkpoint, agent: str,
                      action: int, q_row: np.ndarray,
                      what_if_top: int = 1) -> ResolutionReport:
    """Assemble the full resolution payload for ``agent`` taking ``action``.

    ``q_row`` is the agent's Q vector used for the ranking. What-if rollouts
    run for the chosen action and for the ``what_if_top`` highest-ranked
    alternatives (rollouts dominate the cost; the rest carry Q only).
    """
    states = env.active_states()
    if agent not in states:
        raise KeyError(f"unknown or inactive flight {agent!r}")
    q = np.asarray(q_row, dtype=float).reshape(-1)
    order = sorted(range(q.shape[0]), key=lambda a: (-q[a], a))
    targets = {action} | set(order[:max(what_if_top, 0)])
    what_ifs = {a: what_if(env, agent, a) for a in sorted(targets)}
    ranked = rank_actions(q, what_ifs)

    order_, obs, edges, adj, nbr = _stacked_views(env)
    attn = heatmap_by_flight(checkpoint, obs, edges, adj, order_, agent,
                             nbr[agent])

    chosen = what_ifs[action]
    return ResolutionReport(
        agent=agent, action=action, action_label=chosen.action_label,
        duration_s=chosen.duration_s, added_nm=chosen.added_nm,
        course_deviation_deg=chosen.course_deviation_deg,
        induced_conflicts=chosen.induced_conflicts,
        induced_losses=chosen.induced_losses,
        induced_alerts=chosen.induced_alerts,
        attention=attn,
        exit_point_deviation=chosen.exit_point_deviation,
        alternatives=ranked)


def _stacked_views(env: ConflictEnv):
    """Stack the current per-agent views into network-shaped arrays."""
    order = env.active_ids
    obs = np.stack([env.build_observation(f) for f in order])
    edges = np.stack([env.build_edges(f) for f in order])
    adj = np.stack([env.build_adjacency(f, order) for f in order])
    nbr = {f: env.ranked_neighbor_ids(f) for f in order}
    return order, obs, edges, adj, nbr
