"""Conflict/resolution reports, what-if rollouts, ranking, heatmaps."""

import json
import math

import numpy as np
import pytest

from atcdr.detection import SeparationParams, detect_pair
from atcdr.dgn import Checkpoint, DgnConfig, Sgd, init_params, q_values
from atcdr.env import ACTIONS, ActionKind, ConflictEnv, N_ACTIONS
from atcdr.geo import FlightPlan, FlightState, Waypoint
from atcdr.scenario import Scenario, ScenarioFlight
from atcdr.transparency import (
    attention_heatmap,
    commanded_course_change_deg,
    conflict_report,
    exit_point_deviation,
    heatmap_by_flight,
    rank_actions,
    resolution_report,
    track_plan_discrepancy,
    what_if,
)

NM_M = 1852.0


def straight_plan(fid, x0, y0, x1, y1, alt, speed, n_mid=1):
    """Constant-altitude straight-line plan with evenly spaced waypoints."""
    total = math.hypot(x1 - x0, y1 - y0)
    pts = []
    for k in range(n_mid + 2):
        f = k / (n_mid + 1)
        pts.append(Waypoint(f"{fid}W{k}", x0 + f * (x1 - x0),
                            y0 + f * (y1 - y0), alt, f * total / speed))
    return FlightPlan(waypoints=tuple(pts), exit_index=n_mid + 1)


def crossing_scenario(duration=600.0, sep_m=60000.0, speed=250.0):
    """Head-on pair at FL250 closing through the origin along x."""
    half = sep_m / 2
    flights = []
    for fid, x0, chi in (("EAST01", -half, 90.0), ("WEST02", half, 270.0)):
        sgn = 1.0 if x0 < 0 else -1.0
        state = FlightState(flight_id=fid, x=x0, y=0.0, alt=25000.0,
                            chi=math.radians(chi), h_speed=speed,
                            v_speed=0.0, t=0.0)
        plan = straight_plan(fid, x0, 0.0, x0 + sgn * 100000.0, 0.0,
                             25000.0, speed)
        flights.append(ScenarioFlight(state=state, plan=plan,
                                      entry_time=0.0, exit_time=duration))
    return Scenario(id="1564730100-TESTAOR", flights=tuple(flights),
                    duration=duration, aor_id="TESTAOR")


def solo_scenario(duration=1200.0, speed=200.0, alt=31000.0):
    """One flight flying west to east along y=0."""
    state = FlightState(flight_id="SOLO01", x=-80000.0, y=0.0, alt=alt,
                        chi=math.radians(90.0), h_speed=speed, v_speed=0.0,
                        t=0.0)
    plan = straight_plan("SOLO01", -80000.0, 0.0, 80000.0, 0.0, alt, speed)
    return Scenario(id="1564730101-TESTAOR",
                    flights=(ScenarioFlight(state=state, plan=plan,
                                            entry_time=0.0,
                                            exit_time=duration),),
                    duration=duration, aor_id="TESTAOR")


def dogleg_scenario(duration=900.0, speed=200.0, alt=31000.0):
    """Right-angle dogleg: east to the corner, then north to the exit."""
    state = FlightState(flight_id="SOLO01", x=-60000.0, y=0.0, alt=alt,
                        chi=math.radians(90.0), h_speed=speed, v_speed=0.0,
                        t=0.0)
    plan = FlightPlan(waypoints=(
        Waypoint("P0", -60000.0, 0.0, alt, 0.0),
        Waypoint("P1", 0.0, 0.0, alt, 300.0),
        Waypoint("P2", 0.0, 60000.0, alt, 600.0)), exit_index=2)
    return Scenario(id="1564730102-TESTAOR",
                    flights=(ScenarioFlight(state=state, plan=plan,
                                            entry_time=0.0,
                                            exit_time=duration),),
                    duration=duration, aor_id="TESTAOR")


def lane_scenario(duration=900.0, speed=200.0):
    """Two flights in clean parallel opposite lanes 15 km apart; only a
    course deviation by AGT01 can put them in conflict."""
    alt = 25000.0
    a_state = FlightState(flight_id="AGT01", x=-40000.0, y=0.0, alt=alt,
                          chi=math.radians(90.0), h_speed=speed,
                          v_speed=0.0, t=0.0)
    a_plan = straight_plan("AGT01", -40000.0, 0.0, 60000.0, 0.0, alt, speed)
    b_state = FlightState(flight_id="THD03", x=40000.0, y=-15000.0, alt=alt,
                          chi=math.radians(270.0), h_speed=speed,
                          v_speed=0.0, t=0.0)
    b_plan = straight_plan("THD03", 40000.0, -15000.0, -60000.0, -15000.0,
                           alt, speed)
    return Scenario(id="1564730103-TESTAOR", flights=(
        ScenarioFlight(state=a_state, plan=a_plan, entry_time=0.0,
                       exit_time=duration),
        ScenarioFlight(state=b_state, plan=b_plan, entry_time=0.0,
                       exit_time=duration)),
        duration=duration, aor_id="TESTAOR")


def act_index(kind, **matches):
    for idx, a in enumerate(ACTIONS):
        if a.kind is not kind:
            continue
        if all(math.isclose(getattr(a, key), val) if isinstance(val, float)
               else getattr(a, key) == val for key, val in matches.items()):
            return idx
    raise AssertionError(f"no action {kind} {matches}")


def tiny_checkpoint(seed=0):
    cfg = DgnConfig(variant="edge", obs_dim=24, edge_dim=11, n_actions=31,
                    k_neighbors=3, enc_hidden=4, latent=2, heads=2,
                    head_dim=1, init_std=0.3)
    params = init_params(cfg, seed)
    return Checkpoint(online=params,
                      target={k: v.copy() for k, v in params.items()},
                      config=cfg, step=0, optimizer=Sgd())


def env_snapshot(env):
    return env.t, env.active_states()


REPORT_KEYS = ("track_plan_discrepancy", "basis", "cpa_geometry",
               "distance_to_cpa", "first_conflict_point",
               "last_conflict_point", "current_distance", "phase")


class TestConflictReport:

    def setup_method(self):
        self.env = ConflictEnv(crossing_scenario())
        view = self.env.reset()
        assert len(view.events) == 1
        self.ev = view.events[0]
        self.states = self.env.active_states()
        self.plans = {fid: self.env.plan_for(fid) for fid in self.states}
        self.report = conflict_report(self.ev, self.states, self.plans,
                                      self.env.params)

    def test_all_items_present(self):
        r = self.report
        assert r.flights == (self.ev.i, self.ev.j)
        doc = r.to_jsonable()
        for key in REPORT_KEYS:
            assert doc[key] is not None
        for fid in r.flights:
            assert doc["track_plan_discrepancy"][fid]["horizontal_m"] \
                is not None
            assert doc["basis"][fid] in ("plan", "track")
            assert doc["distance_to_cpa"][fid]["temporal_s"] is not None
            assert doc["phase"][fid] in ("level", "climb", "descend")
        assert doc["current_distance"]["horizontal_m"] is not None
        json.loads(json.dumps(doc))  # serializable end to end

    def test_identity_against_detector(self):
        g = self.ev.geometry
        c = self.report.cpa_geometry
        assert c["t_cpa_s"] == g.t_cpa
        assert c["d_h_cpa_m"] == g.d_h_cpa
        assert c["d_v_cpa_ft"] == g.d_v_cpa
        assert c["a_ij_rad"] == g.a_ij
        assert c["d_cp_m"] == g.d_cp
        assert self.report.current_distance["horizontal_m"] == g.d_h_now
        assert self.report.current_distance["vertical_ft"] == g.d_v_now
        assert self.report.basis == {self.ev.i: self.ev.basis_i.value,
                                     self.ev.j: self.ev.basis_j.value}
        assert self.report.event_class == self.ev.event_class.value

    def test_distance_to_cpa_kinematics(self):
        g = self.ev.geometry
        for fid in self.report.flights:
            d = self.report.distance_to_cpa[fid]
            assert d.temporal_s == g.t_cpa
            assert d.horizontal_m == pytest.approx(
                self.states[fid].h_speed * g.t_cpa)
            assert d.vertical_ft == 0.0

    def test_conflict_points_in_violation(self):
        r = self.report
        assert 0.0 <= r.first_conflict_point.t_s \
            <= r.last_conflict_point.t_s
        for point in (r.first_conflict_point, r.last_conflict_point):
            (xi, yi, ai) = point.positions[self.ev.i]
            (xj, yj, aj) = point.positions[self.ev.j]
            assert math.hypot(xi - xj, yi - yj) \
                < self.env.params.h_min + 1.0
            assert abs(ai - aj) < 1000.0

    def test_conflict_point_matches_kinematics(self):
        # On-plan level head-on pair: the projection is uniform straight
        # motion, so the reported point is closed-form.
        p = self.report.first_conflict_point
        st = self.states["EAST01"]
        x, y, alt = p.positions["EAST01"]
        assert x == pytest.approx(st.x + st.h_speed * p.t_s, abs=1e-6)
        assert y == pytest.approx(0.0, abs=1e-6)
        assert alt == pytest.approx(st.alt)

    def test_on_plan_discrepancy_near_zero(self):
        for fid in self.report.flights:
            d = self.report.track_plan_discrepancy[fid]
            assert d.horizontal_m < 1.0
            assert d.vertical_ft == pytest.approx(0.0, abs=1e-9)

    def test_level_pair_phases(self):
        assert self.report.phase == {"EAST01": "level", "WEST02": "level"}

    def test_climbing_flight_phase(self):
        params = SeparationParams()
        si = FlightState(flight_id="LVL01", x=-15000.0, y=0.0, alt=25000.0,
                         chi=math.radians(90.0), h_speed=200.0, v_speed=0.0,
                         t=0.0)
        # Climbing from FL240, the projection runs to the next level:
        # 1000 ft / 17 ft/s = 58.8 s, within which the head-on pair closes
        # below both minima.
        sj = FlightState(flight_id="CLB02", x=15000.0, y=0.0, alt=24000.0,
                         chi=math.radians(270.0), h_speed=200.0,
                         v_speed=17.0, t=0.0)
        pi = straight_plan("LVL01", -15000.0, 0.0, 85000.0, 0.0, 25000.0,
                           200.0)
        pj = straight_plan("CLB02", 15000.0, 0.0, -85000.0, 0.0, 24000.0,
                           200.0)
        ev = detect_pair(si, pi, sj, pj, params)
        assert ev is not None
        report = conflict_report(ev, {"LVL01": si, "CLB02": sj},
                                 {"LVL01": pi, "CLB02": pj}, params)
        assert report.phase == {"LVL01": "level", "CLB02": "climb"}
        d = report.distance_to_cpa["CLB02"]
        assert d.vertical_ft == pytest.approx(17.0 * ev.geometry.t_cpa)


class TestTrackPlanDiscrepancy:

    def setup_method(self):
        self.params = SeparationParams()
        self.plan = straight_plan("F1", -80000.0, 0.0, 80000.0, 0.0,
                                  31000.0, 200.0)

    def test_parallel_offset_closest_point(self):
        st = FlightState(flight_id="F1", x=0.0, y=5000.0, alt=31000.0,
                         chi=math.radians(90.0), h_speed=200.0, v_speed=0.0,
                         t=0.0)
        d = track_plan_discrepancy(st, self.plan, self.params)
        assert d.kind == "closest_point"
        assert d.horizontal_m == pytest.approx(5000.0, abs=1.0)
        assert abs(d.y_m) < 1e-6  # evaluated on the plan profile
        assert d.vertical_ft == pytest.approx(0.0, abs=1e-9)

    def test_converging_track_intersection(self):
        # From (0, 5000) heading 135 deg the track crosses y=0 at x=5000.
        st = FlightState(flight_id="F1", x=0.0, y=5000.0, alt=31000.0,
                         chi=math.radians(135.0), h_speed=200.0, v_speed=0.0,
                         t=0.0)
        d = track_plan_discrepancy(st, self.plan, self.params)
        assert d.kind == "intersection"
        assert d.horizontal_m == 0.0
        assert d.x_m == pytest.approx(5000.0, abs=1e-6)
        assert d.y_m == pytest.approx(0.0, abs=1e-6)
        t_hit = 5000.0 / (200.0 * math.cos(math.radians(45.0)))
        assert d.t_s == pytest.approx(t_hit, rel=1e-9)

    def test_vertical_component(self):
        st = FlightState(flight_id="F1", x=0.0, y=8000.0, alt=33000.0,
                         chi=math.radians(90.0), h_speed=200.0, v_speed=0.0,
                         t=0.0)
        d = track_plan_discrepancy(st, self.plan, self.params)
        assert d.horizontal_m == pytest.approx(8000.0, abs=1.0)
        assert d.vertical_ft == pytest.approx(2000.0, abs=1e-9)


class TestWhatIf:

    def test_no_action_identity(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        wr = what_if(env, "SOLO01", 0)
        assert wr.added_nm == 0.0
        assert wr.course_deviation_deg == 0.0
        assert wr.induced_conflicts == ()
        assert wr.induced_losses == 0 and wr.induced_alerts == 0
        assert wr.action_label == "no_action"

    def test_side_effect_free(self):
        env = ConflictEnv(lane_scenario())
        env.reset()
        t0, states0 = env_snapshot(env)
        what_if(env, "AGT01",
                act_index(ActionKind.COURSE,
                          course_delta=math.radians(20.0), duration=180.0))
        t1, states1 = env_snapshot(env)
        assert t1 == t0
        assert states1 == states0

    def test_course_detour_added_nm_oracle(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        action = act_index(ActionKind.COURSE,
                           course_delta=math.radians(20.0), duration=180.0)
        wr = what_if(env, "SOLO01", action)
        # Independent geometry: 180 s leg at 110 deg, rejoin via the middle
        # waypoint at the origin, then the straight run to the exit.
        leg = 200.0 * 180.0
        px = -80000.0 + leg * math.sin(math.radians(110.0))
        py = leg * math.cos(math.radians(110.0))
        detour = leg + math.hypot(px, py) + 80000.0
        oracle = (detour - 160000.0) / NM_M
        assert wr.added_nm == pytest.approx(oracle, abs=0.5)
        assert wr.added_nm > 0.5
        assert wr.course_deviation_deg == pytest.approx(20.0)
        assert wr.duration_s == 180.0

    def test_direct_to_shortcut_negative_nm(self):
        env = ConflictEnv(dogleg_scenario())
        env.reset()
        wr = what_if(env, "SOLO01",
                     act_index(ActionKind.DIRECT_TO, waypoint_offset=2))
        oracle = (math.hypot(60000.0, 60000.0) - 120000.0) / NM_M
        assert wr.added_nm == pytest.approx(oracle, abs=2.0)
        assert wr.added_nm < -10.0

    def test_induced_conflict_with_third_flight(self):
        env = ConflictEnv(lane_scenario())
        view = env.reset()
        assert view.events == []  # clean lanes until the agent deviates
        action = act_index(ActionKind.COURSE,
                           course_delta=math.radians(20.0), duration=180.0)
        wr = what_if(env, "AGT01", action)
        assert len(wr.induced_conflicts) == 1
        rep = wr.induced_conflicts[0]
        assert set(rep.flights) == {"AGT01", "THD03"}
        assert wr.induced_losses == 1
        doc = rep.to_jsonable()
        for key in REPORT_KEYS:
            assert doc[key] is not None

    def test_horizon_override(self):
        env = ConflictEnv(lane_scenario())
        env.reset()
        action = act_index(ActionKind.COURSE,
                           course_delta=math.radians(20.0), duration=180.0)
        wr = what_if(env, "AGT01", action, horizon_s=60.0)
        # Two steps in, the turn is projected into a conflict but the
        # aircraft are still far apart: no loss yet.
        assert len(wr.induced_conflicts) == 1
        assert wr.induced_losses == 0

    def test_speed_change_adds_no_track_miles(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        wr = what_if(env, "SOLO01",
                     act_index(ActionKind.SPEED, speed_delta=3.6008,
                               duration=60.0))
        assert wr.added_nm == pytest.approx(0.0, abs=1e-6)

    def test_exit_deviation_after_level_change(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        wr = what_if(env, "SOLO01", act_index(ActionKind.FL_UP))
        dev = wr.exit_point_deviation
        assert dev.foreseen is True
        assert dev.vertical_ft == pytest.approx(1000.0)
        assert dev.horizontal_m == pytest.approx(0.0, abs=1.0)
        base = what_if(env, "SOLO01", 0).exit_point_deviation
        assert base.vertical_ft == pytest.approx(0.0, abs=1e-9)

    def test_rejects_bad_inputs(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        with pytest.raises(KeyError):
            what_if(env, "GHOST9", 0)
        with pytest.raises(ValueError):
            what_if(env, "SOLO01", N_ACTIONS)
        with pytest.raises(ValueError):
            what_if(env, "SOLO01", 0, horizon_s=0.0)

    def test_jsonable_payload(self):
        env = ConflictEnv(lane_scenario())
        env.reset()
        action = act_index(ActionKind.COURSE,
                           course_delta=math.radians(20.0), duration=180.0)
        doc = what_if(env, "AGT01", action).to_jsonable()
        parsed = json.loads(json.dumps(doc))
        for key in ("agent", "action", "action_label", "duration_s",
                    "added_nm", "course_deviation_deg", "induced_conflicts",
                    "induced_losses", "induced_alerts",
                    "exit_point_deviation"):
            assert key in parsed


class TestCommandedCourseChange:

    def test_course_actions_exact(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        for deg in (10.0, -10.0, 20.0, -20.0):
            idx = act_index(ActionKind.COURSE,
                            course_delta=math.radians(deg), duration=60.0)
            assert commanded_course_change_deg(env, "SOLO01", idx) \
                == pytest.approx(abs(deg))

    def test_direct_to_bearing_change(self):
        env = ConflictEnv(dogleg_scenario())
        env.reset()
        idx = act_index(ActionKind.DIRECT_TO, waypoint_offset=2)
        # From (-60 km, 0) heading east, P2 at (0, 60 km) bears 45 degrees.
        assert commanded_course_change_deg(env, "SOLO01", idx) \
            == pytest.approx(45.0, abs=1e-9)

    def test_non_turning_actions_zero(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        for idx in (0, act_index(ActionKind.FL_UP),
                    act_index(ActionKind.SPEED, speed_delta=-3.6008,
                              duration=30.0)):
            assert commanded_course_change_deg(env, "SOLO01", idx) == 0.0


class TestEnvPlanAccessors:

    def test_remaining_plan_at_reset(self):
        env = ConflictEnv(dogleg_scenario())
        env.reset()
        assert env.remaining_plan_m("SOLO01") == pytest.approx(120000.0)

    def test_remaining_plan_under_direct_to(self):
        env = ConflictEnv(dogleg_scenario())
        env.reset()
        env.step({"SOLO01": act_index(ActionKind.DIRECT_TO,
                                      waypoint_offset=2)},
                 coerce_isolated=False)
        got = env.remaining_plan_m("SOLO01")
        assert got == pytest.approx(math.hypot(60000.0, 60000.0) - 6000.0,
                                    abs=1.0)

    def test_zero_after_exit(self):
        env = ConflictEnv(solo_scenario(duration=1200.0))
        env.reset()
        while not env.done:
            env.step({}, coerce_isolated=False)
        assert env.has_exited("SOLO01")
        assert env.remaining_plan_m("SOLO01") == 0.0
        st = env.state_of("SOLO01")  # still reachable after exit
        assert st.flight_id == "SOLO01"

    def test_exit_deviation_of_exited_flight(self):
        env = ConflictEnv(solo_scenario(duration=1200.0))
        env.reset()
        while not env.done:
            env.step({}, coerce_isolated=False)
        dev = exit_point_deviation(env, "SOLO01")
        assert dev.foreseen is False
        # Exit fires on waypoint capture, so the miss is below the capture
        # radius (1 NM).
        assert dev.horizontal_m < 1852.0 + 1.0
        assert dev.vertical_ft == pytest.approx(0.0, abs=1e-9)


class TestRankActions:

    def test_increasing_q_reversed(self):
        q = np.arange(31, dtype=float)
        ranked = rank_actions(q)
        assert [r.action for r in ranked] == list(range(30, -1, -1))
        assert [r.rank for r in ranked] == list(range(1, 32))
        assert ranked[0].action == int(np.argmax(q))

    def test_equal_q_index_order(self):
        ranked = rank_actions(np.zeros(31))
        assert [r.action for r in ranked] == list(range(31))

    def test_tie_break_by_index(self):
        q = np.zeros(31)
        q[5] = q[9] = 3.0
        ranked = rank_actions(q)
        assert [r.action for r in ranked[:2]] == [5, 9]

    def test_consistent_with_greedy(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            q = rng.normal(size=31)
            assert rank_actions(q)[0].action == int(np.argmax(q))

    def test_carries_what_if_and_labels(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        wr = what_if(env, "SOLO01", 0)
        ranked = rank_actions(np.zeros(31), {0: wr})
        assert ranked[0].what_if is wr
        assert all(r.what_if is None for r in ranked[1:])
        assert ranked[0].label == "no_action"
        assert ranked[0].q_value == 0.0
        doc = json.loads(json.dumps([r.to_jsonable() for r in ranked]))
        assert doc[0]["what_if"]["agent"] == "SOLO01"
        assert doc[1]["what_if"] is None


class TestAttentionHeatmap:

    def crafted_views(self, n=4, duplicate=True, neighbors=3, seed=3):
        ckpt = tiny_checkpoint(seed)
        k = ckpt.config.k_neighbors
        rng = np.random.default_rng(seed)
        obs = rng.normal(size=(n, ckpt.config.obs_dim))
        edges = np.zeros((n, k + 1, ckpt.config.edge_dim))
        adj = np.zeros((n, k + 1, n))
        for i in range(n):
            adj[i, 0, i] = 1.0
        for slot in range(1, neighbors + 1):
            adj[0, slot, slot] = 1.0
            edges[0, slot] = rng.normal(size=ckpt.config.edge_dim)
        if duplicate and neighbors >= 3:
            obs[3] = obs[2]
            edges[0, 3] = edges[0, 2]
        return ckpt, obs, edges, adj

    def test_weights_sum_to_one(self):
        ckpt, obs, edges, adj = self.crafted_views()
        w = attention_heatmap(ckpt, obs, edges, adj, 0)
        assert w.shape == (3,)
        assert abs(w.sum() - 1.0) < 1e-6
        assert (w > 0).all()

    def test_duplicated_neighbors_equal_weights(self):
        ckpt, obs, edges, adj = self.crafted_views(duplicate=True)
        w = attention_heatmap(ckpt, obs, edges, adj, 0)
        assert w[1] == pytest.approx(w[2], abs=1e-12)

    def test_single_neighbor_weight_one(self):
        ckpt, obs, edges, adj = self.crafted_views(neighbors=1,
                                                   duplicate=False)
        w = attention_heatmap(ckpt, obs, edges, adj, 0)
        assert w.shape == (1,)
        assert w[0] == pytest.approx(1.0, abs=1e-12)

    def test_no_neighbors_rejected(self):
        ckpt, obs, edges, adj = self.crafted_views(neighbors=1,
                                                   duplicate=False)
        with pytest.raises(ValueError):
            attention_heatmap(ckpt, obs, edges, adj, 1)  # isolated agent
        with pytest.raises(IndexError):
            attention_heatmap(ckpt, obs, edges, adj, 9)

    def test_by_flight_on_live_pair(self):
        env = ConflictEnv(crossing_scenario())
        view = env.reset()
        ckpt = tiny_checkpoint()
        order = view.agent_order
        obs = np.stack([view.obs[f] for f in order])
        edges = np.stack([view.edges[f] for f in order])
        adj = np.stack([view.adjacency[f] for f in order])
        heat = heatmap_by_flight(ckpt, obs, edges, adj, order, "EAST01",
                                 view.neighbor_ids["EAST01"])
        assert heat == {"WEST02": pytest.approx(1.0, abs=1e-12)}


class TestResolutionReport:

    def test_full_payload(self):
        env = ConflictEnv(crossing_scenario())
        view = env.reset()
        ckpt = tiny_checkpoint()
        order = view.agent_order
        obs = np.stack([view.obs[f] for f in order])
        edges = np.stack([view.edges[f] for f in order])
        adj = np.stack([view.adjacency[f] for f in order])
        q_row = q_values(ckpt.online, ckpt.config, obs, edges,
                         adj).q[order.index("EAST01")]
        action = act_index(ActionKind.FL_UP)
        report = resolution_report(env, ckpt, "EAST01", action, q_row)

        assert report.agent == "EAST01"
        assert report.action == action
        assert report.action_label == "fl_up"
        assert abs(sum(report.attention.values()) - 1.0) < 1e-6
        assert set(report.attention) == {"WEST02"}
        assert len(report.alternatives) == N_ACTIONS
        assert report.alternatives[0].action == int(np.argmax(q_row))
        assert report.alternatives[0].what_if is not None
        chosen = [r for r in report.alternatives if r.action == action]
        assert chosen[0].what_if is not None

        doc = json.loads(json.dumps(report.to_jsonable()))
        for key in ("added_nm", "course_deviation_deg", "induced_conflicts",
                    "induced_losses", "induced_alerts", "attention",
                    "exit_point_deviation", "alternatives"):
            assert key in doc
        assert doc["attention"]["WEST02"] == pytest.approx(1.0)

    def test_requires_neighbors(self):
        env = ConflictEnv(solo_scenario())
        env.reset()
        ckpt = tiny_checkpoint()
        with pytest.raises(ValueError):
            resolution_report(env, ckpt, "SOLO01", 0, np.zeros(31))

    def test_unknown_agent(self):
        env = ConflictEnv(crossing_scenario())
        env.reset()
        with pytest.raises(KeyError):
            resolution_report(env, tiny_checkpoint(), "GHOST9", 0,
                              np.zeros(31))
