"""Scenario definition, JSON (de)serialization and synthetic generation.

File schema (all field names unit-suffixed, one JSON document per scenario):

    {"id", "duration_s", "aor_id",
     "flights": [{"id", "entry_s", "exit_s",
                  "state": {"x_m", "y_m", "alt_ft", "chi_deg",
                            "h_speed_mps", "v_speed_ftps"},
                  "plan": {"exit_index",
                           "waypoints": [{"name", "x_m", "y_m",
                                          "alt_ft", "eto_s"}]}}]}

Bearings are stored in degrees quantized to 1e-9 deg; that is the canonical
float encoding under which save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geo import FlightPlan, FlightState, Waypoint, bearing, wrap_bearing


class ScenarioParseError(ValueError):
    """Schema violation while reading a scenario file; names the field path."""


@dataclass(frozen=True)
class ScenarioFlight:
    state: FlightState  # initial state, state.t == entry_time
    plan: FlightPlan
    entry_time: float  # s
    exit_time: float  # s


@dataclass(frozen=True)
class Scenario:
    id: str  # "timestamp-AoRID"
    flights: tuple[ScenarioFlight, ...]
    duration: float  # s
    aor_id: str

    def __post_init__(self):
        object.__setattr__(self, "flights", tuple(self.flights))
        if self.duration <= 0:
            raise ValueError("scenario duration must be > 0")
        seen = set()
        for f in self.flights:
            if not (f.entry_time < f.exit_time <= self.duration):
                raise ValueError(
                    f"flight {f.state.flight_id}: entry {f.entry_time} < exit "
                    f"{f.exit_time} <= duration {self.duration} violated")
            if f.state.flight_id in seen:
                raise ValueError(f"duplicate flight id {f.state.flight_id}")
            seen.add(f.state.flight_id)


def _quant_deg(chi_rad: float) -> float:
    return round(math.degrees(wrap_bearing(chi_rad)), 9)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "id": sc.id,
        "duration_s": sc.duration,
        "aor_id": sc.aor_id,
        "flights": [
            {
                "id": f.state.flight_id,
                "entry_s": f.entry_time,
                "exit_s": f.exit_time,
                "state": {
                    "x_m": f.state.x,
                    "y_m": f.state.y,
                    "alt_ft": f.state.alt,
                    "chi_deg": _quant_deg(f.state.chi),
                    "h_speed_mps": f.state.h_speed,
                    "v_speed_ftps": f.state.v_speed,
                },
                "plan": {
                    "exit_index": f.plan.exit_index,
                    "waypoints": [
                        {"name": w.name, "x_m": w.x, "y_m": w.y,
                         "alt_ft": w.alt, "eto_s": w.eto}
                        for w in f.plan.waypoints
                    ],
                },
            }
            for f in sc.flights
        ],
    }


def _need(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ScenarioParseError(f"{path}: expected object")
    if key not in obj:
        raise ScenarioParseError(f"{path}.{key}: missing")
    return obj[key]


def _num(obj: dict, key: str, path: str) -> float:
    v = _need(obj, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioParseError(f"{path}.{key}: expected number, got {type(v).__name__}")
    return float(v)


def scenario_from_dict(doc: dict) -> Scenario:
    sid = _need(doc, "id", "$")
    duration = _num(doc, "duration_s", "$")
    aor_id = _need(doc, "aor_id", "$")
    raw_flights = _need(doc, "flights", "$")
    if not isinstance(raw_flights, list):
        raise ScenarioParseError("$.flights: expected array")
    flights = []
    for idx, rf in enumerate(raw_flights):
        fpath = f"$.flights[{idx}]"
        fid = _need(rf, "id", fpath)
        entry = _num(rf, "entry_s", fpath)
        exit_ = _num(rf, "exit_s", fpath)
        st = _need(rf, "state", fpath)
        sp = f"{fpath}.state"
        state = FlightState(
            flight_id=str(fid),
            x=_num(st, "x_m", sp),
            y=_num(st, "y_m", sp),
            alt=_num(st, "alt_ft", sp),
            chi=math.radians(_num(st, "chi_deg", sp)),
            h_speed=_num(st, "h_speed_mps", sp),
            v_speed=_num(st, "v_speed_ftps", sp),
            t=entry,
        )
        pl = _need(rf, "plan", fpath)
        pp = f"{fpath}.plan"
        exit_index = _need(pl, "exit_index", pp)
        if not isinstance(exit_index, int) or isinstance(exit_index, bool):
            raise ScenarioParseError(f"{pp}.exit_index: expected integer")
        raw_wps = _need(pl, "waypoints", pp)
        if not isinstance(raw_wps, list) or len(raw_wps) < 2:
            raise ScenarioParseError(f"{pp}.waypoints: expected array of >= 2 waypoints")
        wps = []
        for widx, rw in enumerate(raw_wps):
            wp_path = f"{pp}.waypoints[{widx}]"
            wps.append(Waypoint(
                name=str(_need(rw, "name", wp_path)),
                x=_num(rw, "x_m", wp_path),
                y=_num(rw, "y_m", wp_path),
                alt=_num(rw, "alt_ft", wp_path),
                eto=_num(rw, "eto_s", wp_path),
            ))
        try:
            plan = FlightPlan(waypoints=tuple(wps), exit_index=exit_index)
        except ValueError as e:
            raise ScenarioParseError(f"{pp}: {e}") from e
        flights.append(ScenarioFlight(state=state, plan=plan,
                                      entry_time=entry, exit_time=exit_))
    try:
        return Scenario(id=str(sid), flights=tuple(flights),
                        duration=duration, aor_id=str(aor_id))
    except ValueError as e:
        raise ScenarioParseError(f"$: {e}") from e


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioParseError(f"{path}: not valid JSON: {e}") from e
    return scenario_from_dict(doc)


# --------------------------- synthetic scenarios ---------------------------

SECTOR_HALF_M = 60000.0  # synthetic AoR is a 120 km square

# Conflict-pair construction draws: time to the crossing point and speeds.
_T_MEET_RANGE = (240.0, 420.0)
_SPEED_RANGE = (200.0, 280.0)
_CRUISE_FLS = (310, 330, 350, 370, 390)


def _dogleg_plan(fid: str, x0, y0, x1, y1, alt, speed, entry, rng) -> FlightPlan:
    """Entry -> slight mid dogleg -> exit, ETOs at constant speed from entry."""
    mx = 0.5 * (x0 + x1)
    my = 0.5 * (y0 + y1)
    # Small perpendicular offset so segments are never exactly collinear.
    d = math.hypot(x1 - x0, y1 - y0)
    ox = -(y1 - y0) / d * rng.uniform(500.0, 3000.0)
    oy = (x1 - x0) / d * rng.uniform(500.0, 3000.0)
    pts = [(x0, y0), (mx + ox, my + oy), (x1, y1)]
    wps = []
    t = entry
    for k, (px, py) in enumerate(pts):
        if k > 0:
            qx, qy = pts[k - 1]
            t += math.hypot(px - qx, py - qy) / speed
        wps.append(Waypoint(name=f"{fid}W{k}", x=px, y=py, alt=alt, eto=t))
    return FlightPlan(waypoints=tuple(wps), exit_index=len(wps) - 1)


def generate_synthetic_scenario(seed: int, n_flights: int,
                                duration: float = 1800.0,
                                aor_id: str = "SYNAOR1",
                                max_retries: int = 50) -> Scenario:
    """Deterministic synthetic scenario with at least one pairwise conflict.

    Flights 0 and 1 are constructed converging on a common crossing point at
    the same flight level; the detector is consulted and the construction is
    re-drawn until it confirms a conflict at t = 0. Remaining flights cross
    the sector at distinct levels with staggered entries.
    """
    from .detection import SeparationParams, detect_pair

    if n_flights < 2:
        raise ValueError("need at least 2 flights")
    rng = np.random.default_rng(seed)
    params = SeparationParams()

    for _ in range(max_retries):
        flights: list[ScenarioFlight] = []
        t_meet = rng.uniform(*_T_MEET_RANGE)
        phi0 = rng.uniform(0.0, 2.0 * math.pi)
        dphi = rng.uniform(math.pi / 2.0, math.pi)
        fl_pair = float(rng.choice(_CRUISE_FLS)) * 100.0
        for k, phi in enumerate((phi0, phi0 + dphi)):
            speed = rng.uniform(*_SPEED_RANGE)
            r0 = speed * t_meet
            x0, y0 = r0 * math.sin(phi), r0 * math.cos(phi)
            # Head through the crossing point and onward to the far side.
            x1, y1 = -x0 / r0 * SECTOR_HALF_M, -y0 / r0 * SECTOR_HALF_M
            fid = f"SYN{k:03d}"
            plan = _dogleg_plan(fid, x0, y0, x1, y1, fl_pair, speed, 0.0, rng)
            chi = bearing(plan.waypoints[1].x - x0, plan.waypoints[1].y - y0)
            state = FlightState(fid, x0, y0, fl_pair, chi, speed, 0.0, 0.0)
            exit_t = min(plan.waypoints[-1].eto + 60.0, duration)
            flights.append(ScenarioFlight(state, plan, 0.0, exit_t))

        ev = detect_pair(flights[0].state, flights[0].plan,
                         flights[1].state, flights[1].plan, params)
        if ev is None:
            continue

        used_fls = {fl_pair}
        for k in range(2, n_flights):
            speed = rng.uniform(*_SPEED_RANGE)
            fl = float(rng.choice(_CRUISE_FLS)) * 100.0
            while fl in used_fls and len(used_fls) < len(_CRUISE_FLS):
                fl = float(rng.choice(_CRUISE_FLS)) * 100.0
            used_fls.add(fl)
            side = rng.integers(0, 4)
            along = rng.uniform(-0.8, 0.8) * SECTOR_HALF_M
            edge = {0: (along, SECTOR_HALF_M), 1: (along, -SECTOR_HALF_M),
                    2: (SECTOR_HALF_M, along), 3: (-SECTOR_HALF_M, along)}[int(side)]
            x0, y0 = edge
            x1, y1 = -x0 + rng.uniform(-0.3, 0.3) * SECTOR_HALF_M, \
                     -y0 + rng.uniform(-0.3, 0.3) * SECTOR_HALF_M
            path_t = math.hypot(x1 - x0, y1 - y0) / speed + 120.0
            entry = float(rng.uniform(0.0, max(1.0, duration - path_t)))
            fid = f"SYN{k:03d}"
            plan = _dogleg_plan(fid, x0, y0, x1, y1, fl, speed, entry, rng)
            chi = bearing(plan.waypoints[1].x - x0, plan.waypoints[1].y - y0)
            state = FlightState(fid, x0, y0, fl, chi, speed, 0.0, entry)
            exit_t = min(entry + path_t, duration)
            flights.append(ScenarioFlight(state, plan, entry, exit_t))

        ts = 1564730000 + int(seed)
        return Scenario(id=f"{ts}-{aor_id}", flights=tuple(flights),
                        duration=float(duration), aor_id=aor_id)

    raise RuntimeError(
        f"could not construct a conflicting pair in {max_retries} draws (seed {seed})")
