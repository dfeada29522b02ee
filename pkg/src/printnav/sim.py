"""Closed-loop simulation: plant, controller, scenario, audit.

The plant is the same double integrator the controller predicts with
(no disturbance), so with every solve optimal the realized trajectory
matches the one-step predictions exactly. A post-hoc audit re-checks
every recorded state against the map, schedule, and input bounds,
independent of anything the solver claimed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MapFormatError, SimulationAbortedError
from .gcode import SpeedSchedule, load_schedule
from .geometry import MapSpec, contains, load_map
from .mpc import (
    Controller,
    ControlInput,
    MpcConfig,
    State,
    dynamics_step,
)
from .zones import SpeedZoneMap, build_partition

AUDIT_TOL = 1e-6


@dataclass(frozen=True)
class Scenario:
    zone_map: SpeedZoneMap
    map_spec: MapSpec
    schedule: SpeedSchedule | None
    x0: State
    x_ref: State
    total_steps: int
    mpc: MpcConfig
    arrival_radius: float = 0.5
    name: str = "scenario"

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.arrival_radius <= 0:
            raise ValueError("arrival_radius must be positive")


@dataclass(frozen=True)
class Violation:
    step: int
    kind: str  # zone_speed | schedule_speed | obstacle | input
    magnitude: float


@dataclass(frozen=True)
class SimResult:
    states: tuple[State, ...]
    inputs: tuple[ControlInput, ...]
    arrival_step: int | None
    violations: tuple[Violation, ...]
    per_step_stats: tuple[dict, ...]

    @property
    def arrived(self) -> bool:
        return self.arrival_step is not None


def run_closed_loop(scenario: Scenario) -> SimResult:
    """Iterate measure-plan-apply for total_steps steps.

    The arrival step is the first state within arrival_radius of the
    goal position; the run continues to the configured length either
    way. A hard controller infeasibility aborts with the partial
    result attached to the raised error.
    """
    ctrl = Controller(scenario.zone_map, scenario.schedule, scenario.mpc)
    states = [scenario.x0]
    inputs: list[ControlInput] = []
    stats: list[dict] = []
    x = scenario.x0
    try:
        for k in range(scenario.total_steps):
            decision = ctrl.step(x, k)
            u = decision.u0
            inputs.append(u)
            stats.append(dict(decision.solve_stats, degraded=decision.degraded))
            x = dynamics_step(x, u, scenario.mpc.dt)
            states.append(x)
    except Exception as exc:
        partial = _finish(scenario, states, inputs, stats)
        raise SimulationAbortedError(
            f"{scenario.name}: aborted at step {len(inputs)}: {exc}",
            partial=partial,
        ) from exc
    return _finish(scenario, states, inputs, stats)


def _finish(scenario, states, inputs, stats) -> SimResult:
    goal = scenario.x_ref.position
    arrival = None
    for k, s in enumerate(states):
        if np.linalg.norm(s.position - goal) <= scenario.arrival_radius:
            arrival = k
            break
    violations = audit(
        states, inputs, scenario.zone_map, scenario.schedule,
        u_bound=scenario.mpc.u_bound,
        obstacles=[e.poly for e in scenario.map_spec.obstacles],
    )
    return SimResult(
        states=tuple(states), inputs=tuple(inputs), arrival_step=arrival,
        violations=tuple(violations), per_step_stats=tuple(stats),
    )


def audit(states, inputs, zone_map: SpeedZoneMap,
          schedule: SpeedSchedule | None, u_bound: float | None = None,
          obstacles=(), tol: float = AUDIT_TOL) -> list[Violation]:
    """Re-check a trajectory against map, schedule, and input bounds.

    A state on the boundary of two zones is held to the looser of the
    two caps (the disjunctive constraint is satisfiable under either
    region there, so the audit must not be stricter than the model).
    """
    out: list[Violation] = []
    for k, s in enumerate(states):
        pos = s.position
        speed = float(np.abs(s.velocity).max())
        for obs in obstacles:
            depth = float((obs.b - obs.A @ pos).min())
            if depth > tol:  # strictly interior to the obstacle
                out.append(Violation(k, "obstacle", depth))
                break
        caps = [
            r.v_max for r in zone_map.regions if contains(r.poly, pos, tol=tol)
        ]
        if caps:
            allowed = max(caps)
            if speed > allowed + tol:
                out.append(Violation(k, "zone_speed", speed - allowed))
        if schedule is not None:
            cap = schedule.cap_at(k)
            if speed > cap + tol:
                out.append(Violation(k, "schedule_speed", speed - cap))
    if u_bound is not None:
        for k, u in enumerate(inputs):
            mag = float(np.abs(u.as_array()).max())
            if mag > u_bound + tol:
                out.append(Violation(k, "input", mag - u_bound))
    return out


def region_index_at(zone_map: SpeedZoneMap, pos, tol: float = AUDIT_TOL) -> int:
    for i, r in enumerate(zone_map.regions):
        if contains(r.poly, pos, tol=tol):
            return i
    return -1


# ---------------------------------------------------------------------------
# Scenario files and result output


def load_scenario(path) -> Scenario:
    """Read a scenario JSON file; map/schedule paths resolve relative
    to the scenario file."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MapFormatError(f"{path}: not valid JSON: {exc}") from exc
    try:
        map_path = path.parent / doc["map"]
        map_spec = load_map(map_path)
        zone_map = build_partition(map_spec)
        sched_ref = doc.get("schedule")
        schedule = None
        if sched_ref not in (None, "none"):
            schedule = load_schedule(path.parent / sched_ref)
        x0 = State(*(float(v) for v in doc["x0"]))
        x_ref = State(*(float(v) for v in doc["x_ref"]))
        m = doc.get("mpc", {})
        cfg = MpcConfig(
            N=int(m.get("N", 25)),
            dt=float(m.get("dt", 1.0)),
            x_ref=x_ref,
            Q=np.diag(m["q_diag"]) if "q_diag" in m else np.eye(4),
            R=np.diag(m["r_diag"]) if "r_diag" in m else np.eye(2),
            u_bound=float(m.get("u_bound", 0.5)),
            soft_fallback=bool(m.get("soft_fallback", False)),
        )
        return Scenario(
            zone_map=zone_map,
            map_spec=map_spec,
            schedule=schedule,
            x0=x0,
            x_ref=x_ref,
            total_steps=int(doc["total_steps"]),
            mpc=cfg,
            arrival_radius=float(doc.get("arrival_radius", 0.5)),
            name=str(doc.get("name", path.stem)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MapFormatError):
            raise
        raise MapFormatError(f"{path}: bad scenario file: {exc}") from exc


TRAJECTORY_HEADER = [
    "step", "t_s", "x_m", "y_m", "vx_mps", "vy_mps",
    "ax_mps2", "ay_mps2", "region_idx",
]


def write_trajectory_csv(result: SimResult, scenario: Scenario, path) -> None:
    """One row per recorded state; the final row has no applied input
    and reports zero acceleration."""
    dt = scenario.mpc.dt
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k, s in enumerate(result.states):
            if k < len(result.inputs):
                ax, ay = result.inputs[k].ax, result.inputs[k].ay
            else:
                ax, ay = 0.0, 0.0
            w.writerow([
                k, k * dt, repr(s.x), repr(s.y), repr(s.vx), repr(s.vy),
                repr(ax), repr(ay),
                region_index_at(scenario.zone_map, s.position),
            ])


def write_violations_json(result: SimResult, path) -> None:
    doc = [
        {"step": v.step, "kind": v.kind, "magnitude": v.magnitude}
        for v in result.violations
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def summary_line(result: SimResult) -> str:
    arrival = result.arrival_step if result.arrived else "never"
    nodes = sum(s.get("nodes", 0) for s in result.per_step_stats)
    return (
        f"arrival_step={arrival} violations={len(result.violations)} "
        f"solver_nodes={nodes}"
    )
