"""Receding-horizon controller for the mobile print platform.

Assembles, at every control step, a mixed-integer QP over a double
integrator: quadratic tracking cost toward a goal state, per-step
velocity boxes from the print-task speed schedule, and a one-region-
per-step zone disjunction in big-M form. Solving it and applying the
first input gives speed-aware navigation that respects both the floor
map and the print schedule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasiblePlanError
from .geometry import bounding_box
from .gcode import SpeedSchedule
from .solver import (
    BnbConfig,
    MiqpProblem,
    QpProblem,
    SolveStatus,
    solve_miqp,
)
from .zones import BigMEncoding, SpeedZoneMap, encode_map

SOFT_PENALTY = 1e4


@dataclass(frozen=True)
class State:
    x: float
    y: float
    vx: float
    vy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "State":
        x, y, vx, vy = (float(v) for v in arr)
        return cls(x, y, vx, vy)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


@dataclass(frozen=True)
class ControlInput:
    ax: float
    ay: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ax, self.ay], dtype=float)


def make_dynamics(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete double-integrator matrices: position integrates velocity,
    velocity integrates acceleration, no cross-coupling."""
    A = np.eye(4)
    A[0, 2] = dt
    A[1, 3] = dt
    B = np.zeros((4, 2))
    B[2, 0] = dt
    B[3, 1] = dt
    return A, B


def dynamics_step(x: State, u: ControlInput, dt: float) -> State:
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B = make_dynamics(dt)
    return State.from_array(A @ x.as_array() + B @ u.as_array())


@dataclass(frozen=True)
class MpcConfig:
    N: int
    dt: float
    x_ref: State
    Q: np.ndarray = field(default_factory=lambda: np.eye(4))
    R: np.ndarray = field(default_factory=lambda: np.eye(2))
    u_bound: float = 0.5
    soft_fallback: bool = False
    abs_gap: float = 1e-3
    rel_gap: float = 0.15
    max_nodes: int = 40
    prune_unreachable: bool = True

    def __post_init__(self):
        if self.N < 1 or self.dt <= 0 or self.u_bound <= 0:
            raise ValueError("need N >= 1, dt > 0, u_bound > 0")
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.shape != (4, 4) or R.shape != (2, 2):
            raise ValueError("Q must be 4x4 and R 2x2")
        if np.abs(Q - Q.T).max() > 1e-12 or np.abs(R - R.T).max() > 1e-12:
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class ControlDecision:
    u0: ControlInput
    predicted_states: tuple[State, ...]
    objective: float
    solve_stats: dict
    active_region_sequence: tuple[int, ...]
    degraded: bool = False


@dataclass(frozen=True)
class MpcInstance:
    """One assembled horizon problem plus its decoding tables."""

    problem: MiqpProblem
    region_ids: tuple[tuple[int, ...], ...]  # kept regions per step 1..N
    N: int
    window: tuple[float, ...]
    vel_row_range: tuple[int, int]  # rows of A_in holding velocity boxes
    # per step, per kept region: indices of the region rows that
    # survived big-M screening (identity is stable across steps)
    live_rows: tuple[tuple[tuple[int, ...], ...], ...] = ()


def _reachable_window(x0: State, cfg: MpcConfig, window, v_global):
    """Per-step per-axis position intervals and velocity caps that no
    feasible trajectory can escape."""
    dt = cfg.dt
    pos1 = x0.position + dt * x0.velocity  # exact: step 1 is decided by x0
    lo = np.zeros((cfg.N + 1, 2))
    hi = np.zeros((cfg.N + 1, 2))
    vcap = np.zeros((cfg.N + 1, 2))
    lo[1] = hi[1] = pos1
    env1 = np.abs(x0.velocity) + dt * cfg.u_bound
    vcap[1] = np.minimum(np.minimum(v_global, window[1]), env1)
    rad = np.zeros(2)
    for k in range(2, cfg.N + 1):
        i = k - 1  # velocity step whose cap extends the radius
        env = np.abs(x0.velocity) + i * dt * cfg.u_bound
        cap = np.minimum(np.minimum(v_global, window[i]), env)
        rad = rad + dt * cap
        lo[k] = pos1 - rad
        hi[k] = pos1 + rad
        vcap[k] = np.minimum(
            np.minimum(v_global, window[k]),
            np.abs(x0.velocity) + k * dt * cfg.u_bound,
        )
    return lo, hi, vcap


def build_instance(
    x0: State,
    cfg: MpcConfig,
    schedule_window,
    encoding: BigMEncoding,
    region_bboxes=None,
    prune_unreachable: bool | None = None,
) -> MpcInstance:
    """Assemble the horizon problem for the measured state ``x0``.

    Decision variables are the predicted states x_1..x_N, the inputs
    u_0..u_{N-1}, and one binary per (step, candidate region); the
    measured x_0 is data and carries no region constraint. Regions
    provably unreachable at a step (their bounding box misses the
    velocity-capped reachable interval) are dropped from that step's
    candidate set, and big-M constants are tightened over the per-step
    reachable box; neither changes the optimum, only problem size and
    relaxation strength.
    """
    N = cfg.N
    window = [float(v) for v in schedule_window]
    if len(window) != N + 1:
        raise ValueError("schedule window must have N+1 entries")
    if prune_unreachable is None:
        prune_unreachable = cfg.prune_unreachable
    n_regions = encoding.n_regions
    v_global = encoding.v_global

    # candidate regions per step
    if prune_unreachable:
        if region_bboxes is None:
            region_bboxes = [bounding_box(r_poly) for r_poly in
                             (_position_poly(encoding, j) for j in range(n_regions))]
        ws_lo = encoding.workspace.lower
        ws_hi = encoding.workspace.upper

        def candidates(lo_k, hi_k):
            return [
                j for j, box in enumerate(region_bboxes)
                if np.all(box.lower <= hi_k + 1e-6)
                and np.all(box.upper >= lo_k - 1e-6)
            ]

        # two passes: the velocity cap at a step cannot exceed the
        # fastest zone reachable there, which shrinks the reach box,
        # which in turn shrinks the candidate sets
        lo, hi, vcap = _reachable_window(x0, cfg, window, v_global)
        for _pass in range(2):
            kept = []
            for k in range(1, N + 1):
                cand = candidates(lo[k], hi[k])
                kept.append(tuple(cand) if cand else tuple(range(n_regions)))
            caps = [
                max(encoding.regions[j].v_max for j in kj) for kj in kept
            ]
            pos1 = x0.position + cfg.dt * x0.velocity
            rad = np.zeros(2)
            for k in range(2, N + 1):
                i = k - 1
                env = np.abs(x0.velocity) + i * cfg.dt * cfg.u_bound
                cap = np.minimum(np.minimum(caps[i - 1], window[i]), env)
                rad = rad + cfg.dt * cap
                lo[k] = pos1 - rad
                hi[k] = pos1 + rad
                vcap[k] = np.minimum(
                    np.minimum(caps[k - 1], window[k]),
                    np.abs(x0.velocity) + k * cfg.dt * cfg.u_bound,
                )

        def step_big_m(k, j):
            # valid over reach-box_k intersected with the workspace
            p_lo = np.clip(np.maximum(lo[k], ws_lo), ws_lo, ws_hi)
            p_hi = np.clip(np.minimum(hi[k], ws_hi), ws_lo, ws_hi)
            center = np.concatenate([0.5 * (p_lo + p_hi), [0.0, 0.0]])
            half = np.concatenate([0.5 * (p_hi - p_lo), vcap[k]])
            reg = encoding.regions[j]
            sup = reg.A @ center + np.abs(reg.A) @ half
            return np.maximum(sup - reg.b, 0.0)
    else:
        kept = [tuple(range(n_regions))] * N

        def step_big_m(k, j):
            return encoding.big_m[j]

    nc = 6 * N
    A_dyn, B_dyn = make_dynamics(cfg.dt)
    Q, R = cfg.Q, cfg.R
    r = cfg.x_ref.as_array()

    H = np.zeros((nc, nc))
    f = np.zeros(nc)
    for k in range(1, N + 1):
        off = 4 * (k - 1)
        H[off:off + 4, off:off + 4] = 2.0 * Q
        f[off:off + 4] = -2.0 * Q @ r
    for k in range(N):
        off = 4 * N + 2 * k
        H[off:off + 2, off:off + 2] = 2.0 * R
    x0_arr = x0.as_array()
    obj_const = float((x0_arr - r) @ Q @ (x0_arr - r) + N * (r @ Q @ r))

    # dynamics equalities
    A_eq = np.zeros((4 * N, nc))
    b_eq = np.zeros(4 * N)
    for k in range(N):
        rows = slice(4 * k, 4 * k + 4)
        A_eq[rows, 4 * k:4 * k + 4] = np.eye(4)  # x_{k+1}
        if k > 0:
            A_eq[rows, 4 * (k - 1):4 * k] = -A_dyn
        A_eq[rows, 4 * N + 2 * k:4 * N + 2 * k + 2] = -B_dyn
        if k == 0:
            b_eq[rows] = A_dyn @ x0_arr

    # velocity boxes (schedule) and input boxes
    A_in = np.zeros((8 * N, nc))
    b_in = np.zeros(8 * N)
    row = 0
    vel_start = row
    for k in range(1, N + 1):
        off = 4 * (k - 1)
        for axis in (2, 3):
            for sgn in (1.0, -1.0):
                A_in[row, off + axis] = sgn
                b_in[row] = window[k]
                row += 1
    vel_end = row
    for k in range(N):
        off = 4 * N + 2 * k
        for axis in (0, 1):
            for sgn in (1.0, -1.0):
                A_in[row, off + axis] = sgn
                b_in[row] = cfg.u_bound
                row += 1

    # big-M zone rows, exactly-one groups, and aggregation cuts:
    # velocity and position must stay inside the zeta-weighted mix of
    # the candidate regions' caps and boxes. The cuts hold at every
    # integer assignment (there they reduce to the chosen region's own
    # rows), so they only strengthen the relaxation. A region row whose
    # tightened big-M is zero holds over the whole reachable box no
    # matter the assignment, so it is dropped outright.
    if region_bboxes is None:
        region_bboxes = [
            bounding_box(_position_poly(encoding, j)) for j in range(n_regions)
        ]
    n_bin = sum(len(kj) for kj in kept)
    row_Ac, row_Ab, row_bc = [], [], []
    groups = []
    live_rows = []
    bidx = 0
    for k in range(1, N + 1):
        off = 4 * (k - 1)
        group = []
        live_k = []
        for j in kept[k - 1]:
            reg = encoding.regions[j]
            m_vec = step_big_m(k, j)
            live = m_vec > 0
            live_k.append(tuple(int(i) for i in np.nonzero(live)[0]))
            m_live = int(live.sum())
            if m_live:
                blk_c = np.zeros((m_live, nc))
                blk_c[:, off:off + 4] = reg.A[live]
                blk_b = np.zeros((m_live, n_bin))
                blk_b[:, bidx] = m_vec[live]
                row_Ac.append(blk_c)
                row_Ab.append(blk_b)
                row_bc.append(reg.b[live] + m_vec[live])
            group.append(bidx)
            bidx += 1
        groups.append(tuple(group))
        live_rows.append(tuple(live_k))
        caps = np.array([encoding.regions[j].v_max for j in kept[k - 1]])
        box_lo = np.array([region_bboxes[j].lower for j in kept[k - 1]])
        box_hi = np.array([region_bboxes[j].upper for j in kept[k - 1]])
        cols = slice(group[0], group[-1] + 1)
        cut_c = np.zeros((8, nc))
        cut_b = np.zeros((8, n_bin))
        r = 0
        for axis, sgn in ((2, 1.0), (2, -1.0), (3, 1.0), (3, -1.0)):
            cut_c[r, off + axis] = sgn
            cut_b[r, cols] = -caps
            r += 1
        for axis in (0, 1):
            cut_c[r, off + axis] = 1.0  # pos <= mix of box uppers
            cut_b[r, cols] = -box_hi[:, axis]
            r += 1
            cut_c[r, off + axis] = -1.0  # -pos <= mix of -box lowers
            cut_b[r, cols] = box_lo[:, axis]
            r += 1
        row_Ac.append(cut_c)
        row_Ab.append(cut_b)
        row_bc.append(np.zeros(8))
    Ac = np.vstack(row_Ac)
    Ab = np.vstack(row_Ab)
    bc = np.concatenate(row_bc)

    base = QpProblem(H=H, f=f, A_in=A_in, b_in=b_in, A_eq=A_eq, b_eq=b_eq)
    problem = MiqpProblem(
        base=base, n_binary=n_bin, coupling_A_cont=Ac, coupling_A_bin=Ab,
        coupling_b=bc, groups=tuple(groups), obj_const=obj_const,
    )
    return MpcInstance(
        problem=problem, region_ids=tuple(kept), N=N, window=tuple(window),
        vel_row_range=(vel_start, vel_end), live_rows=tuple(live_rows),
    )


def _position_poly(encoding, j):
    from .geometry import HalfspacePolytope

    reg = encoding.regions[j]
    n_pos = reg.A.shape[0] - 4
    return HalfspacePolytope(reg.A[:n_pos, :2], reg.b[:n_pos])


def soften_instance(instance: MpcInstance) -> MpcInstance:
    """Relax zone and velocity rows with linearly penalized slacks.

    Dynamics, input bounds, and the exactly-one groups stay hard; each
    softened row gains its own nonnegative slack charged SOFT_PENALTY
    per unit of violation.
    """
    p = instance.problem
    base = p.base
    nc = base.n
    v0, v1 = instance.vel_row_range
    n_vel = v1 - v0
    n_cp = p.coupling_b.shape[0]
    n_s = n_vel + n_cp
    ns_total = nc + n_s

    H = np.zeros((ns_total, ns_total))
    H[:nc, :nc] = base.H
    f = np.concatenate([base.f, np.full(n_s, SOFT_PENALTY)])

    m_in = base.A_in.shape[0]
    A_in = np.zeros((m_in + n_s, ns_total))
    A_in[:m_in, :nc] = base.A_in
    for i in range(n_vel):  # velocity row i gets slack i
        A_in[v0 + i, nc + i] = -1.0
    A_in[m_in:, nc:] = -np.eye(n_s)  # slack >= 0
    b_in = np.concatenate([base.b_in, np.zeros(n_s)])

    A_eq = np.zeros((base.A_eq.shape[0], ns_total))
    A_eq[:, :nc] = base.A_eq

    Ac = np.zeros((n_cp, ns_total))
    Ac[:, :nc] = p.coupling_A_cont
    Ac[:, nc + n_vel:] = -np.eye(n_cp)

    soft_base = QpProblem(H=H, f=f, A_in=A_in, b_in=b_in,
                          A_eq=A_eq, b_eq=base.b_eq)
    soft = MiqpProblem(
        base=soft_base, n_binary=p.n_binary, coupling_A_cont=Ac,
        coupling_A_bin=p.coupling_A_bin, coupling_b=p.coupling_b,
        groups=p.groups, obj_const=p.obj_const,
    )
    return MpcInstance(
        problem=soft, region_ids=instance.region_ids, N=instance.N,
        window=instance.window, vel_row_range=instance.vel_row_range,
    )


def _row_tags(instance: MpcInstance, encoding: BigMEncoding):
    """Symbolic identity of every constraint row of an instance, in the
    solver's canonical stacking order. Used to shift dual vectors
    between consecutive horizon problems."""
    N = instance.N
    tags = []
    for k in range(1, N + 1):
        tags += [("vel", k, i) for i in range(4)]
    for k in range(N):
        tags += [("inp", k, i) for i in range(4)]
    for k in range(1, N + 1):
        for idx, j in enumerate(instance.region_ids[k - 1]):
            rows = instance.live_rows[k - 1][idx]
            tags += [("reg", k, j, i) for i in rows]
        tags += [("cut", k, i) for i in range(8)]
    for k in range(1, N + 1):
        tags += [("bnd", k, j) for j in instance.region_ids[k - 1]]
    for k in range(N):
        tags += [("dyn", k, i) for i in range(4)]
    tags += [("grp", k) for k in range(1, N + 1)]
    return tags


def _shift_tag(tag, max_k):
    """The previous-horizon row that plays this row's role one step on."""
    kind, k = tag[0], tag[1]
    return (kind, min(k + 1, max_k)) + tag[2:]


class Controller:
    """Receding-horizon planner over one map, schedule, and config.

    One instance owns its warm-start cache and must be driven by a
    single logical execution stream; distinct instances are fully
    independent.
    """

    def __init__(
        self,
        zone_map: SpeedZoneMap,
        schedule: SpeedSchedule | None,
        config: MpcConfig,
        v_global: float | None = None,
    ):
        self.zone_map = zone_map
        self.schedule = schedule
        self.cfg = config
        self.encoding = encode_map(zone_map, v_global)
        self.region_bboxes = [bounding_box(r.poly) for r in zone_map.regions]
        self._prev: ControlDecision | None = None
        self._prev_inputs: list[np.ndarray] | None = None
        self._prev_instance: MpcInstance | None = None
        self._prev_sol = None  # MiqpSolution of the previous step

    @property
    def v_global(self) -> float:
        return self.encoding.v_global

    def schedule_window(self, k_global: int) -> list[float]:
        """Speed caps for horizon offsets 0..N at global step k_global.

        Entries past the end of the schedule extend the final task's
        limit; with no schedule at all the cap is the global maximum.
        """
        N = self.cfg.N
        if self.schedule is None:
            return [self.v_global] * (N + 1)
        return [
            min(self.schedule.cap_at(k_global + i), self.v_global)
            for i in range(N + 1)
        ]

    def step(self, x0: State, k_global: int) -> ControlDecision:
        """Plan from the measured state and return the first input."""
        cfg = self.cfg
        window = self.schedule_window(k_global)
        instance = build_instance(
            x0, cfg, window, self.encoding, region_bboxes=self.region_bboxes,
        )
        warm_z, warm_assignment = self._warm_start(instance, x0)
        warm_seed_y, warm_root = self._shift_warm_duals(instance)
        bnb = BnbConfig(abs_gap=cfg.abs_gap, max_nodes=cfg.max_nodes,
                        rel_gap=cfg.rel_gap)
        t0 = time.perf_counter()
        sol = solve_miqp(instance.problem, bnb,
                         warm_assignment=warm_assignment, warm_z=warm_z,
                         warm_seed_y=warm_seed_y, warm_root=warm_root,
                         warm_trusted=self._prev is not None)
        degraded = False
        if sol.status == SolveStatus.INFEASIBLE:
            if not cfg.soft_fallback:
                raise InfeasiblePlanError(
                    f"no admissible plan at step {k_global}",
                    diagnostics={
                        "k_global": k_global,
                        "x0": x0.as_array().tolist(),
                        "window": list(window),
                        "n_regions_per_step": [
                            len(g) for g in instance.region_ids
                        ],
                    },
                )
            soft = soften_instance(instance)
            sol = solve_miqp(soft.problem, bnb)
            degraded = True
            if sol.status == SolveStatus.INFEASIBLE:
                raise InfeasiblePlanError(
                    f"soft fallback infeasible at step {k_global}",
                    diagnostics={"k_global": k_global},
                )
        if sol.z is None:
            raise InfeasiblePlanError(
                f"solver returned no usable plan at step {k_global} "
                f"(status {sol.status.value})",
                diagnostics={"k_global": k_global, "status": sol.status.value},
            )
        wall = time.perf_counter() - t0

        decision = self._decode(instance, sol, x0, degraded, wall)
        self._prev = decision
        N = instance.N
        self._prev_inputs = [
            sol.z[4 * N + 2 * k:4 * N + 2 * k + 2].copy() for k in range(N)
        ]
        self._prev_instance = instance
        self._prev_sol = sol if not degraded else None
        return decision

    def _decode(self, instance, sol, x0, degraded, wall) -> ControlDecision:
        N = instance.N
        z = sol.z
        inputs = [
            ControlInput(float(z[4 * N + 2 * k]), float(z[4 * N + 2 * k + 1]))
            for k in range(N)
        ]
        states = [x0]
        for u in inputs:  # rollout: dynamics hold exactly by construction
            states.append(dynamics_step(states[-1], u, self.cfg.dt))
        regions = []
        b = 0
        for k in range(N):
            ids = instance.region_ids[k]
            vals = sol.binaries[b:b + len(ids)]
            regions.append(int(ids[int(np.argmax(vals))]))
            b += len(ids)
        stats = {
            "nodes": sol.nodes,
            "qp_iters": sol.qp_iterations,
            "wall_time": wall,
            "status": sol.status.value,
            "kkt_residual": sol.kkt_residual,
        }
        return ControlDecision(
            u0=inputs[0],
            predicted_states=tuple(states),
            objective=sol.objective,
            solve_stats=stats,
            active_region_sequence=tuple(regions),
            degraded=degraded,
        )

    def _warm_start(self, instance, x0: State):
        """Shift the previous solution one step, duplicating the tail."""
        prev = self._prev
        if prev is None or len(prev.predicted_states) != instance.N + 1:
            return None, self._stay_home_assignment(instance, x0)
        N = instance.N
        states = list(prev.predicted_states[2:]) + [prev.predicted_states[-1]]
        inputs = list(self._prev_inputs[1:]) + [np.zeros(2)]
        warm = np.zeros(6 * N + instance.problem.n_binary)
        for k, s in enumerate(states[:N]):
            warm[4 * k:4 * k + 4] = s.as_array()
        for k, u in enumerate(inputs[:N]):
            warm[4 * N + 2 * k:4 * N + 2 * k + 2] = u

        shifted_regions = list(prev.active_region_sequence[1:])
        shifted_regions.append(prev.active_region_sequence[-1])
        assignment = np.zeros(instance.problem.n_binary, dtype=np.int8)
        b = 0
        ok = True
        for k in range(N):
            ids = instance.region_ids[k]
            want = shifted_regions[k]
            if want in ids:
                assignment[b + ids.index(want)] = 1
                warm[6 * N + b + ids.index(want)] = 1.0
            else:
                ok = False
            b += len(ids)
        return warm, (assignment if ok else None)

    def _shift_warm_duals(self, instance):
        """Shift the previous step's dual vectors onto the new row set.

        Rows keep their (kind, step, region) identity between horizons,
        so the dual of row (kind, k+1, ...) from the previous solve is
        the natural seed for row (kind, k, ...) now; rows with no
        predecessor start at zero."""
        prev_sol = self._prev_sol
        prev_inst = self._prev_instance
        if prev_sol is None or prev_inst is None \
                or prev_inst.N != instance.N:
            return None, None
        prev_tags = _row_tags(prev_inst, self.encoding)
        new_tags = _row_tags(instance, self.encoding)
        prev_index = {t: i for i, t in enumerate(prev_tags)}

        def shift(zy, z_new):
            if zy is None:
                return None
            _, y_prev = zy
            if y_prev.shape[0] != len(prev_tags):
                return None
            y_new = np.zeros(len(new_tags))
            for r, tag in enumerate(new_tags):
                cap = instance.N - 1 if tag[0] in ("inp", "dyn") else instance.N
                src = prev_index.get(_shift_tag(tag, cap))
                if src is not None:
                    y_new[r] = y_prev[src]
            return (z_new, y_new)

        seed = shift(prev_sol.incumbent_zy, None)
        warm_seed_y = seed[1] if seed else None
        root = None
        if prev_sol.root_zy is not None:
            root_z = self._shift_z(instance, prev_sol.root_zy[0], prev_inst)
            root = shift(prev_sol.root_zy, root_z)
        return warm_seed_y, root

    def _shift_z(self, instance, z_prev, prev_inst):
        """Shift a full primal vector (states, inputs, binaries)."""
        N = instance.N
        z = np.zeros(6 * N + instance.problem.n_binary)
        for k in range(N):
            src = min(k + 1, N - 1)
            z[4 * k:4 * k + 4] = z_prev[4 * src:4 * src + 4]
        for k in range(N):
            src = min(k + 1, N - 1)
            z[4 * N + 2 * k:4 * N + 2 * k + 2] = \
                z_prev[4 * N + 2 * src:4 * N + 2 * src + 2]
        prev_pos = {}
        b = 0
        for k, ids in enumerate(prev_inst.region_ids):
            for j in ids:
                prev_pos[(k + 1, j)] = b
                b += 1
        b = 0
        for k, ids in enumerate(instance.region_ids):
            for j in ids:
                src = prev_pos.get((min(k + 2, prev_inst.N), j))
                if src is not None:
                    z[6 * N + b] = z_prev[6 * prev_inst.N + src]
                b += 1
        return z

    def _stay_home_assignment(self, instance, x0: State):
        """Seed for a cold start: hold the region the robot stands in."""
        from .geometry import contains

        home = None
        for j, r in enumerate(self.zone_map.regions):
            if contains(r.poly, x0.position, tol=1e-7):
                home = j
                break
        if home is None:
            return None
        assignment = np.zeros(instance.problem.n_binary, dtype=np.int8)
        b = 0
        for ids in instance.region_ids:
            if home not in ids:
                return None
            assignment[b + ids.index(home)] = 1
            b += len(ids)
        return assignment
