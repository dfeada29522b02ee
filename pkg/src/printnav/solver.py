"""Convex QP solver and mixed-integer branch and bound.

``solve_qp`` runs operator-splitting (ADMM) iterations on the two-sided
form ``l <= C z <= u`` with a fixed per-row penalty, restarting with a
rescaled penalty when the primal and dual residuals drift apart, and
then polishes the iterate with an active-set KKT solve so that returned
solutions meet tight stationarity, feasibility, and complementarity
residuals. Infeasibility is reported, never repaired.

``solve_miqp`` is a best-first branch and bound over binary variables
organized into exactly-one groups (one region choice per time step).
It branches on the most fractional binary within the earliest group,
fixing a binary to 1 zeros its group siblings, and prunes against the
incumbent with an absolute gap. All node relaxations share a single
matrix factorization because only bound entries differ between nodes.

Everything here is deterministic: fixed iteration rules, no randomness,
no wall-clock dependence.
"""

from __future__ import annotations

import enum
import heapq
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import lp

_SIGMA = 1e-6
_RHO0 = 1.0
_RHO_EQ_SCALE = 1e3
_ALPHA = 1.6
_CHECK_EVERY = 25
_RESTART_EVERY = 400
_MAX_REFACTORS = 3
_PINF_TOL = 1e-7
# exact simplex feasibility cross-check is worth it below this size
_SIMPLEX_CONFIRM_CELLS = 20_000


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 z'Hz + f'z  s.t.  A_in z <= b_in, A_eq z = b_eq."""

    H: np.ndarray
    f: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.f).shape[0]
        H = np.asarray(self.H, dtype=float)
        if H.shape != (n, n):
            raise ValueError("H must be n-by-n")
        if np.abs(H - H.T).max(initial=0.0) > 1e-12:
            raise ValueError("H must be symmetric (within 1e-12)")
        for name, A, b, cols in (
            ("A_in", self.A_in, self.b_in, n),
            ("A_eq", self.A_eq, self.b_eq, n),
        ):
            A = np.asarray(A, dtype=float)
            b = np.asarray(b, dtype=float)
            if A.ndim != 2 or A.shape[1] != cols or A.shape[0] != b.shape[0]:
                raise ValueError(f"{name} has inconsistent shape")
        for name, arr in (
            ("H", self.H), ("f", self.f), ("A_in", self.A_in),
            ("b_in", self.b_in), ("A_eq", self.A_eq), ("b_eq", self.b_eq),
        ):
            a = np.asarray(arr, dtype=float)
            if a.size and not np.isfinite(a).all():
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    duals_in: np.ndarray
    duals_eq: np.ndarray
    status: SolveStatus
    kkt_residual: float
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class MiqpProblem:
    """A QP over continuous variables plus big-M coupled binaries.

    Coupling rows read ``A_cont z + A_bin zeta <= b``; every binary has
    bounds [0, 1] in the relaxation and belongs to exactly one group
    whose members must sum to 1.
    """

    base: QpProblem
    n_binary: int
    coupling_A_cont: np.ndarray
    coupling_A_bin: np.ndarray
    coupling_b: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    obj_const: float = 0.0

    def __post_init__(self):
        seen = [0] * self.n_binary
        for g in self.groups:
            for i in g:
                if not 0 <= i < self.n_binary:
                    raise ValueError("group index out of range")
                seen[i] += 1
        if self.n_binary and any(c != 1 for c in seen):
            raise ValueError("every binary must be in exactly one group")
        mc = np.asarray(self.coupling_b).shape[0]
        Ac = np.asarray(self.coupling_A_cont, dtype=float)
        Ab = np.asarray(self.coupling_A_bin, dtype=float)
        if Ac.shape != (mc, self.base.n) or Ab.shape != (mc, self.n_binary):
            raise ValueError("coupling blocks have inconsistent shapes")
        for name in ("coupling_A_cont", "coupling_A_bin", "coupling_b"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))


@dataclass(frozen=True)
class BnbConfig:
    abs_gap: float = 1e-6
    max_nodes: int = 5000
    relax_tol: float = 1e-6
    rel_gap: float = 0.0  # optional relative gap on top of abs_gap

    def __post_init__(self):
        if self.abs_gap < 0 or self.max_nodes < 1 or self.rel_gap < 0:
            raise ValueError("gaps must be >= 0 and max_nodes >= 1")


@dataclass(frozen=True)
class MiqpSolution:
    z: np.ndarray | None
    binaries: np.ndarray | None
    status: SolveStatus
    objective: float
    bound: float
    root_bound: float
    nodes: int
    qp_iterations: int
    kkt_residual: float
    # full primal/dual vectors for warm-starting a related solve
    incumbent_zy: tuple | None = None
    root_zy: tuple | None = None


# ---------------------------------------------------------------------------
# ADMM core on  min 0.5 z'Hz + f'z  s.t.  l <= C z <= u


@dataclass
class _RawSolution:
    z: np.ndarray
    y: np.ndarray
    status: SolveStatus
    iterations: int
    kkt_residual: float
    objective: float


def _norm_inf(v):
    return float(np.abs(v).max(initial=0.0))


class _PreparedQp:
    """Shared state for repeated solves that differ only in (l, u)."""

    def __init__(self, H, f, C, eq_mask):
        self.H = np.asarray(H, dtype=float)
        self.f = np.asarray(f, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.eq_mask = np.asarray(eq_mask, dtype=bool)
        self.n = self.f.shape[0]
        self.m = self.C.shape[0]
        self._equilibrate()
        self.rho0 = _RHO0
        # base penalty and factorization; never mutated after this, so
        # concurrent node solves can share them safely
        self.rho = np.where(self.eq_mask, _RHO0 * _RHO_EQ_SCALE, _RHO0)
        self.chol = self._factor(self.rho)

    def _equilibrate(self, iters=10):
        """Modified Ruiz scaling of the KKT data plus cost normalization.

        Iterates on z_hat = z / D with constraints E C D z_hat and cost
        c * (D H D, D f); duals map back as y = E y_hat / c.
        """
        n, m = self.n, self.m
        D = np.ones(n)
        E = np.ones(m)
        c_scale = 1.0
        Hs = self.H.copy()
        fs = self.f.copy()
        Cs = self.C.copy()
        for _ in range(iters):
            col = np.abs(Hs).max(axis=0, initial=0.0)
            if m:
                col = np.maximum(col, np.abs(Cs).max(axis=0))
            d = 1.0 / np.sqrt(np.where(col > 1e-12, col, 1.0))
            row = np.abs(Cs).max(axis=1, initial=0.0) if m else np.ones(0)
            e = 1.0 / np.sqrt(np.where(row > 1e-12, row, 1.0))
            Hs = Hs * d[:, None] * d[None, :]
            fs = fs * d
            if m:
                Cs = Cs * d[None, :] * e[:, None]
            D *= d
            E *= e
            col_h = np.abs(Hs).max(axis=0, initial=0.0)
            gamma = max(float(col_h.mean()) if n else 0.0, _norm_inf(fs))
            if gamma > 1e-12:
                g = 1.0 / gamma
                Hs *= g
                fs *= g
                c_scale *= g
        self.Hs, self.fs, self.Cs = Hs, fs, Cs
        self.D, self.E, self.c_scale = D, E, c_scale

    def _factor(self, rho):
        K = self.Hs + _SIGMA * np.eye(self.n)
        if self.m:
            K = K + self.Cs.T @ (rho[:, None] * self.Cs)
        return scipy.linalg.cho_factor(K, lower=True, check_finite=False)

    def objective(self, z):
        return float(0.5 * z @ self.H @ z + self.f @ z)

    def solve(self, l, u, warm=None, tol=1e-7, max_iter=10000):
        l = np.asarray(l, dtype=float)
        u = np.asarray(u, dtype=float)
        if np.any(l > u + 1e-12):
            return _RawSolution(
                np.zeros(self.n), np.zeros(self.m), SolveStatus.INFEASIBLE,
                0, np.inf, np.inf,
            )
        z = np.zeros(self.n) if warm is None else np.array(warm[0], dtype=float)
        y = np.zeros(self.m) if warm is None or warm[1] is None else np.array(
            warm[1], dtype=float
        )
        total_iters = 0
        confirmed_feasible = False
        if warm is not None:
            # a good iterate usually pins the active set up to a few
            # repairs, and a verified KKT point is already optimal;
            # without duals the slacks alone still seed the detection
            rounds = 8 if warm[1] is not None else 10
            polished = self._polish(l, u, z, y, tol, max_rounds=rounds)
            if polished is not None:
                zp, yp, res = polished
                return _RawSolution(
                    zp, yp, SolveStatus.OPTIMAL, 0, res, self.objective(zp)
                )
        # short stages with a polish attempt after each: the refiner
        # usually finishes the job long before the splitting converges.
        # Early attempts get few repair rounds; only late ones dig in.
        # Budgeted solves (tree nodes) get a lean ladder so a stubborn
        # node fails fast and is retried only if it ever matters again.
        if max_iter > 4000:
            schedule = [
                (max(1e-5, tol * 100), min(150, max_iter), 12),
                (max(1e-5, tol * 100), min(600, max_iter), 20),
                (max(1e-6, tol * 10), min(2500, max_iter), 30),
                (max(1e-8, tol), max_iter, 60),
            ]
        else:
            schedule = [
                (max(1e-5, tol * 100), min(150, max_iter), 8),
                (max(1e-6, tol * 10), min(700, max_iter), 12),
                (max(1e-8, tol), max_iter, 18),
            ]
        hit_limit = False
        for eps, budget, rounds in schedule:
            z, y, status, iters = self._admm(l, u, z, y, eps, budget)
            total_iters += iters
            if status == SolveStatus.INFEASIBLE:
                if confirmed_feasible or not self._small():
                    return _RawSolution(z, y, status, total_iters, np.inf, np.inf)
                feasible, point = self._simplex_feasible(l, u)
                if not feasible:
                    return _RawSolution(z, y, status, total_iters, np.inf, np.inf)
                confirmed_feasible = True
                z = point  # certificate was spurious; restart from a feasible z
                y = np.zeros(self.m)
                continue
            polished = self._polish(l, u, z, y, tol, max_rounds=rounds)
            if polished is not None:
                zp, yp, res = polished
                return _RawSolution(
                    zp, yp, SolveStatus.OPTIMAL, total_iters, res,
                    self.objective(zp),
                )
            if status == SolveStatus.ITER_LIMIT:
                hit_limit = True
        if self._small():
            feasible, point = self._simplex_feasible(l, u)
            if not feasible:
                return _RawSolution(
                    z, y, SolveStatus.INFEASIBLE, total_iters, np.inf, np.inf
                )
        res = self._kkt_residual(l, u, z, y)
        status = SolveStatus.OPTIMAL if res <= tol else SolveStatus.ITER_LIMIT
        if not hit_limit and status != SolveStatus.OPTIMAL:
            status = SolveStatus.ITER_LIMIT
        return _RawSolution(z, y, status, total_iters, res, self.objective(z))

    # -- pieces

    def _small(self):
        return self.m * max(self.n, 1) <= _SIMPLEX_CONFIRM_CELLS

    def _simplex_feasible(self, l, u):
        rows, offs = [], []
        for i in range(self.m):
            if np.isfinite(u[i]):
                rows.append(self.C[i])
                offs.append(u[i])
            if np.isfinite(l[i]):
                rows.append(-self.C[i])
                offs.append(-l[i])
        if not rows:
            return True, np.zeros(self.n)
        feasible, x = lp.feasible_point(np.array(rows), np.array(offs))
        return feasible, x

    def _admm(self, l, u, z, y, eps, max_iter):
        # iterate entirely in the equilibrated space
        ls = self.E * l
        us = self.E * u
        zh = z / self.D
        yh = self.c_scale * y / self.E if self.m else np.zeros(0)
        Cs, Hs, fs = self.Cs, self.Hs, self.fs
        rho, chol = self.rho, self.chol  # solve-local; restarts stay local
        w = np.clip(Cs @ zh, ls, us) if self.m else np.zeros(0)
        y_prev = yh.copy()
        cert_streak = 0
        refactors = 0
        best_score = np.inf
        best_it = 0
        it = 0
        while it < max_iter:
            it += 1
            rhs = _SIGMA * zh - fs + (Cs.T @ (rho * w - yh) if self.m else 0.0)
            zt = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
            if self.m:
                Czt = Cs @ zt
                w_prev = w
                w_arg = _ALPHA * Czt + (1 - _ALPHA) * w_prev + yh / rho
                w = np.clip(w_arg, ls, us)
                yh = yh + rho * (_ALPHA * Czt + (1 - _ALPHA) * w_prev - w)
            zh = _ALPHA * zt + (1 - _ALPHA) * zh
            if it % _CHECK_EVERY:
                continue
            Cz = Cs @ zh if self.m else np.zeros(0)
            rp = _norm_inf(Cz - w)
            rd = _norm_inf(Hs @ zh + fs + (Cs.T @ yh if self.m else 0.0))
            sp = max(_norm_inf(Cz), _norm_inf(w))
            sd = max(_norm_inf(Hs @ zh), _norm_inf(Cs.T @ yh) if self.m else 0.0,
                     _norm_inf(fs))
            if rp <= eps + eps * sp and rd <= eps + eps * sd:
                break
            score = rp / max(sp, 1e-10) + rd / max(sd, 1e-10)
            if score < 0.67 * best_score:
                best_score = score
                best_it = it
            elif it - best_it > 600:
                break  # plateaued: hand over to the polish step
            dy = yh - y_prev
            y_prev = yh.copy()
            if self._is_pinf_certificate(dy, ls, us):
                cert_streak += 1
                if cert_streak >= 3:
                    return (self.D * zh, self.E * yh / self.c_scale,
                            SolveStatus.INFEASIBLE, it)
            else:
                cert_streak = 0
            if it % _RESTART_EVERY == 0 and refactors < _MAX_REFACTORS:
                rp_rel = rp / max(sp, 1e-10)
                rd_rel = rd / max(sd, 1e-10)
                ratio = np.sqrt(rp_rel / max(rd_rel, 1e-14))
                ratio = float(np.clip(ratio, 0.2, 5.0))
                if ratio < 0.25 or ratio > 4.0:
                    rho = np.clip(rho * ratio, self.rho0 * 1e-2,
                                  self.rho0 * 1e2)
                    chol = self._factor(rho)
                    refactors += 1
        status = SolveStatus.ITER_LIMIT if it >= max_iter else SolveStatus.OPTIMAL
        return self.D * zh, self.E * yh / self.c_scale, status, it

    def _is_pinf_certificate(self, dy, ls, us):
        ndy = _norm_inf(dy)
        if ndy <= 1e-12:
            return False
        d = dy / ndy
        if _norm_inf(self.Cs.T @ d) > 1e-9:
            return False
        pos = d > _PINF_TOL
        neg = d < -_PINF_TOL
        if np.any(pos & ~np.isfinite(us)) or np.any(neg & ~np.isfinite(ls)):
            return False
        support = float(np.sum(us[pos] * d[pos]) + np.sum(ls[neg] * d[neg]))
        return support < -1e-5

    def _eq_effective(self, l, u):
        """Structural equalities plus rows pinned by equal bounds."""
        pinned = np.isfinite(l) & np.isfinite(u) & (u - l <= 1e-12)
        return self.eq_mask | pinned

    def _kkt_residual(self, l, u, z, y):
        Cz = self.C @ z if self.m else np.zeros(0)
        r_stat = _norm_inf(self.H @ z + self.f + (self.C.T @ y if self.m else 0.0))
        if not self.m:
            return r_stat
        fin_u = np.isfinite(u)
        fin_l = np.isfinite(l)
        r_prim = max(
            _norm_inf(np.maximum(Cz[fin_u] - u[fin_u], 0.0)),
            _norm_inf(np.maximum(l[fin_l] - Cz[fin_l], 0.0)),
        )
        ineq = ~self._eq_effective(l, u)
        y_pos = ineq & (y > 0)
        y_neg = ineq & (y < 0)
        r_comp = max(
            _norm_inf(y[y_pos & fin_u] * (u[y_pos & fin_u] - Cz[y_pos & fin_u])),
            _norm_inf(y[y_neg & fin_l] * (Cz[y_neg & fin_l] - l[y_neg & fin_l])),
        )
        r_sign = max(
            _norm_inf(y[y_pos & ~fin_u]),
            _norm_inf(y[y_neg & ~fin_l]),
        )
        return max(r_stat, r_prim, r_comp, r_sign)

    def _polish(self, l, u, z, y, tol, max_rounds=120):
        """Active-set KKT refinement seeded by the splitting iterate.

        The candidate active set from a loosely converged iterate is
        over-inclusive and usually rank-deficient, so rows are enforced
        in priority order (equalities, then rows a repair round proved
        necessary, then dual-supported rows, then slack detections) and
        only a linearly independent subset enters the KKT solve; the
        spurious members then lose every conflict. Repair adds violated
        rows at boosted priority and releases wrong-sign multipliers
        one at a time, most negative first.
        """
        if self.m == 0:
            zp, _, _, _ = np.linalg.lstsq(self.H, -self.f, rcond=None)
            res = _norm_inf(self.H @ zp + self.f)
            return (zp, np.zeros(0), res) if res <= tol else None
        eq = self._eq_effective(l, u)
        Cz = self.C @ z
        y_eps = 1e-7 * max(1.0, _norm_inf(y))
        scale_u = 1.0 + np.abs(np.where(np.isfinite(u), u, 0.0))
        scale_l = 1.0 + np.abs(np.where(np.isfinite(l), l, 0.0))
        at_upper = np.isfinite(u) & ~eq & (
            (u - Cz <= 1e-7 * scale_u) | (y > y_eps)
        )
        at_lower = np.isfinite(l) & ~eq & (
            (Cz - l <= 1e-7 * scale_l) | (y < -y_eps)
        )
        both = at_upper & at_lower
        closer_low = (Cz - l) < (u - Cz)
        at_upper[both & closer_low] = False
        at_lower[both & ~closer_low] = False
        at_upper[eq] = True
        boosted = np.zeros(self.m, dtype=bool)
        dual_rank = -np.abs(y)  # sort key: strong duals first

        # the equality block heads the priority order in every round, so
        # its orthogonal basis is computed once and extended per round
        eq_idx = np.nonzero(eq)[0]
        eq_basis = _GreedyBasis(self.n)
        eq_sel = eq_basis.extend(self.C[eq_idx])
        idx_eq = eq_idx[eq_sel]

        seen = set()
        for _round in range(max_rounds):
            key = (at_upper.tobytes(), at_lower.tobytes(), boosted.tobytes())
            if key in seen:
                return None
            seen.add(key)
            active = (at_upper | at_lower) & ~eq
            idx = np.nonzero(active)[0]
            # priority: boosted rows, then by dual magnitude
            order = np.lexsort((idx, dual_rank[idx], ~boosted[idx]))
            idx = idx[order]
            basis = eq_basis.copy()
            sel = basis.extend(self.C[idx])
            idx_sel = np.concatenate([idx_eq, idx[sel]]).astype(int)
            E = self.C[idx_sel]
            d = np.where(at_upper[idx_sel], u[idx_sel], l[idx_sel])
            zp, nu = self._kkt_solve(E, d)
            if zp is None:
                return None
            yp = np.zeros(self.m)
            yp[idx_sel] = nu
            res = self._kkt_residual(l, u, zp, yp)
            if res <= tol:
                return zp, yp, res
            Czp = self.C @ zp
            over_u = np.where(np.isfinite(u), Czp - u, -np.inf)
            over_l = np.where(np.isfinite(l), l - Czp, -np.inf)
            over_u[at_upper] = -np.inf
            over_l[at_lower] = -np.inf
            worst_viol = max(over_u.max(initial=-np.inf),
                             over_l.max(initial=-np.inf))
            if worst_viol > tol * 0.5:
                # one pivot at a time: bulk additions displace the
                # whole working set and the iteration explodes
                if over_u.max(initial=-np.inf) >= worst_viol:
                    row = int(np.argmax(over_u))
                    at_upper[row] = True
                    at_lower[row] = False
                else:
                    row = int(np.argmax(over_l))
                    at_lower[row] = True
                    at_upper[row] = False
                boosted[row] = True
                continue
            sign_tol = max(1e-9, 1e-9 * _norm_inf(yp))
            wrong = np.where(at_upper & ~eq, -yp, 0.0)
            wrong = np.maximum(wrong, np.where(at_lower & ~eq, yp, 0.0))
            worst = float(wrong.max(initial=0.0))
            if worst <= sign_tol:
                return None  # KKT-consistent yet above tol: numerics
            # releasing constraints is safe in bulk (unlike adding)
            drop = wrong > sign_tol
            at_upper[drop] = False
            at_lower[drop] = False
            boosted[drop] = False
        return None

    def _kkt_solve(self, E, d):
        """Solve the equality-constrained KKT system.

        The system is singular whenever the objective has flat
        directions the active rows do not pin, but it stays consistent,
        so a quasi-definite regularization plus iterative refinement
        against the unregularized matrix recovers an exact solution;
        dense lstsq is kept as a last resort.
        """
        ma = E.shape[0]
        nn = self.n + ma
        K = np.zeros((nn, nn))
        K[: self.n, : self.n] = self.H
        K[: self.n, self.n:] = E.T
        K[self.n:, : self.n] = E
        rhs = np.concatenate([-self.f, d])
        scale = 1.0 + _norm_inf(rhs)
        diag = np.arange(nn)
        Kreg = K.copy()
        Kreg[diag[: self.n], diag[: self.n]] += 1e-9
        Kreg[diag[self.n:], diag[self.n:]] -= 1e-9
        try:
            lu = scipy.linalg.lu_factor(Kreg, check_finite=False)
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            best = None
            best_rn = np.inf
            for _ in range(12):
                r = rhs - K @ sol
                rn = _norm_inf(r)
                if rn < best_rn:
                    best, best_rn = sol.copy(), rn
                if rn <= 1e-14 * scale:
                    break
                sol = sol + scipy.linalg.lu_solve(lu, r, check_finite=False)
            if best_rn > 1e-9 * scale:
                raise scipy.linalg.LinAlgError
            sol = best
        except (scipy.linalg.LinAlgError, ValueError):
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if not np.isfinite(sol).all():
                return None, None
        return sol[: self.n], sol[self.n:]


class _GreedyBasis:
    """Growing orthonormal row basis with greedy independence checks.

    Earlier rows win ties, so callers encode priority by feed order.
    ``copy`` is cheap enough to snapshot a shared prefix.
    """

    def __init__(self, n, tol=1e-9):
        self.n = n
        self.tol = tol
        self.Q = np.empty((n, n))
        self.r = 0

    def copy(self):
        other = _GreedyBasis(self.n, self.tol)
        other.Q = self.Q.copy()
        other.r = self.r
        return other

    def extend(self, M):
        """Feed rows in order; returns indices of the accepted ones."""
        sel: list[int] = []
        for i in range(M.shape[0]):
            if self.r == self.n:
                break
            nrm0 = np.linalg.norm(M[i])
            if nrm0 <= self.tol:
                continue
            v = M[i] / nrm0
            Q = self.Q[: self.r]
            if self.r:
                v = v - Q.T @ (Q @ v)
            nrm = np.linalg.norm(v)
            if nrm > self.tol:
                if nrm < 1e-4:  # re-orthogonalize when cancellation bites
                    v = v - Q.T @ (Q @ v)
                    nrm = np.linalg.norm(v)
                    if nrm <= self.tol:
                        continue
                self.Q[self.r] = v / nrm
                sel.append(i)
                self.r += 1
        return np.array(sel, dtype=int)


def _independent_rows(M, tol=1e-9):
    """Indices of a maximal independent row subset, greedy in order."""
    basis = _GreedyBasis(M.shape[1], tol)
    return basis.extend(M)


def _canonical(p: QpProblem):
    m_in = p.A_in.shape[0]
    m_eq = p.A_eq.shape[0]
    C = np.vstack([p.A_in, p.A_eq]) if (m_in + m_eq) else np.zeros((0, p.n))
    l = np.concatenate([np.full(m_in, -np.inf), p.b_eq])
    u = np.concatenate([p.b_in, p.b_eq])
    eq_mask = np.concatenate(
        [np.zeros(m_in, dtype=bool), np.ones(m_eq, dtype=bool)]
    )
    return C, l, u, eq_mask


def solve_qp(p: QpProblem, tol: float = 1e-7, warm=None,
             max_iter: int = 10000) -> QpSolution:
    """Solve a convex QP to the requested KKT residual.

    Returns INFEASIBLE when infeasibility is proven (exactly, via the
    simplex kernel, for small problems; via the divergence certificate
    otherwise) and ITER_LIMIT with the best iterate attached when the
    budget runs out first.
    """
    C, l, u, eq_mask = _canonical(p)
    prep = _PreparedQp(p.H, p.f, C, eq_mask)
    raw = prep.solve(l, u, warm=None if warm is None else (warm, None),
                     tol=tol, max_iter=max_iter)
    m_in = p.A_in.shape[0]
    duals_in = np.maximum(raw.y[:m_in], 0.0)
    duals_eq = raw.y[m_in:]
    return QpSolution(
        z=raw.z, duals_in=duals_in, duals_eq=duals_eq, status=raw.status,
        kkt_residual=raw.kkt_residual, objective=raw.objective,
        iterations=raw.iterations,
    )


# ---------------------------------------------------------------------------
# Branch and bound


@dataclass
class _Node:
    fix: np.ndarray  # int8 per binary: -1 free, 0, 1
    bound: float
    warm: tuple = None
    solution: _RawSolution = None
    zeta: np.ndarray = None


class _MiqpWorkspace:
    def __init__(self, p: MiqpProblem):
        base = p.base
        nc, nb = base.n, p.n_binary
        self.nc, self.nb = nc, nb
        self.p = p
        H = np.zeros((nc + nb, nc + nb))
        H[:nc, :nc] = base.H
        f = np.concatenate([base.f, np.zeros(nb)])
        m_in = base.A_in.shape[0]
        m_cp = p.coupling_b.shape[0]
        m_eq = base.A_eq.shape[0]
        ng = len(p.groups)
        rows = m_in + m_cp + nb + m_eq + ng
        C = np.zeros((rows, nc + nb))
        l = np.full(rows, -np.inf)
        u = np.full(rows, np.inf)
        r = 0
        C[r:r + m_in, :nc] = base.A_in
        u[r:r + m_in] = base.b_in
        r += m_in
        C[r:r + m_cp, :nc] = p.coupling_A_cont
        C[r:r + m_cp, nc:] = p.coupling_A_bin
        u[r:r + m_cp] = p.coupling_b
        r += m_cp
        self.bound_rows = slice(r, r + nb)
        C[self.bound_rows, nc:] = np.eye(nb)
        l[self.bound_rows] = 0.0
        u[self.bound_rows] = 1.0
        r += nb
        C[r:r + m_eq, :nc] = base.A_eq
        l[r:r + m_eq] = base.b_eq
        u[r:r + m_eq] = base.b_eq
        r += m_eq
        for g in p.groups:
            for i in g:
                C[r, nc + i] = 1.0
            l[r] = 1.0
            u[r] = 1.0
            r += 1
        eq_mask = np.zeros(rows, dtype=bool)
        eq_mask[rows - ng - m_eq:] = True
        self.l0, self.u0 = l, u
        self.prep = _PreparedQp(H, f, C, eq_mask)
        self.group_of = np.full(nb, -1, dtype=int)
        for gi, g in enumerate(p.groups):
            for i in g:
                self.group_of[i] = gi

    def bounds_for(self, fix):
        l = self.l0.copy()
        u = self.u0.copy()
        fixed = fix >= 0
        lb = l[self.bound_rows]
        ub = u[self.bound_rows]
        lb[fixed] = fix[fixed]
        ub[fixed] = fix[fixed]
        return l, u

    def solve_node(self, fix, warm, tol, max_iter=10000):
        l, u = self.bounds_for(fix)
        return self.prep.solve(l, u, warm=warm, tol=tol, max_iter=max_iter)


def _propagate(fix, groups):
    """Exactly-one bookkeeping after new fixings; None if contradictory."""
    for g in groups:
        vals = fix[list(g)]
        ones = int((vals == 1).sum())
        if ones > 1:
            return None
        if ones == 1:
            fix[list(g)] = [1 if fix[i] == 1 else 0 for i in g]
            continue
        free = [i for i in g if fix[i] < 0]
        if not free:
            return None  # all zero, no one left to pick
        if len(free) == 1:
            fix[free[0]] = 1
    return fix


def solve_miqp(p: MiqpProblem, cfg: BnbConfig | None = None,
               warm_assignment=None, warm_z=None, warm_seed_y=None,
               warm_root=None, workers: int = 1,
               warm_trusted: bool = False) -> MiqpSolution:
    """Global optimum of a mixed-integer QP within the configured gaps.

    ``warm_assignment`` (a 0/1 vector over the binaries) seeds the
    incumbent; ``warm_z`` seeds the root relaxation iterate. A seed is
    only allowed to close the search immediately when the caller marks
    it ``warm_trusted``; otherwise one dive to an integral leaf runs
    first so a lifeline seed cannot masquerade as the answer. With
    ``workers > 1`` sibling relaxations are evaluated concurrently;
    results are merged in a fixed order so the answer does not depend
    on scheduling.
    """
    cfg = cfg or BnbConfig()
    if p.n_binary == 0:
        sol = solve_qp(p.base)
        obj = sol.objective + p.obj_const if sol.status != SolveStatus.INFEASIBLE else np.inf
        return MiqpSolution(
            z=sol.z, binaries=np.zeros(0), status=sol.status,
            objective=obj, bound=obj, root_bound=obj, nodes=1,
            qp_iterations=sol.iterations, kkt_residual=sol.kkt_residual,
        )

    ws = _MiqpWorkspace(p)
    tol = 1e-7
    nodes_used = 0
    qp_iters = 0
    incumbent = None  # (_RawSolution, zeta int array)
    inc_obj = np.inf
    inc_trusted = False

    def node_objective(raw):
        return raw.objective + p.obj_const

    def try_incumbent(raw, zeta, trusted=True):
        nonlocal incumbent, inc_obj, inc_trusted
        obj = node_objective(raw)
        if obj < inc_obj - 1e-12:
            incumbent = (raw, zeta.astype(np.int8))
            inc_obj = obj
        inc_trusted = inc_trusted or trusted

    def cutoff():
        """Nodes bounded at or above this cannot improve the incumbent
        by more than the configured gap. Heuristic-only incumbents never
        close the search; they stay available as a fallback answer."""
        if not np.isfinite(inc_obj) or not inc_trusted:
            return np.inf
        return inc_obj - max(cfg.abs_gap, cfg.rel_gap * abs(inc_obj))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def count(raw):
        # bookkeeping happens on the coordinating thread only
        nonlocal nodes_used, qp_iters
        nodes_used += 1
        qp_iters += raw.iterations
        return raw

    def evaluate(fix, warm, budget=10000):
        return count(ws.solve_node(fix, warm, tol, max_iter=budget))

    root_zy = None
    try:
        # seed the incumbent from a caller-provided assignment
        if warm_assignment is not None:
            fix = np.asarray(warm_assignment, dtype=np.int8).copy()
            fix = _propagate(fix, p.groups)
            if fix is not None and (fix >= 0).all():
                seed_warm = None
                if warm_z is not None:
                    seed_warm = (warm_z, warm_seed_y)
                raw = evaluate(fix, seed_warm, budget=1500)
                if raw.status == SolveStatus.OPTIMAL:
                    try_incumbent(raw, fix, trusted=warm_trusted)

        root_fix = _propagate(np.full(ws.nb, -1, dtype=np.int8), p.groups)
        if root_fix is None:
            return MiqpSolution(
                z=None, binaries=None, status=SolveStatus.INFEASIBLE,
                objective=np.inf, bound=np.inf, root_bound=np.inf,
                nodes=nodes_used, qp_iterations=qp_iters, kkt_residual=np.inf,
            )
        if warm_root is not None:
            root_warm = warm_root
        elif warm_z is not None:
            root_warm = (warm_z, None)
        else:
            root_warm = None
        raw = evaluate(root_fix, root_warm,
                       budget=2500 if inc_trusted else 10000)
        root_trusted = raw.status == SolveStatus.OPTIMAL
        root_bound = node_objective(raw) if root_trusted else np.inf
        if raw.status == SolveStatus.INFEASIBLE:
            return MiqpSolution(
                z=None, binaries=None, status=SolveStatus.INFEASIBLE,
                objective=np.inf, bound=np.inf, root_bound=np.inf,
                nodes=nodes_used, qp_iterations=qp_iters, kkt_residual=np.inf,
            )
        if root_trusted:
            root_zy = (raw.z.copy(), raw.y.copy())
        elif inc_trusted:
            # no usable bound, but a genuine plan is in hand: stop here
            # rather than search a tree whose pruning cannot work
            inc_raw, inc_zeta = incumbent
            return MiqpSolution(
                z=inc_raw.z[: ws.nc].copy(), binaries=inc_zeta.copy(),
                status=SolveStatus.ITER_LIMIT, objective=inc_obj,
                bound=-np.inf, root_bound=np.inf, nodes=nodes_used,
                qp_iterations=qp_iters, kkt_residual=inc_raw.kkt_residual,
                incumbent_zy=(inc_raw.z.copy(), inc_raw.y.copy()),
                root_zy=None,
            )

        counter = 0
        heap = []
        exhausted = False
        lost_subtree = False
        stopped_bound = np.inf  # bound of a popped-but-unprocessed node

        def push(fix, raw, inherited_bound):
            nonlocal counter
            if raw.status == SolveStatus.INFEASIBLE:
                return
            if raw.status == SolveStatus.OPTIMAL:
                bound = max(node_objective(raw), inherited_bound)
            else:
                bound = inherited_bound  # untrusted solve: parent bound holds
            node = _Node(fix=fix, bound=bound,
                         warm=(raw.z.copy(), raw.y.copy()), solution=raw,
                         zeta=raw.z[ws.nc:].copy())
            heapq.heappush(heap, (bound, counter, node))
            counter += 1

        def settle_integral(node) -> bool:
            """Incumbent handling for a relaxation with integral binaries.

            Returns True when the node is fully dealt with."""
            zeta = node.zeta
            frac = np.abs(zeta - np.round(zeta))
            if frac.max(initial=0.0) > cfg.relax_tol:
                return False
            rounded = node.fix.copy()
            free = node.fix < 0
            rounded[free] = np.round(zeta[free]).astype(np.int8)
            fixed = _propagate(rounded.copy(), p.groups)
            if fixed is None or not (fixed >= 0).all():
                return False
            if frac.max(initial=0.0) <= 1e-9 \
                    and node.solution.status == SolveStatus.OPTIMAL:
                try_incumbent(node.solution, fixed)
                return True
            cand = evaluate(fixed, node.warm, budget=1500)  # re-fix cleanly
            if cand.status != SolveStatus.OPTIMAL \
                    and cand.status != SolveStatus.INFEASIBLE:
                cand = evaluate(fixed, node.warm, budget=3000)
            if cand.status == SolveStatus.OPTIMAL:
                try_incumbent(cand, fixed)
                return True
            return cand.status == SolveStatus.INFEASIBLE

        def plunge(node):
            """Branch and follow the better child to an integral leaf.

            Only the dive path is evaluated eagerly; the sibling at each
            level is queued lazily under its parent's bound, so once the
            dive lands an incumbent most siblings prune at pop time
            without ever being solved."""
            while True:
                if node.bound >= cutoff():
                    heapq.heappush(heap, (node.bound, _bump(), node))
                    return
                if settle_integral(node):
                    return
                branch_var = _pick_branch(
                    node.zeta, node.fix, p.groups, cfg.relax_tol
                )
                if branch_var is None:
                    return
                fixes = []
                for val in (1, 0):
                    fix = node.fix.copy()
                    fix[branch_var] = val
                    if val == 1:
                        for i in p.groups[ws.group_of[branch_var]]:
                            if i != branch_var:
                                fix[i] = 0
                    fix = _propagate(fix, p.groups)
                    if fix is not None:
                        fixes.append(fix)
                if not fixes:
                    return
                dive_child = None
                untrusted = []  # (objective estimate, fix, raw)
                for pos, fx in enumerate(fixes):
                    if dive_child is None:
                        res = evaluate(fx, node.warm, budget=750)
                        if res.status == SolveStatus.INFEASIBLE:
                            continue
                        if res.status != SolveStatus.OPTIMAL:
                            untrusted.append((res.objective, fx, res))
                            continue
                        dive_child = _Node(
                            fix=fx, bound=max(node_objective(res), node.bound),
                            warm=(res.z.copy(), res.y.copy()), solution=res,
                            zeta=res.z[ws.nc:].copy(),
                        )
                    else:
                        lazy = _Node(fix=fx, bound=node.bound,
                                     warm=node.warm, solution=None, zeta=None)
                        heapq.heappush(heap, (lazy.bound, _bump(), lazy))
                if dive_child is None:
                    if not untrusted:
                        return
                    # keep diving on the best estimate: incumbents are
                    # verified at the leaf, so an uncertified path is
                    # fine to follow; the node is still queued for a
                    # proper bound later
                    untrusted.sort(key=lambda t: t[0])
                    for _, fx, res in untrusted:
                        push(fx, res, node.bound)
                    _, fx, res = untrusted[0]
                    dive_child = _Node(
                        fix=fx, bound=node.bound,
                        warm=(res.z.copy(), res.y.copy()), solution=res,
                        zeta=res.z[ws.nc:].copy(),
                    )
                else:
                    for _, fx, res in untrusted:
                        push(fx, res, node.bound)
                node = dive_child
                if nodes_used >= cfg.max_nodes:
                    heapq.heappush(heap, (node.bound, _bump(), node))
                    return

        def _bump():
            nonlocal counter
            counter += 1
            return counter - 1

        if not root_trusted:
            lost_subtree = True  # dive anyway; final status stays honest
        root_node = _Node(
            fix=root_fix,
            bound=node_objective(raw) if root_trusted else -np.inf,
            warm=(raw.z.copy(), raw.y.copy()), solution=raw,
            zeta=raw.z[ws.nc:].copy(),
        )
        plunge(root_node)

        while heap:
            bound, _, node = heapq.heappop(heap)
            if bound >= cutoff():
                stopped_bound = bound
                break  # best-first: everything left is at least as bad
            if nodes_used >= cfg.max_nodes:
                stopped_bound = bound
                exhausted = True
                break
            if node.solution is None or \
                    node.solution.status != SolveStatus.OPTIMAL:
                budget = 750 if node.solution is None else 3000
                res = evaluate(node.fix, node.warm, budget=budget)
                if res.status == SolveStatus.INFEASIBLE:
                    continue
                if res.status != SolveStatus.OPTIMAL:
                    if node.solution is None:
                        node.solution = res  # retried harder when popped
                        heapq.heappush(heap, (node.bound, _bump(), node))
                    else:
                        lost_subtree = True  # no trusted bound left
                    continue
                node.solution = res
                node.zeta = res.z[ws.nc:].copy()
                node.warm = (res.z.copy(), res.y.copy())
                node.bound = max(node.bound, node_objective(res))
                if node.bound >= cutoff():
                    continue
            plunge(node)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    open_bound = min((b for b, _, _ in heap), default=np.inf)
    proof_bound = min(open_bound, stopped_bound, inc_obj)
    if incumbent is None:
        status = SolveStatus.ITER_LIMIT if (exhausted or lost_subtree) \
            else SolveStatus.INFEASIBLE
        return MiqpSolution(
            z=None, binaries=None, status=status, objective=np.inf,
            bound=proof_bound, root_bound=root_bound, nodes=nodes_used,
            qp_iterations=qp_iters, kkt_residual=np.inf,
        )
    raw, zeta = incumbent
    status = SolveStatus.ITER_LIMIT if (exhausted or lost_subtree) \
        else SolveStatus.OPTIMAL
    return MiqpSolution(
        z=raw.z[: ws.nc].copy(), binaries=zeta.copy(), status=status,
        objective=inc_obj, bound=proof_bound, root_bound=root_bound,
        nodes=nodes_used, qp_iterations=qp_iters,
        kkt_residual=raw.kkt_residual,
        incumbent_zy=(raw.z.copy(), raw.y.copy()), root_zy=root_zy,
    )


def _pick_branch(zeta, fix, groups, relax_tol):
    """Most fractional binary within the earliest group holding one."""
    for g in groups:
        best = None
        for i in g:
            if fix[i] >= 0:
                continue
            f = abs(zeta[i] - round(zeta[i]))
            if f <= relax_tol:
                continue
            score = abs(zeta[i] - 0.5)
            if best is None or score < best[0] - 1e-15:
                best = (score, i)
        if best is not None:
            return best[1]
    # no fractional free binary anywhere: branch on any free one
    for g in groups:
        for i in g:
            if fix[i] < 0:
                return i
    return None


# ---------------------------------------------------------------------------
# Problem dump/load (documented JSON matrix format, for offline debugging)


def save_problem(p, path) -> None:
    if isinstance(p, MiqpProblem):
        doc = {
            "type": "miqp",
            "base": _qp_doc(p.base),
            "n_binary": p.n_binary,
            "coupling_A_cont": p.coupling_A_cont.tolist(),
            "coupling_A_bin": p.coupling_A_bin.tolist(),
            "coupling_b": p.coupling_b.tolist(),
            "groups": [list(g) for g in p.groups],
            "obj_const": p.obj_const,
        }
    else:
        doc = {"type": "qp", **_qp_doc(p)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_problem(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["type"] == "qp":
        return _qp_from_doc(doc)
    if doc["type"] == "miqp":
        return MiqpProblem(
            base=_qp_from_doc(doc["base"]),
            n_binary=int(doc["n_binary"]),
            coupling_A_cont=np.array(doc["coupling_A_cont"], dtype=float).reshape(
                len(doc["coupling_b"]), -1
            ),
            coupling_A_bin=np.array(doc["coupling_A_bin"], dtype=float).reshape(
                len(doc["coupling_b"]), -1
            ),
            coupling_b=np.array(doc["coupling_b"], dtype=float),
            groups=tuple(tuple(g) for g in doc["groups"]),
            obj_const=float(doc.get("obj_const", 0.0)),
        )
    raise ValueError(f"unknown problem type {doc.get('type')!r}")


def _qp_doc(p: QpProblem):
    return {
        "H": p.H.tolist(), "f": p.f.tolist(),
        "A_in": p.A_in.tolist(), "b_in": p.b_in.tolist(),
        "A_eq": p.A_eq.tolist(), "b_eq": p.b_eq.tolist(),
    }


def _qp_from_doc(doc):
    n = len(doc["f"])
    return QpProblem(
        H=np.array(doc["H"], dtype=float).reshape(n, n),
        f=np.array(doc["f"], dtype=float),
        A_in=np.array(doc["A_in"], dtype=float).reshape(-1, n),
        b_in=np.array(doc["b_in"], dtype=float),
        A_eq=np.array(doc["A_eq"], dtype=float).reshape(-1, n),
        b_eq=np.array(doc["b_eq"], dtype=float),
    )
