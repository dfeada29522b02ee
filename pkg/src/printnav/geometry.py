"""Convex polytope kernel in halfspace representation.

Everything on a shop-floor map is a set ``{z | A z <= b}``: obstacles,
speed zones, workspace, and the 4-D lifted constraint sets used by the
controller. This module supplies containment, intersection, emptiness,
bounding boxes, and set-difference partitioning of free space into
convex pieces, plus the JSON map loader.

All types are immutable after construction and every operation is a
pure function, so values can be shared freely across threads.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import (
    DimensionMismatchError,
    EmptyRegionError,
    MapFormatError,
    UnboundedRegionError,
)

CONTAIN_TOL = 1e-9
FEAS_TOL = 1e-8
# a piece survives region_diff only if it stays feasible after every
# halfspace is pulled in by this margin (times the row norm)
FULLDIM_MARGIN = 1e-7


def _freeze(obj, **arrays):
    for name, arr in arrays.items():
        arr = np.array(arr, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class HalfspacePolytope:
    """Convex set {z | A z <= b}; A is (n_rows, dim), b is (n_rows,)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise ValueError("A must be (n_rows, dim) and b (n_rows,)")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("polytope data must be finite")
        if A.shape[0] == 0:
            raise ValueError("polytope needs at least one halfspace")
        if np.any(np.abs(A).max(axis=1) == 0.0):
            raise ValueError("every row of A needs a nonzero entry")
        _freeze(self, A=A, b=b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_box(cls, lower, upper) -> "HalfspacePolytope":
        """Axis-aligned box as H-rep, rows ordered (+e0, -e0, +e1, ...)."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        dim = lower.shape[0]
        rows, offs = [], []
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = 1.0
            rows += [e, -e]
            offs += [upper[i], -lower[i]]
        return cls(np.array(rows), np.array(offs))


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned box [lower, upper], same units as the space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower/upper must be same-length vectors")
        if np.any(lower > upper):
            raise ValueError("box needs lower <= upper componentwise")
        _freeze(self, lower=lower, upper=upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def to_polytope(self) -> HalfspacePolytope:
        return HalfspacePolytope.from_box(self.lower, self.upper)

    def contains_box(self, other: "AxisBox", tol: float = 1e-7) -> bool:
        return bool(
            np.all(other.lower >= self.lower - tol)
            and np.all(other.upper <= self.upper + tol)
        )


@dataclass(frozen=True)
class PolytopeList:
    """Ordered convex pieces with pairwise disjoint interiors."""

    pieces: tuple[HalfspacePolytope, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        dims = {p.dim for p in pieces}
        if len(dims) > 1:
            raise DimensionMismatchError("pieces must share one dimension")
        object.__setattr__(self, "pieces", pieces)

    def __iter__(self):
        return iter(self.pieces)

    def __len__(self):
        return len(self.pieces)

    def __getitem__(self, i):
        return self.pieces[i]


def contains(P: HalfspacePolytope, z, tol: float = CONTAIN_TOL) -> bool:
    """True iff A z <= b + tol componentwise."""
    z = np.asarray(z, dtype=float)
    if z.shape != (P.dim,):
        raise DimensionMismatchError(
            f"point has dim {z.shape}, polytope has dim {P.dim}"
        )
    return bool(np.all(P.A @ z <= P.b + tol))


def intersect(P: HalfspacePolytope, Q: HalfspacePolytope) -> HalfspacePolytope:
    """Row concatenation; the result may be empty as a set."""
    if P.dim != Q.dim:
        raise DimensionMismatchError(f"dims {P.dim} and {Q.dim} differ")
    return HalfspacePolytope(np.vstack([P.A, Q.A]), np.concatenate([P.b, Q.b]))


def is_empty(P: HalfspacePolytope, tol: float = FEAS_TOL) -> bool:
    """Phase-1 LP verdict; raises UndecidedError on pivot exhaustion."""
    feasible, _ = lp.feasible_point(P.A, P.b, feas_tol=tol)
    return not feasible


def is_fulldim(P: HalfspacePolytope, margin: float = FULLDIM_MARGIN) -> bool:
    """Feasibility after shrinking every halfspace by margin*rownorm."""
    norms = np.linalg.norm(P.A, axis=1)
    feasible, _ = lp.feasible_point(P.A, P.b - margin * norms)
    return feasible


def bounding_box(P: HalfspacePolytope) -> AxisBox:
    """Componentwise min/max over P via 2*dim linear programs."""
    lower = np.zeros(P.dim)
    upper = np.zeros(P.dim)
    for i in range(P.dim):
        for sign, store in ((1.0, lower), (-1.0, upper)):
            c = np.zeros(P.dim)
            c[i] = sign
            res = lp.solve_lp(c, P.A, P.b)
            if res.status == lp.INFEASIBLE:
                raise EmptyRegionError("bounding box of an empty polytope")
            if res.status == lp.UNBOUNDED:
                side = "below" if sign > 0 else "above"
                raise UnboundedRegionError(
                    f"coordinate {i} is unbounded {side}"
                )
            store[i] = sign * res.objective
    return AxisBox(lower, upper)


def reduce_rows(P: HalfspacePolytope) -> HalfspacePolytope:
    """Minimal-ish H-rep: drop rows implied by the rest, normalize rows.

    Each row is tested with one LP (maximize its left side subject to
    the remaining rows); redundant rows are removed in order. The set
    is unchanged.
    """
    norms = np.linalg.norm(P.A, axis=1)
    A = P.A / norms[:, None]
    b = P.b / norms
    keep = list(range(A.shape[0]))
    i = 0
    while i < len(keep) and len(keep) > 1:
        row = keep[i]
        others = [r for r in keep if r != row]
        res = lp.solve_lp(-A[row], A[others], b[others])
        if res.status == lp.OPTIMAL and -res.objective <= b[row] + 1e-9:
            keep.pop(i)
        else:
            i += 1
    return HalfspacePolytope(A[keep], b[keep])


def region_diff(P: HalfspacePolytope, obstacles) -> PolytopeList:
    """Partition closure(P minus the union of obstacles) into convex pieces.

    Peels one obstacle halfspace at a time, in the order the obstacle's
    H-rep lists them: the piece of the current remainder on the far side
    of row i keeps rows 1..i-1 satisfied, so pieces have pairwise
    disjoint interiors by construction. Degenerate (zero-measure) pieces
    are dropped via the full-dimension inflation test; surviving pieces
    are returned with redundant rows removed.
    """
    obstacles = list(obstacles)
    for obs in obstacles:
        if obs.dim != P.dim:
            raise DimensionMismatchError("obstacle dim differs from P")
    out: list[HalfspacePolytope] = []
    _diff_recursive(P, obstacles, out)
    return PolytopeList(tuple(reduce_rows(p) for p in out))


def _diff_recursive(P, obstacles, out):
    if not is_fulldim(P):
        return
    if not obstacles:
        out.append(P)
        return
    obs, rest = obstacles[0], obstacles[1:]
    remainder = P
    for i in range(obs.n_rows):
        a_row = obs.A[i]
        b_row = obs.b[i]
        flipped = HalfspacePolytope(-a_row[None, :], np.array([-b_row]))
        piece = intersect(remainder, flipped)
        _diff_recursive(piece, rest, out)
        remainder = intersect(
            remainder, HalfspacePolytope(a_row[None, :], np.array([b_row]))
        )
        if not is_fulldim(remainder):
            break
    # what is left of the remainder lies inside the obstacle: discard


def polygon_vertices(P: HalfspacePolytope, tol: float = 1e-7) -> np.ndarray:
    """Vertices of a bounded 2-D polytope, ordered counterclockwise.

    Intended for area checks and map dumps; not a general V-rep
    converter.
    """
    if P.dim != 2:
        raise DimensionMismatchError("vertex enumeration is 2-D only")
    pts = []
    for i, j in itertools.combinations(range(P.n_rows), 2):
        M = np.vstack([P.A[i], P.A[j]])
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) < 1e-12 * max(1.0, np.abs(M).max() ** 2):
            continue
        p = np.linalg.solve(M, np.array([P.b[i], P.b[j]]))
        if np.all(P.A @ p <= P.b + tol):
            pts.append(p)
    if not pts:
        return np.zeros((0, 2))
    uniq: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) > 1e-9 for q in uniq):
            uniq.append(p)
    pts = np.array(uniq)
    centroid = pts.mean(axis=0)
    angles = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    return pts[np.argsort(angles, kind="stable")]


def polygon_area(P: HalfspacePolytope) -> float:
    """Shoelace area of a bounded 2-D polytope (0 for degenerate sets)."""
    v = polygon_vertices(P)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


# ---------------------------------------------------------------------------
# Map files


@dataclass(frozen=True)
class MapEntry:
    name: str
    kind: str  # "obstacle" | "zone"
    poly: HalfspacePolytope
    v_max: float | None = None


@dataclass(frozen=True)
class MapSpec:
    """A loaded shop-floor map: workspace box plus named areas."""

    workspace: AxisBox
    v_free: float
    obstacles: tuple[MapEntry, ...] = field(default_factory=tuple)
    zones: tuple[MapEntry, ...] = field(default_factory=tuple)


def _entry_poly(entry, name):
    if "box" in entry:
        box = entry["box"]
        if len(box) != 4:
            raise MapFormatError(f"entry {name!r}: box must be [lx,ly,ux,uy]")
        lx, ly, ux, uy = (float(v) for v in box)
        if not (lx < ux and ly < uy):
            raise MapFormatError(f"entry {name!r}: box has no interior")
        return HalfspacePolytope.from_box([lx, ly], [ux, uy])
    if "halfspaces" in entry:
        hs = entry["halfspaces"]
        try:
            return HalfspacePolytope(np.array(hs["A"]), np.array(hs["b"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"entry {name!r}: bad halfspaces: {exc}") from exc
    raise MapFormatError(f"entry {name!r}: needs 'box' or 'halfspaces'")


def parse_map(entries) -> MapSpec:
    """Validate a decoded map JSON document (a list of named entries)."""
    if not isinstance(entries, list):
        raise MapFormatError("map file must be a JSON list of entries")
    workspace = None
    v_free = 1.0
    obstacles, zones = [], []
    for entry in entries:
        if not isinstance(entry, dict) or "kind" not in entry:
            raise MapFormatError("every map entry needs a 'kind'")
        name = str(entry.get("name", f"entry{len(obstacles) + len(zones)}"))
        kind = entry["kind"]
        if kind == "workspace":
            if workspace is not None:
                raise MapFormatError("map has more than one workspace entry")
            box = entry.get("box")
            if box is None or len(box) != 4:
                raise MapFormatError("workspace entry needs box [lx,ly,ux,uy]")
            workspace = AxisBox([box[0], box[1]], [box[2], box[3]])
            v_free = float(entry.get("v_max", 1.0))
            if v_free <= 0:
                raise MapFormatError("workspace v_max must be positive")
        elif kind == "obstacle":
            obstacles.append(MapEntry(name, kind, _entry_poly(entry, name)))
        elif kind == "zone":
            if "v_max" not in entry:
                raise MapFormatError(f"zone {name!r} needs v_max")
            v_max = float(entry["v_max"])
            if v_max <= 0:
                raise MapFormatError(f"zone {name!r}: v_max must be positive")
            zones.append(MapEntry(name, kind, _entry_poly(entry, name), v_max))
        else:
            raise MapFormatError(f"entry {name!r}: unknown kind {kind!r}")
    if workspace is None:
        raise MapFormatError("map file has no workspace entry")
    return MapSpec(workspace, v_free, tuple(obstacles), tuple(zones))


def load_map(path) -> MapSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MapFormatError(f"{path}: not valid JSON: {exc}") from exc
    return parse_map(doc)
