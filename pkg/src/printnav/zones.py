"""Speed-zone partitioning and its mixed-integer encoding.

The navigable floor is cut into convex pieces, each carrying the speed
cap of the strictest authored area covering it (obstacles beat slow
zones beat faster zones beat open floor). Each piece is then lifted
into the 4-D state space by appending per-axis velocity bounds, and the
resulting union-of-polytopes membership constraint is encoded with
row-wise big-M constants so a MIQP can pick exactly one piece per time
step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError, MapFormatError
from .geometry import (
    AxisBox,
    HalfspacePolytope,
    MapSpec,
    bounding_box,
    region_diff,
)


@dataclass(frozen=True)
class ZoneRegion:
    """One convex navigable piece and its speed cap."""

    poly: HalfspacePolytope  # 2-D position set
    v_max: float
    source: str  # name of the authored area this piece came from


@dataclass(frozen=True)
class SpeedZoneMap:
    """Disjoint-interior convex cover of the obstacle-free floor."""

    regions: tuple[ZoneRegion, ...]
    workspace: AxisBox

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def v_global_max(self) -> float:
        return max(r.v_max for r in self.regions)


@dataclass(frozen=True)
class LiftedRegion:
    """Position piece coupled with its velocity box, in 4-D state space.

    Rows are the zero-padded position rows followed by exactly four
    velocity rows (+vx, -vx, +vy, -vy, each bounded by v_max).
    """

    A: np.ndarray
    b: np.ndarray
    region_index: int
    v_max: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class BigMEncoding:
    """Union-membership constraint ready for mixed-integer embedding.

    For each region j, row r of ``A[j] x <= b[j]`` gets the constant
    ``big_m[j][r]`` = max over the lifted workspace box of (A row . x)
    - b row, floored at zero: with the region's binary off, the relaxed
    row holds for every reachable state; with it on, the row is exact.
    """

    regions: tuple[LiftedRegion, ...]
    big_m: tuple[np.ndarray, ...]
    workspace: AxisBox
    v_global: float

    @property
    def n_regions(self) -> int:
        return len(self.regions)


def build_partition(map_spec: MapSpec, v_global: float | None = None) -> SpeedZoneMap:
    """Partition the workspace into disjoint convex speed regions.

    Zones are processed strictest (lowest v_max) first; each is diffed
    against obstacles and every stricter or earlier zone, then the open
    floor is whatever remains of the workspace. Ties between zones with
    equal caps resolve in file order.
    """
    if v_global is None:
        v_global = map_spec.v_free
    workspace_poly = map_spec.workspace.to_polytope()
    obstacles = [e.poly for e in map_spec.obstacles]

    for zone in map_spec.zones:
        zbox = bounding_box(zone.poly)
        if not map_spec.workspace.contains_box(zbox):
            raise MapFormatError(f"zone {zone.name!r} lies outside the workspace")
        if zone.v_max > v_global + 1e-12:
            raise MapFormatError(
                f"zone {zone.name!r}: v_max {zone.v_max:g} exceeds the "
                f"global limit {v_global:g}"
            )

    ordered = sorted(
        range(len(map_spec.zones)), key=lambda i: (map_spec.zones[i].v_max, i)
    )
    regions: list[ZoneRegion] = []
    carved: list[HalfspacePolytope] = list(obstacles)
    for i in ordered:
        zone = map_spec.zones[i]
        for piece in region_diff(zone.poly, carved):
            regions.append(ZoneRegion(piece, zone.v_max, zone.name))
        carved.append(zone.poly)
    for piece in region_diff(workspace_poly, carved):
        regions.append(ZoneRegion(piece, v_global, "free"))
    if not regions:
        raise EmptyRegionError("map has no navigable free space")
    return SpeedZoneMap(tuple(regions), map_spec.workspace)


def lift(region: HalfspacePolytope, v_max: float, region_index: int = 0) -> LiftedRegion:
    """Couple a 2-D position piece with per-axis velocity bounds."""
    if region.dim != 2:
        raise ValueError("only 2-D position regions can be lifted")
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    n = region.n_rows
    A = np.zeros((n + 4, 4))
    A[:n, :2] = region.A
    A[n + 0, 2] = 1.0   # vx <= v_max
    A[n + 1, 2] = -1.0  # -vx <= v_max
    A[n + 2, 3] = 1.0   # vy <= v_max
    A[n + 3, 3] = -1.0  # -vy <= v_max
    b = np.concatenate([region.b, np.full(4, v_max)])
    return LiftedRegion(A, b, region_index, v_max)


def lift_map(zone_map: SpeedZoneMap) -> list[LiftedRegion]:
    return [
        lift(r.poly, r.v_max, region_index=i)
        for i, r in enumerate(zone_map.regions)
    ]


def compute_big_m(lifted, workspace: AxisBox, v_global: float) -> BigMEncoding:
    """Row-wise big-M constants over the lifted workspace box.

    The box is workspace x [-v_global, v_global]^2; for a box the
    supremum of a linear row is closed-form (center term plus the
    absolute row against the halfwidths).
    """
    if workspace.dim != 2:
        raise ValueError("workspace must be a 2-D box")
    if np.any(workspace.halfwidth <= 0) or v_global <= 0:
        raise ValueError("workspace and velocity extent must be positive")
    center = np.concatenate([workspace.center, [0.0, 0.0]])
    halfwidth = np.concatenate([workspace.halfwidth, [v_global, v_global]])
    big_m = []
    for reg in lifted:
        sup = reg.A @ center + np.abs(reg.A) @ halfwidth
        big_m.append(np.maximum(sup - reg.b, 0.0))
    return BigMEncoding(tuple(lifted), tuple(big_m), workspace, v_global)


def encode_map(zone_map: SpeedZoneMap, v_global: float | None = None) -> BigMEncoding:
    """Convenience: lift every region and compute its big-M vectors."""
    if v_global is None:
        v_global = zone_map.v_global_max
    return compute_big_m(lift_map(zone_map), zone_map.workspace, v_global)


def state_in_union(encoding: BigMEncoding, x, tol: float = 1e-9) -> bool:
    """Direct union-membership test (the reference for the big-M form)."""
    x = np.asarray(x, dtype=float)
    return any(np.all(r.A @ x <= r.b + tol) for r in encoding.regions)


def partition_dump(zone_map: SpeedZoneMap) -> list[dict]:
    """JSON-ready description of every piece, for plotting tools."""
    out = []
    for i, r in enumerate(zone_map.regions):
        box = bounding_box(r.poly)
        out.append(
            {
                "index": i,
                "source": r.source,
                "v_max": r.v_max,
                "A": r.poly.A.tolist(),
                "b": r.poly.b.tolist(),
                "bbox": [*box.lower.tolist(), *box.upper.tolist()],
            }
        )
    return out
