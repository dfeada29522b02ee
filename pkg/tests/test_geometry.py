import numpy as np
import pytest

from printnav import geometry as geo
from printnav.errors import (
    DimensionMismatchError,
    EmptyRegionError,
    MapFormatError,
    UnboundedRegionError,
)

from conftest import membership_fraction_mismatch, sample_box


def box(lo, hi):
    return geo.HalfspacePolytope.from_box(lo, hi)


class TestContains:
    def test_interior_point(self, unit_square):
        assert geo.contains(unit_square, [0.5, 0.5])

    def test_outside_one_halfspace(self, unit_square):
        assert not geo.contains(unit_square, [2.0, 0.0])

    def test_boundary_within_tolerance(self, unit_square):
        assert geo.contains(unit_square, [1.0, 1.0])
        assert geo.contains(unit_square, [1.0 + 5e-10, 1.0])

    def test_dimension_mismatch(self, unit_square):
        with pytest.raises(DimensionMismatchError):
            geo.contains(unit_square, [0.5, 0.5, 0.0])


class TestIntersect:
    def test_box_intersection(self):
        P = geo.intersect(box([0, 0], [2, 2]), box([1, 1], [3, 3]))
        bb = geo.bounding_box(P)
        np.testing.assert_allclose(bb.lower, [1, 1])
        np.testing.assert_allclose(bb.upper, [2, 2])

    def test_idempotent_as_set(self, unit_square, rng):
        P = geo.intersect(unit_square, unit_square)
        pts = sample_box(rng, geo.AxisBox([-0.5, -0.5], [1.5, 1.5]), 500)
        for p in pts:
            assert geo.contains(P, p) == geo.contains(unit_square, p)

    def test_disjoint_is_empty(self):
        P = geo.intersect(box([0, 0], [1, 1]), box([2, 2], [3, 3]))
        assert geo.is_empty(P)

    def test_commutative_as_set(self, rng):
        A = box([0, 0], [2, 1.5])
        B = geo.HalfspacePolytope(np.array([[1.0, 1.0]]), np.array([2.0]))
        PQ = geo.intersect(A, B)
        QP = geo.intersect(B, A)
        pts = sample_box(rng, geo.AxisBox([-1, -1], [3, 3]), 500)
        for p in pts:
            assert geo.contains(PQ, p) == geo.contains(QP, p)

    def test_dim_mismatch(self, unit_square):
        with pytest.raises(DimensionMismatchError):
            geo.intersect(unit_square, box([0, 0, 0], [1, 1, 1]))


class TestIsEmpty:
    def test_contradictory_bounds(self):
        P = geo.HalfspacePolytope(np.array([[1.0], [-1.0]]),
                                  np.array([-1.0, -1.0]))
        assert geo.is_empty(P)

    def test_unit_square_nonempty(self, unit_square):
        assert not geo.is_empty(unit_square)

    def test_random_polytope_with_known_interior_point(self, rng):
        # construct by sampling a point, then adding halfspaces it satisfies
        for _ in range(20):
            dim = int(rng.integers(2, 5))
            z = rng.normal(size=dim) * 3
            rows, offs = [], []
            for _ in range(int(rng.integers(3, 9))):
                a = rng.normal(size=dim)
                margin = rng.random() * 2 + 1e-3
                rows.append(a)
                offs.append(a @ z + margin)
            P = geo.HalfspacePolytope(np.array(rows), np.array(offs))
            assert not geo.is_empty(P)
            assert geo.contains(P, z)

    def test_grid_scan_agreement(self, rng):
        # emptiness of pairwise intersections agrees with a brute-force
        # grid scan at 0.01 pitch (instances chosen fat or clearly empty)
        cases = [
            (box([0, 0], [1, 1]), box([0.5, 0.5], [2, 2])),
            (box([0, 0], [1, 1]), box([1.2, 1.2], [2, 2])),
            (box([0, 0], [2, 0.5]), box([1.0, 0.25], [3, 3])),
            (box([0, 0], [1, 1]), box([0.99, 0.99], [2, 2])),
        ]
        for P, Q in cases:
            inter = geo.intersect(P, Q)
            xs = np.arange(0.0, 3.0 + 1e-12, 0.01)
            grid_hit = False
            for x in xs:
                pts = np.stack([np.full_like(xs, x), xs], axis=1)
                inside = np.all(pts @ inter.A.T <= inter.b + 1e-9, axis=1)
                if inside.any():
                    grid_hit = True
                    break
            assert geo.is_empty(inter) == (not grid_hit)


class TestBoundingBox:
    def test_unit_square(self, unit_square):
        bb = geo.bounding_box(unit_square)
        np.testing.assert_allclose(bb.lower, [0, 0], atol=1e-9)
        np.testing.assert_allclose(bb.upper, [1, 1], atol=1e-9)

    def test_triangle_vertex_extremes(self):
        tri = geo.HalfspacePolytope(
            np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]),
            np.array([0.0, 0.0, 1.0]),
        )
        bb = geo.bounding_box(tri)
        np.testing.assert_allclose(bb.lower, [0, 0], atol=1e-9)
        np.testing.assert_allclose(bb.upper, [1, 1], atol=1e-9)

    def test_contains_sampled_members(self, rng):
        # rejection-sampling oracle: every member point lies in the box
        P = geo.HalfspacePolytope(
            np.array([[1.0, 0.2], [-1.0, 0.5], [0.3, 1.0], [0.0, -1.0],
                      [-0.7, -0.9]]),
            np.array([2.0, 1.5, 2.5, 0.5, 1.0]),
        )
        bb = geo.bounding_box(P)
        outer = geo.AxisBox(bb.lower - 1.0, bb.upper + 1.0)
        pts = sample_box(rng, outer, 10_000)
        members = pts[np.all(pts @ P.A.T <= P.b[None, :] + 1e-12, axis=1)]
        assert len(members) > 100
        assert np.all(members >= bb.lower - 1e-9)
        assert np.all(members <= bb.upper + 1e-9)

    def test_unbounded_direction_named(self):
        half = geo.HalfspacePolytope(np.array([[1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(UnboundedRegionError, match="coordinate 0"):
            geo.bounding_box(half)

    def test_empty_rejected(self):
        P = geo.HalfspacePolytope(np.array([[1.0], [-1.0]]),
                                  np.array([-1.0, -1.0]))
        with pytest.raises(EmptyRegionError):
            geo.bounding_box(P)


class TestRegionDiff:
    def test_empty_obstacle_list(self, unit_square, rng):
        pieces = geo.region_diff(unit_square, [])
        assert len(pieces) == 1
        pts = sample_box(rng, geo.AxisBox([-0.2, -0.2], [1.2, 1.2]), 400)
        for p in pts:
            assert geo.contains(pieces[0], p) == geo.contains(unit_square, p)

    def test_l_shape_area(self):
        # [0,2]^2 minus [0,1]^2 leaves area 3, exactly
        pieces = geo.region_diff(box([0, 0], [2, 2]), [box([0, 0], [1, 1])])
        total = sum(geo.polygon_area(p) for p in pieces)
        assert total == pytest.approx(3.0, abs=1e-6)

    def test_l_shape_monte_carlo(self, rng):
        pieces = geo.region_diff(box([0, 0], [2, 2]), [box([0, 0], [1, 1])])
        pts = sample_box(rng, geo.AxisBox([0, 0], [2, 2]), 1_000_000)
        inside = np.zeros(len(pts), dtype=bool)
        for piece in pieces:
            inside |= np.all(pts @ piece.A.T <= piece.b[None, :] + 1e-9, axis=1)
        area = 4.0 * inside.mean()
        assert area == pytest.approx(3.0, abs=0.01)

    def test_two_obstacles_membership_oracle(self, rng):
        P = box([0, 0], [4, 4])
        obstacles = [box([1, 1], [2, 2]), box([3, 0], [4, 1])]
        pieces = geo.region_diff(P, obstacles)

        def predicate(p):
            if not geo.contains(P, p):
                return False
            return not any(
                np.all(o.A @ p < o.b) for o in obstacles  # strict interior
            )

        bad, n = membership_fraction_mismatch(
            pieces, predicate, geo.AxisBox([0, 0], [4, 4]), rng, 100_000
        )
        assert bad == 0 and n == 100_000

    def test_pieces_have_disjoint_interiors(self, rng):
        P = box([0, 0], [4, 4])
        pieces = geo.region_diff(P, [box([1, 1], [2, 3]), box([2, 0], [3, 2])])
        pts = sample_box(rng, geo.AxisBox([0, 0], [4, 4]), 20_000)
        for p in pts:
            strictly_inside = sum(
                1 for piece in pieces if np.all(piece.A @ p < piece.b - 1e-9)
            )
            assert strictly_inside <= 1

    def test_area_conservation(self):
        P = box([0, 0], [4, 4])
        obstacles = [box([1, 1], [2, 2]), box([3, 0], [4, 1])]
        pieces = geo.region_diff(P, obstacles)
        total = sum(geo.polygon_area(p) for p in pieces)
        # obstacles are disjoint and inside P: 16 - 1 - 1 = 14
        assert total == pytest.approx(14.0, rel=1e-4)


class TestReduceRows:
    def test_drops_redundant(self, unit_square):
        stacked = geo.intersect(unit_square, unit_square)
        reduced = geo.reduce_rows(stacked)
        assert reduced.n_rows == 4

    def test_set_unchanged(self, rng, unit_square):
        loose = geo.intersect(unit_square, box([-1, -1], [5, 5]))
        reduced = geo.reduce_rows(loose)
        pts = sample_box(rng, geo.AxisBox([-1, -1], [2, 2]), 500)
        for p in pts:
            assert geo.contains(reduced, p) == geo.contains(loose, p)


class TestVertices:
    def test_square_vertices(self, unit_square):
        v = geo.polygon_vertices(unit_square)
        assert v.shape == (4, 2)
        assert geo.polygon_area(unit_square) == pytest.approx(1.0)

    def test_triangle_area(self):
        tri = geo.HalfspacePolytope(
            np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]),
            np.array([0.0, 0.0, 1.0]),
        )
        assert geo.polygon_area(tri) == pytest.approx(0.5)


class TestMapFiles:
    def test_load_roundtrip(self, tmp_path):
        doc = """[
          {"name": "floor", "kind": "workspace", "box": [0, 0, 10, 5], "v_max": 1.0},
          {"name": "m1", "kind": "obstacle", "box": [2, 2, 3, 3]},
          {"name": "slow", "kind": "zone", "box": [4, 0, 6, 5], "v_max": 0.4}
        ]"""
        path = tmp_path / "map.json"
        path.write_text(doc)
        spec = geo.load_map(path)
        assert spec.workspace.dim == 2
        assert spec.v_free == 1.0
        assert len(spec.obstacles) == 1
        assert len(spec.zones) == 1
        assert spec.zones[0].v_max == 0.4

    def test_halfspace_entry(self, tmp_path):
        doc = """[
          {"name": "floor", "kind": "workspace", "box": [0, 0, 10, 5]},
          {"name": "wedge", "kind": "zone", "v_max": 0.5,
           "halfspaces": {"A": [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1]],
                           "b": [4, 0, 4, 0, 6]}}
        ]"""
        path = tmp_path / "map.json"
        path.write_text(doc)
        spec = geo.load_map(path)
        assert spec.zones[0].poly.n_rows == 5

    @pytest.mark.parametrize("doc", [
        "{}",
        "[{\"kind\": \"workspace\"}]",
        "[{\"name\": \"z\", \"kind\": \"zone\", \"box\": [0,0,1,1]}]",
        "[{\"name\": \"w\", \"kind\": \"what\", \"box\": [0,0,1,1]}]",
    ])
    def test_bad_schemas_rejected(self, tmp_path, doc):
        path = tmp_path / "bad.json"
        path.write_text(doc)
        with pytest.raises(MapFormatError):
            geo.load_map(path)


class TestInvariantsConstruction:
    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            geo.HalfspacePolytope(np.array([[0.0, 0.0]]), np.array([1.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            geo.HalfspacePolytope(np.array([[np.inf, 0.0]]), np.array([1.0]))

    def test_immutability(self, unit_square):
        with pytest.raises(ValueError):
            unit_square.A[0, 0] = 5.0

    def test_axisbox_ordering(self):
        with pytest.raises(ValueError):
            geo.AxisBox([1.0, 0.0], [0.0, 1.0])
