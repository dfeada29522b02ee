import numpy as np
import pytest

from printnav import geometry as geo


DATA = __import__("importlib.resources", fromlist=["files"]).files("printnav") / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def unit_square():
    return geo.HalfspacePolytope.from_box([0.0, 0.0], [1.0, 1.0])


def sample_box(rng, box: geo.AxisBox, n: int) -> np.ndarray:
    """Uniform samples inside an axis box."""
    u = rng.random((n, box.dim))
    return box.lower + u * (box.upper - box.lower)


def membership_fraction_mismatch(pieces, predicate, box, rng, n, band=1e-7):
    """Count sample points where piece membership disagrees with a
    direct predicate, ignoring points within ``band`` of any facet."""
    pts = sample_box(rng, box, n)
    bad = 0
    for p in pts:
        near_boundary = False
        in_pieces = False
        for piece in pieces:
            vals = piece.A @ p - piece.b
            if np.all(vals <= 1e-9):
                in_pieces = True
            if np.any(np.abs(vals) <= band):
                near_boundary = True
        want = predicate(p)
        if near_boundary:
            continue
        if in_pieces != want:
            bad += 1
    return bad, len(pts)
