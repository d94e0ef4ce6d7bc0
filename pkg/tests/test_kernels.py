import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from desing import _core_py, kernels

compiled = pytest.importorskip("desing._core")


def metric_from_points(pts):
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)


points = st.integers(1, 5).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.floats(-10, 10, allow_nan=False)))


def brute_feasible(da, db, delta):
    na, nb = len(da), len(db)
    pairs = [(a, b) for a in range(na) for b in range(nb)]
    for r in range(max(na, nb), na + nb):
        for rel in itertools.combinations(pairs, r):
            if {a for a, _ in rel} != set(range(na)) or {b for _, b in rel} != set(range(nb)):
                continue
            if all(abs(da[a1, a2] - db[b1, b2]) <= delta for a1, b1 in rel for a2, b2 in rel):
                return True
    return False


def test_backend_is_compiled_by_default():
    assert kernels.BACKEND == "compiled"


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0.1, 5.0)),
       arrays(np.bool_, (6, 6)))
def test_floyd_warshall_backends_agree(w, mask):
    w = np.where(mask, np.inf, w)
    np.fill_diagonal(w, 0.0)
    a = compiled.floyd_warshall(w.copy())
    b = _core_py.floyd_warshall(w.copy())
    assert np.array_equal(a, b)


@settings(max_examples=60, deadline=None)
@given(points, points, st.data())
def test_distortion_backends_agree(pa, pb, data):
    da, db = metric_from_points(pa), metric_from_points(pb)
    k = data.draw(st.integers(1, 6))
    ra = np.array(data.draw(st.lists(st.integers(0, len(pa) - 1), min_size=k, max_size=k)))
    rb = np.array(data.draw(st.lists(st.integers(0, len(pb) - 1), min_size=k, max_size=k)))
    assert compiled.correspondence_distortion(da, db, ra, rb) == \
        _core_py.correspondence_distortion(da, db, ra, rb)
    assert compiled.pair_distortion(da, db, ra, rb, int(ra[0]), int(rb[0])) == \
        _core_py.pair_distortion(da, db, ra, rb, int(ra[0]), int(rb[0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: arrays(np.float64, (n, 1), elements=st.floats(0, 4))),
       st.integers(1, 3).flatmap(lambda n: arrays(np.float64, (n, 1), elements=st.floats(0, 4))),
       st.floats(0, 4))
def test_feasibility_matches_brute_force(pa, pb, delta):
    da, db = metric_from_points(pa), metric_from_points(pb)
    expect = brute_feasible(da, db, delta)
    assert compiled.correspondence_feasible(da, db, delta) == expect
    assert _core_py.correspondence_feasible(da, db, delta) == expect


@settings(max_examples=40, deadline=None)
@given(points)
def test_shortest_paths_satisfy_triangle_inequality(pts):
    w = metric_from_points(pts) * 1.5
    d = kernels.floyd_warshall(w)
    n = len(d)
    for k in range(n):
        assert np.all(d <= d[:, k, None] + d[None, k, :] + 1e-12)


def test_use_backend_switches():
    try:
        kernels.use_backend("python")
        assert kernels.BACKEND == "python"
        assert kernels.floyd_warshall(np.zeros((2, 2))).shape == (2, 2)
    finally:
        kernels.use_backend("compiled")
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")
