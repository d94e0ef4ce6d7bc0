import numpy as np
import pytest

from desing import actions as A
from desing import blowup as B
from desing import metrics as Mx
from desing import presets
from desing import quotient as Q
from desing.errors import GraphDisconnected, TooLargeForExact, UnsupportedStage


def load(name):
    return A.load_action(presets.preset_path(name))


def space(mat):
    mat = np.asarray(mat, dtype=float)
    return Q.FiniteMetricSpace(tuple(str(i) for i in range(len(mat))), mat)


def test_point_orbit_distance():
    assert Q.point_orbit_distance(load("z2_r1"), Mx.euclidean_field(1),
                                  np.array([1.0]), np.array([-3.0])) == pytest.approx(2.0)
    d = Q.point_orbit_distance(load("s1_r2"), Mx.euclidean_field(2),
                               np.array([1.0, 0.0]), np.array([0.0, 0.2]))
    assert d == pytest.approx(0.8, abs=1e-9)


def test_segment_length_curved_metric():
    f = Mx.function_field(lambda x: np.eye(1) * (1 + x[0]) ** 2, 1)
    # integral of (1 + t) over [0, 1]
    assert Q.segment_length(f, 0, np.array([0.0]), np.array([1.0])) == pytest.approx(1.5, abs=1e-4)


def test_representatives_include_origin_and_are_deterministic():
    a = load("s1_r2")
    r1 = Q.sample_representatives(a, 30, seed=4)
    r2 = Q.sample_representatives(a, 30, seed=4)
    assert np.array_equal(r1, r2)
    assert np.array_equal(r1[0], np.zeros(2))


def test_orbit_space_is_metric():
    x = Q.sample_orbit_space(load("s1_r2"), Mx.euclidean_field(2), 60, seed=0)
    assert x.check()
    assert np.array_equal(x.distances, x.distances.T)
    assert np.all(np.diag(x.distances) == 0)


def test_disconnected_graph():
    w = np.full((3, 3), np.inf)
    np.fill_diagonal(w, 0)
    w[0, 1] = w[1, 0] = 1.0
    with pytest.raises(GraphDisconnected):
        Q.chain_metric(w)


def test_gh_two_point_pair():
    assert Q.gh_distance(space([[0, 1], [1, 0]]), space([[0, 2], [2, 0]]), "exact") == (0.5, 0.5)


def test_gh_of_isometric_spaces_is_zero():
    rng = np.random.default_rng(0)
    p = rng.uniform(size=(6, 2))
    d = np.linalg.norm(p[:, None] - p[None], axis=2)
    perm = rng.permutation(6)
    lo, hi = Q.gh_distance(space(d), space(d[np.ix_(perm, perm)]), "exact")
    assert lo == hi == 0.0


def test_bounds_bracket_exact():
    rng = np.random.default_rng(1)
    for _ in range(5):
        pa, pb = rng.uniform(size=(5, 2)), rng.uniform(size=(6, 2))
        a = space(np.linalg.norm(pa[:, None] - pa[None], axis=2))
        b = space(np.linalg.norm(pb[:, None] - pb[None], axis=2))
        exact = Q.gh_distance(a, b, "exact")[0]
        lo, hi = Q.gh_distance(a, b, "bounds")
        assert lo <= exact + 1e-12 and exact <= hi + 1e-12


def test_exact_size_limit():
    d = np.ones((12, 12)) - np.eye(12)
    with pytest.raises(TooLargeForExact):
        Q.gh_distance(space(d), space(d), "exact")


def test_compare_rejects_two_stages():
    a = load("t2_r4")
    res = B.desingularize(a, samples=200)
    with pytest.raises(UnsupportedStage):
        Q.compare_quotients(a, res, [0.2], n_samples=20)


def test_compare_zero_stages():
    a = load("z2_r1")
    res = B.desingularize(a, samples=200)
    rep = Q.compare_quotients(a, res, [0.2, 0.1], n_samples=40)
    assert rep["stages"] == 0 and rep["monotone"]
