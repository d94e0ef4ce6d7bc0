import numpy as np
import pytest

from desing import actions as A
from desing import blowup as B
from desing import metrics as Mx
from desing import presets
from desing.errors import NotSPD, SubmersionPreconditionFailed


def load(name):
    return A.load_action(presets.preset_path(name))


@pytest.fixture(scope="module")
def disk():
    a = load("s1_r2")
    m = B.blow_up(B.BlownUpManifold(2), B.make_center(0, A.fixed_subspace(a), 2), action=a)
    return a, m


@pytest.fixture(scope="module")
def space3():
    a = load("s1_r3")
    m = B.blow_up(B.BlownUpManifold(3), B.make_center(0, A.fixed_subspace(a), 3), action=a)
    return a, m


def test_eval_metric_rejects_bad_matrices():
    with pytest.raises(NotSPD):
        Mx.eval_metric(Mx.MetricField(lambda c, y: np.array([[1.0, 2.0], [0.0, 1.0]]), "x", 2), 0,
                       np.zeros(2))
    with pytest.raises(NotSPD):
        Mx.eval_metric(Mx.constant_field(np.diag([1.0, -1.0])), 0, np.zeros(2))
    assert Mx.eval_metric(Mx.euclidean_field(2), 0, np.zeros(2)).shape == (2, 2)


def test_submersion_defect_basics():
    g = np.eye(3)
    proj = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    assert Mx.submersion_defect(proj, g, np.eye(2)) == 0.0
    assert Mx.submersion_defect(2 * proj, g, np.eye(2)) == pytest.approx(3.0)
    assert Mx.submersion_defect(np.array([[1.0, 0, 0], [2.0, 0, 0]]), g, np.eye(2)) == np.inf


def test_averaging_matches_closed_form():
    a = load("s1_r2")
    avg = Mx.average_metric(a, Mx.constant_field(np.diag([1.0, 4.0])))
    # harmonic mean of the eigenvalues on each direction
    assert np.abs(avg(0, np.array([0.2, -0.4])) - 1.6 * np.eye(2)).max() < 1e-10


def test_averaged_field_is_invariant():
    a = load("s1_r3")
    f = Mx.function_field(lambda x: np.diag([1.0, 2.0, 3.0]) + np.outer(x, x), 3)
    avg = Mx.average_metric(a, f)
    pts = [(0, p) for p in np.random.default_rng(0).uniform(-1, 1, (3, 3))]
    assert Mx.invariance_defect(a, avg, pts) < 1e-10


def test_blowup_metric_on_disk(disk):
    a, m = disk
    f = Mx.base_blowup_metric(a, m, 0.5, Mx.euclidean_field(2))
    assert abs(Mx.exceptional_fiber_length(f, m) - np.pi) < 1e-6
    for c in m.leaf_charts:
        for y in np.random.default_rng(1).uniform(-1, 1, (20, 2)):
            Mx.eval_metric(f, c.id, y)


def test_blowup_metric_limit_on_divisor(space3):
    a, m = space3
    e = Mx.euclidean_field(3)
    d1, d2 = Mx.e_limit_check(a, m, e, m.leaf_charts[1].id, [0.4, 0.0, -0.7])
    assert d1 < 1e-5 and d2 < 1e-7 and d2 < d1


def test_blowup_metric_is_invariant(disk):
    a, m = disk
    f = Mx.base_blowup_metric(a, m, 0.5, Mx.euclidean_field(2))
    c = m.leaf_charts[0]
    assert Mx.invariance_defect(a, f, [(c.id, np.array([0.2, 0.4]))], manifold=m) < 1e-8


def test_negative_control_fails(space3):
    a, m = space3
    f = Mx.base_blowup_metric(a, m, 0.5, Mx.euclidean_field(3))
    rep = Mx.check_riemannian_submersion(Mx.blowdown_map(m), f, Mx.euclidean_field(3),
                                         [(m.leaf_charts[0].id, np.array([0.1, 0.2, 0.5]))])
    assert not rep["passed"] and rep["failures"]


def test_isometry_outside_tube_bit_equal(space3):
    a, m = space3
    e = Mx.euclidean_field(3)
    f = Mx.base_blowup_metric(a, m, 0.3, e)
    pts = [(c.id, y) for c in m.leaf_charts for y in np.random.default_rng(2).uniform(-1, 1, (50, 3))]
    rep = Mx.check_isometry_outside(m, f, e, 0.3, pts, 0.0)
    assert rep["samples"] > 0 and rep["bit_equal"]


def test_smoothstep_cutoff():
    assert Mx.cutoff(0.1, 1.0) == 1.0
    assert Mx.cutoff(1.0, 1.0) == 0.0
    assert 0.0 < Mx.cutoff(0.75, 1.0) < 1.0
    assert Mx.smoothstep(0.5) == pytest.approx(0.5)


def test_fibered_product_precondition():
    def embed(z):
        return z[:2], z[1:], np.eye(3)[:2], np.eye(3)[1:]

    bad = Mx.FiberedProduct(3, embed, lambda x: (2 * x[:1], np.array([[2.0, 0.0]])))
    with pytest.raises(SubmersionPreconditionFailed):
        Mx.pullback_fibered_metric(lambda x: np.eye(2), lambda x: np.eye(2), lambda x: np.eye(1),
                                   bad, check_points=[np.zeros(2)])


def test_fibered_gram_identity_cancels():
    rng = np.random.default_rng(3)
    q = rng.standard_normal((3, 3))
    g = q @ q.T + np.eye(3)
    eye = np.eye(3)
    out = Mx.fibered_gram(g, 2 * g, g, eye, eye, eye)
    assert np.array_equal(out, Mx.symmetrize(2 * g))
