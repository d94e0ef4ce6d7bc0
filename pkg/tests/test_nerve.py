import numpy as np
import pytest

from desing import actions as A
from desing import blowup as B
from desing import metrics as Mx
from desing import nerve as N
from desing import presets
from desing.errors import UnsupportedGroup


def load(name):
    return A.load_action(presets.preset_path(name))


@pytest.mark.parametrize("k", [0, 1, 2])
def test_z2_faces_exact(k):
    rep = N.nerve_metric_check(load("z2_r1"), Mx.euclidean_field(1), k=k, tol=0.0)
    assert rep["passed"] and rep["max_defect"] == 0.0


def test_level_limit():
    with pytest.raises(UnsupportedGroup):
        N.nerve_metric_check(load("z2_r1"), Mx.euclidean_field(1), k=3)


def test_torus_unsupported():
    with pytest.raises(UnsupportedGroup):
        N.NerveMetrics(load("t2_r4"), Mx.euclidean_field(4))


def test_circle_base_faces():
    rep = N.nerve_metric_check(load("s1_r2"), Mx.euclidean_field(2), k=2, n_samples=4)
    assert rep["passed"], rep["faces"]
    assert set(rep["faces"]) == {"1:source", "1:target", "2:drop_last", "2:compose", "2:drop_first"}


def test_circle_blowup_faces():
    a = load("s1_r2")
    res = B.desingularize(a, samples=200)
    e = Mx.euclidean_field(2)
    nm = N.NerveMetrics(a, e, manifold=res.manifold)
    up = Mx.base_blowup_metric(a, res.manifold, 0.5, nm.base_field())
    rep = N.nerve_metric_check(a, e, k=1, manifold=res.manifold, upstairs_field=up, n_samples=3)
    assert rep["max_defect"] < 1e-6


def test_base_metric_level_zero_is_invariant():
    a = load("s1_r2")
    nm = N.NerveMetrics(a, Mx.euclidean_field(2))
    x = np.array([0.3, -0.2])
    g = nm.metric((), 0, x)
    assert np.allclose(g, g.T) and np.linalg.eigvalsh(g).min() > 0
