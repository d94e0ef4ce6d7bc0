import numpy as np
import pytest

from desing import actions as A
from desing import blowup as B
from desing import presets
from desing import strata as S
from desing.errors import CenterNotRecognized


def load(name):
    return A.load_action(presets.preset_path(name))


def test_odd_resolution():
    assert S.odd_resolution(16) == 17
    assert S.odd_resolution(21) == 21


def test_z2_line_is_one_stratum():
    # finite group: every leaf is a point, so the action is already regular
    st = S.stratify(load("z2_r1"), 1.0, 21)
    assert st.codim_classes == [1]
    assert len(st.strata) == 1 and st.strata[0].estimated_dim == 1


def test_so3_strata():
    st = S.stratify(load("so3_r3"), 1.0, 15)
    assert st.codim_classes == [1, 3]
    assert S.check_frontier(st)["passed"]


def test_t2_strata_and_density():
    st = S.stratify(load("t2_r4"), 1.0, 9)
    assert st.min_codim == 2
    assert st.max_codim == 4
    assert S.check_density(st)["passed"]
    assert S.check_witness_dimensions(st, load("t2_r4"))["passed"]


def test_to_list_is_serializable_shape():
    st = S.stratify(load("s1_r3"), 1.0, 11)
    rows = st.to_list()
    assert all({"codim", "component_id", "dim", "witnesses"} <= set(r) for r in rows)


def test_most_singular_center_is_axis():
    centers = S.most_singular_stratum(load("s1_r3"), 1.0, 11)
    assert len(centers) == 1
    c = centers[0]
    assert c.dim == 1 and c.codim == 2
    assert np.allclose(np.abs(c.basis[:, 0]), [0, 0, 1])


def test_stage_strata_after_one_blowup_t2():
    a = load("t2_r4")
    m1 = B.blow_up(B.BlownUpManifold(4), S.most_singular_stratum(a), action=a)
    st = S.stratify_stage(B.LiftedAction(a, m1), 1.0, 9)
    assert st.max_codim == 3 and st.min_codim == 2
    assert S.check_frontier(st)["passed"]


def test_unrecognized_center():
    a = load("t2_r4")
    m1 = B.blow_up(B.BlownUpManifold(4), S.most_singular_stratum(a), action=a)
    lifted = B.LiftedAction(a, m1)
    st = S.stratify_stage(lifted, 1.0, 9)
    # corrupt the most singular samples so the fit residual explodes
    cid, pts, codims, comp, spacing = st.samples[0]
    pts = pts.copy()
    top = np.flatnonzero(codims == codims.max())
    rng = np.random.default_rng(0)
    pts[top] += rng.normal(scale=0.3, size=pts[top].shape)
    st.samples[0] = (cid, pts, codims, comp, spacing)
    with pytest.raises(CenterNotRecognized):
        S.most_singular_stratum(lifted, strat=st)
