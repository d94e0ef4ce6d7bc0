"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line with the tolerance it was held
to.  The module also runs as a script: ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

from desing import actions as A
from desing import blowup as B
from desing import metrics as Mx
from desing import nerve as N
from desing import presets
from desing import quotient as Q
from desing import strata as S

pytestmark = pytest.mark.acceptance

# pinned tolerances
STRAT_TIME = 5.0
DESING_TIME = 60.0
DESING_SAMPLES = 10_000
LEAF_TOL = 1e-9
P1_TOL = 1e-6
E_SUBMERSION_TOL = 1e-9
OUTER_SAMPLES = 1000
METRIC_TIME = 10.0
AVG_TOL = 1e-10
FIXED_TOL = 1e-12
IDEM_TOL = 1e-10
PULLBACK_TOL = 1e-9
PULLBACK_SAMPLES = 1000
NERVE_S1_TOL = 1e-6
DX_TARGET, DX_TOL, DX_SAMPLES = 0.5, 0.02, 200
GH_PAIR = 0.5
EPS_SCHEDULE = (0.2, 0.1, 0.05)
QUOTIENT_TIME = 120.0

_lines = []


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}"
    _lines.append(line)
    print(line)


def load(name):
    return A.load_action(presets.preset_path(name))


def test_1_stratification():
    a = load("s1_r3")
    t = time.perf_counter()
    st = S.stratify(a, 1.0, 21)
    fr = S.check_frontier(st)
    c1 = S.check_no_codim_one(st)
    wit = S.check_witness_dimensions(st, a)
    elapsed = time.perf_counter() - t
    axis = [s for s in st.strata if s.leaf_codim == 3]
    ok = (st.codim_classes == [2, 3] and len(axis) == 1 and axis[0].estimated_dim == 1
          and all(S.stratum_dimension(a, w[1]) == 1 for w in axis[0].witness_points)
          and wit["passed"] and fr["passed"] and c1["passed"] and elapsed < STRAT_TIME)
    report(1, "S1 x R3 stratification", ok,
           f"codims={st.codim_classes} axis_dim={[s.estimated_dim for s in axis]} "
           f"witnesses_match={wit['passed']} frontier={fr['passed']} "
           f"no_codim_one={c1['passed']} time={elapsed:.2f}s (< {STRAT_TIME}s)")
    assert ok


def test_2_desingularization():
    expect = {"z2_r1": (0, 0), "s1_r3": (1, 1), "so3_r3": (1, 2), "t2_r4": (2, 2)}
    t = time.perf_counter()
    got = {}
    for name in expect:
        res = B.desingularize(load(name), samples=DESING_SAMPLES)
        d = res.to_dict()
        got[name] = (res.stage_count, d["orbit_dim"], d["final_regular"], d["samples"])
    elapsed = time.perf_counter() - t
    ok = all(got[k][:2] == v and got[k][2] and got[k][3] >= DESING_SAMPLES
             for k, v in expect.items()) and elapsed < DESING_TIME
    report(2, "desingularization stages", ok,
           " ".join(f"{k}:stages={v[0]},dim={v[1]},regular={v[2]},n={v[3]}" for k, v in got.items())
           + f" time={elapsed:.1f}s (< {DESING_TIME}s)")
    assert ok


def test_3_exceptional_leaves():
    rows = []
    ok = True
    for name in ("s1_r2", "s1_r3", "so3_r3", "s1w_r4", "t2_r4"):
        a = load(name)
        res = B.desingularize(a, samples=1000)
        m1 = res.stages[0][1]
        r = B.exceptional_leaf_check(a, m1, tol=LEAF_TOL)
        ok = ok and r["passed"]
        rows.append(f"{name}:defect={r['max_leaf_defect']:.1e},dim_failures={len(r['dimension_failures'])}")
    report(3, "exceptional leaves", ok, " ".join(rows) + f" (tol {LEAF_TOL})")
    assert ok


def test_4_blowup_metric():
    t = time.perf_counter()
    a2 = load("s1_r2")
    m2 = B.blow_up(B.BlownUpManifold(2), B.make_center(0, A.fixed_subspace(a2), 2), action=a2)
    e2 = Mx.euclidean_field(2)
    f2 = Mx.base_blowup_metric(a2, m2, 0.5, e2)
    length_err = abs(Mx.exceptional_fiber_length(f2, m2) - np.pi)

    a3 = load("s1_r3")
    m3 = B.blow_up(B.BlownUpManifold(3), B.make_center(0, A.fixed_subspace(a3), 3), action=a3)
    e3 = Mx.euclidean_field(3)
    rho = 0.5
    f3 = Mx.base_blowup_metric(a3, m3, rho, e3)
    src, tgt = Mx.exceptional_fields(f3, e3, m3)
    rng = np.random.default_rng(0)
    pts = [(c.id, rng.uniform(-1, 1, 2)) for c in m3.leaf_charts for _ in range(100)]
    sub = Mx.check_riemannian_submersion(Mx.exceptional_projection(m3), src, tgt, pts,
                                         E_SUBMERSION_TOL)

    center = m3.stages[0].centers[0]
    charts = m3.leaf_charts + [m3.charts[m3.outer_chart]]
    outer = []
    while len(outer) < OUTER_SAMPLES:
        c = charts[len(outer) % len(charts)]
        y = rng.uniform(-1, 1, 3) * m3.chart_box(c.id, 1.0)
        if np.linalg.norm(center.normal.T @ m3.blow_down(c.id, y)) > rho:
            outer.append((c.id, y))
    iso = Mx.check_isometry_outside(m3, f3, e3, rho, outer, 0.0)

    # inside the tube the angular direction is stretched: pi is not a submersion there
    inner = [(m3.leaf_charts[0].id, np.array([0.1, 0.2, 0.5]))]
    neg = Mx.check_riemannian_submersion(Mx.blowdown_map(m3), f3, e3, inner)
    elapsed = time.perf_counter() - t
    ok = (length_err < P1_TOL and sub["passed"] and iso["bit_equal"]
          and iso["samples"] == OUTER_SAMPLES and not neg["passed"] and elapsed < METRIC_TIME)
    report(4, "blow-up metric", ok,
           f"|len(P1)-pi|={length_err:.1e} (< {P1_TOL}) "
           f"E-submersion={sub['max_defect']:.1e} (< {E_SUBMERSION_TOL}) "
           f"outer bit_equal={iso['bit_equal']} on {iso['samples']} "
           f"negative_control_failed={not neg['passed']} time={elapsed:.2f}s (< {METRIC_TIME}s)")
    assert ok


def test_5_averaging():
    a = load("s1_r2")
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, (20, 2))
    avg = Mx.average_metric(a, Mx.constant_field(np.diag([1.0, 4.0])))
    err = max(np.abs(avg(0, p) - 1.6 * np.eye(2)).max() for p in pts)
    twice = Mx.average_metric(a, avg)
    idem = max(np.abs(twice(0, p) - avg(0, p)).max() for p in pts)
    inv = Mx.function_field(lambda x: np.eye(2) * (1 + x @ x) + np.outer(x, x), 2)
    fixed = max(np.abs(Mx.average_metric(a, inv)(0, p) - inv(0, p)).max() for p in pts)
    ok = err < AVG_TOL and fixed < FIXED_TOL and idem < IDEM_TOL
    report(5, "averaging", ok, f"diag(1,4)->1.6I err={err:.1e} (< {AVG_TOL}) "
           f"fixed={fixed:.1e} (< {FIXED_TOL}) idempotence={idem:.1e} (< {IDEM_TOL})")
    assert ok


def _pullback_case():
    """M = R^2 -> N = R by x1, M' = R^2 -> N by x2_1, both Riemannian submersions."""

    def eta(x):
        c = np.sin(x[1]) + 0.3 * x[0]
        return np.array([[1 + c * c, c], [c, 1.0 + 0 * x[0]]])

    def eta2(x2):
        c = 0.5 * np.cos(x2[0] * x2[1])
        s = 2.0 + np.tanh(x2[1])
        return np.array([[1 + c * c * s, c * s], [c * s, s]])

    def eta_n(x):
        return np.eye(1)

    def embed(z):
        t, a, b = z
        tm = np.array([[1.0, 0, 0], [0, 1.0, 0]])
        tp = np.array([[1.0, 0, 0], [0, 0, 1.0]])
        return np.array([t, a]), np.array([t, b]), tm, tp

    prod = Mx.FiberedProduct(3, embed, lambda x: (x[:1], np.array([[1.0, 0.0]])))
    return eta, eta2, eta_n, prod


def test_6_pullback_metric():
    eta, eta2, eta_n, prod = _pullback_case()
    rng = np.random.default_rng(2)
    zs = rng.uniform(-2, 2, (PULLBACK_SAMPLES, 3))

    # f = identity, eta_N = eta: the product metric is exactly p'^* eta'
    ident = Mx.FiberedProduct(2, lambda z: (z, z, np.eye(2), np.eye(2)), lambda x: (x, np.eye(2)))
    deg = Mx.pullback_fibered_metric(eta, eta2, eta, ident)
    exact = all(np.array_equal(deg(0, z[:2]), Mx.symmetrize(np.eye(2).T @ eta2(z[:2]) @ np.eye(2)))
                for z in zs)

    g = Mx.pullback_fibered_metric(eta, eta2, eta_n, prod, check_points=zs[:, :2], tol=PULLBACK_TOL)
    worst_sub = 0.0
    spd = True
    for z in zs:
        gz = g(0, z)
        spd = spd and np.linalg.eigvalsh(gz).min() > 0
        _, x2, _, tp = prod.embed(z)
        worst_sub = max(worst_sub, Mx.submersion_defect(tp, gz, eta2(x2)))
    ok = exact and spd and worst_sub < PULLBACK_TOL
    report(6, "pull-back metric", ok, f"identity_exact={exact} spd={spd} "
           f"p'-submersion={worst_sub:.1e} (< {PULLBACK_TOL}) on {len(zs)} samples")
    assert ok


def test_7_nerve():
    z2 = load("z2_r1")
    rz = N.nerve_metric_check(z2, Mx.euclidean_field(1), k=2, tol=0.0)
    a2 = load("s1_r2")
    res = B.desingularize(a2, samples=1000)
    e2 = Mx.euclidean_field(2)
    nm = N.NerveMetrics(a2, e2, manifold=res.manifold)
    up = Mx.base_blowup_metric(a2, res.manifold, 0.5, nm.base_field())
    rs = N.nerve_metric_check(a2, e2, k=2, manifold=res.manifold, upstairs_field=up,
                              n_samples=6, tol=NERVE_S1_TOL)
    ok = rz["max_defect"] == 0.0 and rs["max_defect"] < NERVE_S1_TOL and rs["samples"] > 0
    report(7, "nerve face maps k<=2", ok, f"Z2 defect={rz['max_defect']!r} (== 0) "
           f"S1 blow-up defect={rs['max_defect']:.1e} (< {NERVE_S1_TOL}) on {rs['samples']} points")
    assert ok


def test_8_quotient_and_gh():
    t = time.perf_counter()
    a = load("s1_r2")
    e = Mx.euclidean_field(2)
    x = Q.sample_orbit_space(a, e, DX_SAMPLES, seed=0)
    r = np.linalg.norm(np.array([p[2] for p in x.points]), axis=1)
    i = int(np.argmin(np.abs(r - 0.2)))
    j = int(np.argmin(np.abs(r - 0.7)))
    dx = float(x.distances[i, j])
    two_a = Q.FiniteMetricSpace(("p", "q"), np.array([[0.0, 1.0], [1.0, 0.0]]))
    two_b = Q.FiniteMetricSpace(("p", "q"), np.array([[0.0, 2.0], [2.0, 0.0]]))
    gh = Q.gh_distance(two_a, two_b, "exact")
    res = B.desingularize(a, samples=1000)
    cmp_ = Q.compare_quotients(a, res, list(EPS_SCHEDULE), n_samples=DX_SAMPLES)
    elapsed = time.perf_counter() - t
    ok = (abs(dx - DX_TARGET) <= DX_TOL and gh == (GH_PAIR, GH_PAIR) and cmp_["passed"]
          and cmp_["monotone"] and elapsed < QUOTIENT_TIME)
    rows = " ".join(f"eps={row['eps']}:upper={row['upper']:.4f}" for row in cmp_["rows"])
    report(8, "quotient and GH", ok,
           f"d_X(r={r[i]:.3f},r={r[j]:.3f})={dx:.4f} (0.5 +- {DX_TOL}) gh_pair={gh} "
           f"{rows} monotone={cmp_['monotone']} time={elapsed:.1f}s (< {QUOTIENT_TIME}s)")
    assert ok


PIPELINE = [
    ["stratify", "--action", "s1_r3", "--out", "strata.json"],
    ["desingularize", "--action", "t2_r4", "--samples", "2000", "--out", "desing.json"],
    ["metric-check", "--action", "s1_r3", "--kind", "submersion", "--out", "sub.json"],
    ["metric-check", "--action", "s1_r2", "--kind", "nerve", "--samples", "3", "--out", "nerve.json"],
    ["quotient", "--action", "s1_r2", "--samples", "120", "--out", "X.csv"],
    ["quotient", "--action", "s1_r2", "--samples", "120", "--stage", "1", "--out", "Xt.csv"],
    ["gh", "--a", "X.csv", "--b", "Xt.csv", "--mode", "bounds", "--out", "gh.json"],
    ["compare", "--action", "s1_r2", "--samples", "120", "--out", "compare.json"],
    ["plot", "--input", "compare.json", "--out", "compare.svg"],
]


def _run_pipeline(threads):
    out = tempfile.mkdtemp(prefix=f"desing-t{threads}-")
    env = dict(os.environ, DESING_THREADS=str(threads))
    for cmd in PIPELINE:
        subprocess.run([sys.executable, "-m", "desing.cli", *cmd], cwd=out, env=env, check=True,
                       capture_output=True)
    files = {}
    for name in sorted(os.listdir(out)):
        with open(os.path.join(out, name), "rb") as fh:
            files[name] = fh.read()
    return files


def test_9_determinism():
    runs = [_run_pipeline(1), _run_pipeline(1), _run_pipeline(4)]
    same = all(r == runs[0] for r in runs[1:])
    ok = same and len(runs[0]) == sum(1 for c in PIPELINE if "--out" in c)
    report(9, "determinism", ok, f"{len(runs[0])} artifacts byte-identical across 3 runs "
           f"(threads 1, 1, 4): {same}")
    assert ok


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
