"""Riemannian metric fields on chart atlases and the checks built on them.

A :class:`MetricField` maps ``(chart id, chart point)`` to a symmetric
matrix.  Constructions provided here:

* constant / Euclidean fields on the base,
* the fibered-product metric ``p*eta + p'*eta' - (f p)*eta_N``,
* Haar averaging of dual metrics,
* the block metric on a first-stage blow-up, including its extension
  over the exceptional divisor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import actions as act_mod
from .blowup import BlownUpManifold, LiftedAction
from .errors import (
    FrameDegenerate,
    NotSPD,
    SubmersionPreconditionFailed,
    UnsupportedStage,
)

SPD_FLOOR = 0.0


@dataclass(frozen=True)
class MetricField:
    evaluator: Callable = field(repr=False)
    tag: str
    dim: int
    manifold: BlownUpManifold | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __call__(self, cid, y):
        return self.evaluator(cid, np.asarray(y, dtype=float))


def symmetrize(m):
    return 0.5 * (m + m.T)


def pullback_matrix(jac, g):
    """Gram matrix ``J^T G J`` made exactly symmetric."""
    return symmetrize(jac.T @ g @ jac)


def eval_metric(field_, cid, y):
    """Evaluate and verify symmetry and positive definiteness."""
    g = np.asarray(field_(cid, y), dtype=float)
    if not np.array_equal(g, g.T):
        raise NotSPD("metric is not symmetric", chart=cid, point=np.asarray(y).tolist())
    eig = np.linalg.eigvalsh(g)
    if not eig[0] > SPD_FLOOR:
        raise NotSPD("metric is not positive definite", chart=cid,
                     point=np.asarray(y).tolist(), eigenvalues=eig.tolist())
    return g


def constant_field(matrix, manifold=None, tag="constant"):
    mat = symmetrize(np.asarray(matrix, dtype=float))
    return MetricField(lambda cid, y: mat.copy(), tag, mat.shape[0], manifold)


def euclidean_field(n):
    eye = np.eye(n)
    return MetricField(lambda cid, y: eye.copy(), "euclidean", n)


def function_field(fn, dim, tag="user"):
    """Field on the base from a callable ``x -> matrix``."""
    return MetricField(lambda cid, y: symmetrize(np.asarray(fn(y), dtype=float)), tag, dim)


def continuity_constant(field_, points, cid=0, h=1e-6, seed=0):
    """Largest observed ``|G(x+h) - G(x)| / |h|`` over the sample points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in np.atleast_2d(points):
        d = rng.standard_normal(len(p))
        d *= h / np.linalg.norm(d)
        diff = np.max(np.abs(field_(cid, p + d) - field_(cid, p)))
        worst = max(worst, diff / h)
    return worst


# ------------------------------------------------------------------ submersions

def submersion_defect(jac, g_src, g_tgt):
    """Max deviation from isometry on the horizontal space of ``jac``.

    Returns ``inf`` when ``jac`` is not surjective.
    """
    jac = np.atleast_2d(jac)
    rows = jac.shape[0]
    if rows == 0:
        return 0.0
    if act_mod.numerical_rank(jac) < rows:
        return float("inf")
    ker = act_mod.null_basis(jac)
    if ker.shape[1]:
        horiz = act_mod.null_basis(ker.T @ g_src)
    else:
        horiz = np.eye(jac.shape[1])
    gram = horiz.T @ g_src @ horiz
    chol = np.linalg.cholesky(symmetrize(gram))
    horiz = np.linalg.solve(chol, horiz.T).T  # src-orthonormal
    dh = jac @ horiz
    src = symmetrize(horiz.T @ g_src @ horiz)
    tgt = symmetrize(dh.T @ g_tgt @ dh)
    return float(np.max(np.abs(src - tgt)))


def check_riemannian_submersion(f, src_field, tgt_field, samples, tol=1e-9):
    """Check a map is a Riemannian submersion at ``samples``.

    ``f(cid, y)`` returns ``(target chart, target point, jacobian)``.
    ``samples`` is an iterable of ``(chart id, point)``.
    """
    worst = 0.0
    failures = []
    count = 0
    for cid, y in samples:
        y = np.asarray(y, dtype=float)
        tcid, ty, jac = f(cid, y)
        d = submersion_defect(jac, src_field(cid, y), tgt_field(tcid, ty))
        count += 1
        worst = max(worst, d)
        if not d <= tol:
            failures.append({"chart": int(cid), "point": y.tolist(), "defect": d})
    return {"kind": "submersion", "samples": count, "max_defect": worst,
            "failures": failures, "passed": not failures and count > 0, "tol": tol}


# ------------------------------------------------------------------ fibered products

@dataclass(frozen=True)
class FiberedProduct:
    """A parametrised fibered product ``M x_N M'``.

    ``embed(z)`` returns ``(x, x2, Tm, Tp)``: the two projections of the
    parameter point and their Jacobians.  ``f(x)`` returns ``(f(x), df(x))``.
    """

    dim: int
    embed: Callable
    f: Callable


def fibered_gram(g_m, g_m2, g_n, tm, tp, dfx):
    """``Tp^T eta' Tp + (Tm^T eta Tm - (df Tm)^T eta_N (df Tm))``.

    The bracket is formed first so that ``f = id, eta_N = eta`` cancels
    exactly.
    """
    a = tm.T @ g_m @ tm
    dtm = dfx @ tm
    b = dtm.T @ g_n @ dtm
    return symmetrize(tp.T @ g_m2 @ tp + (a - b))


def pullback_fibered_metric(eta, eta2, eta_n, product, check_points=None, tol=1e-9):
    """Metric on the fibered product from metrics on the three factors.

    ``eta``, ``eta2`` and ``eta_n`` are callables ``point -> matrix``.
    When ``check_points`` is given, ``f`` is first verified to be a
    Riemannian submersion there.
    """
    if check_points is not None:
        worst = 0.0
        for x in check_points:
            fx, dfx = product.f(np.asarray(x, dtype=float))
            worst = max(worst, submersion_defect(dfx, eta(x), eta_n(fx)))
        if not worst <= tol:
            raise SubmersionPreconditionFailed("f is not a Riemannian submersion",
                                               max_defect=worst)

    def evaluate(cid, z):
        x, x2, tm, tp = product.embed(z)
        fx, dfx = product.f(x)
        return fibered_gram(eta(x), eta2(x2), eta_n(fx), tm, tp, dfx)

    return MetricField(evaluate, "pullback", product.dim)


# ------------------------------------------------------------------ averaging

def _quadrature(action, quadrature):
    if quadrature is None:
        return action.group.haar_matrices, action.group.haar_weights
    mats, weights = quadrature
    return np.asarray(mats, dtype=float), np.asarray(weights, dtype=float)


def average_dual(action, field_, cid, y, quadrature=None, lifted=None):
    mats, weights = _quadrature(action, quadrature)
    m = len(y)
    acc = np.zeros((m, m))
    for g, w in zip(mats, weights):
        if lifted is None:
            c2, y2, jac = cid, y @ g.T, g
        else:
            c2, y2, jac = lifted.act_with_jacobian(g, cid, y)
        ginv = np.linalg.inv(field_(c2, y2))
        jinv = np.linalg.inv(jac)
        acc += w * (jinv @ ginv @ jinv.T)
    return symmetrize(acc)


def average_metric(action, field_, quadrature=None, manifold=None):
    """Haar average of a metric, computed on duals."""
    lifted = None
    if manifold is not None and manifold.stage_count:
        lifted = LiftedAction(action, manifold)

    def evaluate(cid, y):
        return symmetrize(np.linalg.inv(average_dual(action, field_, cid, y, quadrature, lifted)))

    return MetricField(evaluate, "averaged", field_.dim, manifold,
                       {"source": field_.tag})


def invariance_defect(action, field_, samples, manifold=None):
    """Max over nodes and samples of ``|J^T G(g y) J - G(y)|``."""
    lifted = LiftedAction(action, manifold) if manifold is not None and manifold.stage_count else None
    worst = 0.0
    for cid, y in samples:
        y = np.asarray(y, dtype=float)
        base = field_(cid, y)
        for g in action.group.haar_matrices:
            if lifted is None:
                c2, y2, jac = cid, y @ g.T, g
            else:
                c2, y2, jac = lifted.act_with_jacobian(g, cid, y)
            worst = max(worst, float(np.max(np.abs(pullback_matrix(jac, field_(c2, y2)) - base))))
    return worst


# ------------------------------------------------------------------ splitting frame

@dataclass(frozen=True)
class SplittingFrame:
    """Adapted bases (columns, base coordinates) at a point near the center."""

    H: np.ndarray
    Hp: np.ndarray
    K: np.ndarray
    Kperp: np.ndarray
    h: np.ndarray = field(repr=False)  # pr* eta on the whole tangent space

    @property
    def B(self):
        return np.hstack([self.H, self.Hp])

    @property
    def basis(self):
        return np.hstack([self.H, self.Hp, self.K, self.Kperp])


def _g_orth_complement(vectors, g, n):
    """Basis of the g-orthogonal complement of span(vectors)."""
    if vectors.shape[1] == 0:
        return np.eye(n)
    return act_mod.null_basis(vectors.T @ g)


def _span(vectors):
    if vectors.shape[1] == 0:
        return vectors
    return act_mod.range_basis(vectors)


def splitting_frame(action, center, v, direction, g_v):
    """Frame at ``v`` (or at the foot when ``v`` is on the center).

    ``direction`` is a nonzero normal vector giving the radial line.
    ``g_v`` is the base metric at ``v``.
    """
    n = action.ambient_dim
    foot = center.basis @ (center.basis.T @ v)
    orbit = act_mod.generator_matrix(action, v)
    stab = act_mod.stabilizer_subalgebra(action, foot)
    if stab.shape[0] and orbit.shape[1]:
        iso = orbit @ stab.T
    else:
        iso = np.zeros((n, 0))
    t_orb = _span(orbit) if orbit.shape[1] else np.zeros((n, 0))
    t_iso = _span(iso) if iso.shape[1] else np.zeros((n, 0))
    # H = t_iso^perp inside t_orb
    if t_orb.shape[1]:
        if t_iso.shape[1]:
            coeff = act_mod.null_basis(t_iso.T @ g_v @ t_orb)
            H = t_orb @ coeff
        else:
            H = t_orb
    else:
        H = np.zeros((n, 0))
    N = center.normal
    both = np.hstack([H, N])
    if act_mod.numerical_rank(both) < both.shape[1]:
        raise FrameDegenerate("orbit directions meet the normal space", point=v.tolist())
    Hp = _g_orth_complement(both, g_v, n)
    B = np.hstack([H, Hp])
    b_perp = _g_orth_complement(B, g_v, n)
    # g-orthogonal projector onto b_perp
    gram = b_perp.T @ g_v @ b_perp
    pr = b_perp @ np.linalg.solve(gram, b_perp.T @ g_v)
    h = symmetrize(pr.T @ g_v @ pr)
    k = np.asarray(direction, dtype=float).reshape(n, 1)
    k = k / np.linalg.norm(k)
    hn = N.T @ h @ N
    kn = N.T @ k
    kperp = N @ act_mod.null_basis(kn.T @ hn) if N.shape[1] > 1 else np.zeros((n, 0))
    frame = SplittingFrame(H=H, Hp=Hp, K=k, Kperp=kperp, h=h)
    if act_mod.numerical_rank(frame.basis) < n:
        raise FrameDegenerate("splitting frame does not span the tangent space",
                              point=v.tolist())
    return frame


def block_parts(action, center, v, direction, base_field):
    """Matrices ``(A, C)`` with ``G_bar = A + C / |nu|^2`` at ``v``."""
    g_v = base_field(0, v)
    foot = center.basis @ (center.basis.T @ v)
    g_foot = base_field(0, foot)
    fr = splitting_frame(action, center, v, direction, g_v)
    dp = center.basis @ center.basis.T
    F = fr.basis
    nb = fr.B.shape[1]
    Bm, K, Kp = fr.B, fr.K, fr.Kperp
    gam_a = np.zeros((action.ambient_dim,) * 2)
    gam_c = np.zeros_like(gam_a)
    gam_a[:nb, :nb] = Bm.T @ dp.T @ g_foot @ dp @ Bm
    gam_a[nb, nb] = float(K[:, 0] @ fr.h @ K[:, 0])
    gam_c[nb + 1:, nb + 1:] = Kp.T @ fr.h @ Kp
    finv = np.linalg.inv(F)
    return symmetrize(finv.T @ gam_a @ finv), symmetrize(finv.T @ gam_c @ finv)


def smoothstep(t):
    """Quintic smoothstep: 0 for t <= 0, 1 for t >= 1, C^2."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6 * t - 15) + 10)


def cutoff(d, rho):
    """1 on [0, rho/2], 0 on [rho, inf), C^2 blend in between."""
    return 1.0 - smoothstep((d - 0.5 * rho) / (0.5 * rho))


# ------------------------------------------------------------------ blow-up metric

def _chart_pieces(chart):
    """(Q_C, Q_N w, U) for a projective chart at coordinates y."""
    c = chart.center
    i = chart.normal_index

    def pieces(y):
        u = y[c.dim + 1:]
        w = np.insert(u, i, 1.0)
        cols = [j for j in range(c.codim) if j != i]
        dw = np.zeros((c.codim, c.codim - 1))
        for col, j in enumerate(cols):
            dw[j, col] = 1.0
        return c.basis, c.normal @ w, c.normal @ dw, w

    return pieces


def base_blowup_metric(action, manifold, rho, base_field):
    """Block metric on a first-stage blow-up of the base.

    Equal to the pull-back of ``base_field`` where the blown-down point
    is at distance >= ``rho`` from the center.
    """
    if manifold.stage_count != 1 or manifold.stages[0].centers[0].chart_id != 0:
        raise UnsupportedStage("blow-up metrics are built for a single blow-up of the base",
                               stages=manifold.stage_count)
    center = manifold.stages[0].centers[0]
    n = manifold.n

    def gbar_base(v):
        """Blended base-chart metric off the center."""
        nu = center.normal @ (center.normal.T @ v)
        d = float(np.linalg.norm(nu))
        g = base_field(0, v)
        if d >= rho:
            return g
        if d == 0.0:
            raise FrameDegenerate("base chart metric is singular on the center",
                                  point=v.tolist())
        a, c = block_parts(action, center, v, nu, base_field)
        chi = cutoff(d, rho)
        return symmetrize(chi * (a + c / d ** 2) + (1.0 - chi) * g)

    def evaluate(cid, y):
        chart = manifold.charts[cid]
        if chart.kind != "projective":
            v = y
            if chart.kind == "outer" or cid == 0:
                d = float(np.linalg.norm(center.normal.T @ v))
                if d >= rho:
                    return pullback_matrix(np.eye(n), base_field(0, v))
            return gbar_base(v)
        v = manifold.blow_down(cid, y)
        jac = manifold.blow_down_jacobian(cid, y)
        qc, qw, U, w = _chart_pieces(chart)(y)
        tau = y[center.dim]
        wn = float(np.linalg.norm(w))
        d = abs(tau) * wn
        g = base_field(0, v)
        if d >= rho:
            return pullback_matrix(jac, g)
        a, c = block_parts(action, center, v, qw, base_field)
        dhat = np.hstack([qc, qw[:, None], U])
        scale = np.ones(n)
        scale[center.dim + 1:] = tau
        up = (dhat * scale).T @ a @ (dhat * scale)
        k1 = center.dim + 1
        up[k1:, k1:] += U.T @ c @ U / wn ** 2
        up = symmetrize(up)
        chi = cutoff(d, rho)
        if chi == 1.0:
            return up
        return symmetrize(chi * up + (1.0 - chi) * pullback_matrix(jac, g))

    return MetricField(evaluate, "blowup_block", n, manifold,
                       {"rho": rho, "base": base_field.tag, "gbar": gbar_base})


def naive_block_metric(action, manifold, base_field, cid, y):
    """``dphi^T G_bar dphi`` evaluated directly (ill-conditioned near E)."""
    center = manifold.stages[0].centers[0]
    v = manifold.blow_down(cid, y)
    jac = manifold.blow_down_jacobian(cid, y)
    nu = center.normal @ (center.normal.T @ v)
    a, c = block_parts(action, center, v, nu, base_field)
    return pullback_matrix(jac, a + c / float(nu @ nu))


def e_limit_check(action, manifold, base_field, cid, y0, taus=(1e-3, 1e-4), rho=1.0):
    """Compare the exact E-metric with direct evaluation at small tau.

    Only the block tangent to E (all coordinates except tau) is compared.
    Returns a list of max-abs differences, one per tau.
    """
    field_ = base_blowup_metric(action, manifold, rho, base_field)
    chart = manifold.charts[cid]
    k = chart.center.dim
    y0 = np.array(y0, dtype=float)
    y0[k] = 0.0
    keep = [i for i in range(len(y0)) if i != k]
    lim = field_(cid, y0)[np.ix_(keep, keep)]
    out = []
    for t in taus:
        y = y0.copy()
        y[k] = t
        num = naive_block_metric(action, manifold, base_field, cid, y)[np.ix_(keep, keep)]
        out.append(float(np.max(np.abs(num - lim))))
    return out


def exceptional_fiber_length(field_, manifold, s=None, nodes=64):
    """Length of the projective line over a center point for a 2-codim center.

    Sums the Gauss-Legendre arc length over every projective chart with
    u in [-1, 1] (the charts overlap only in endpoints).
    """
    from numpy.polynomial.legendre import leggauss

    x, w = leggauss(nodes)
    total = 0.0
    for chart in manifold.leaf_charts:
        c = chart.center
        if c.codim != 2:
            raise UnsupportedStage("fiber length needs a codimension-two center")
        k = c.dim
        for xi, wi in zip(x, w):
            y = np.zeros(manifold.n)
            if s is not None:
                y[:k] = s
            y[k + 1] = xi
            g = field_(chart.id, y)
            total += wi * np.sqrt(g[k + 1, k + 1])
    return total


def exceptional_projection(manifold):
    """``pi|_E`` in (s, u) coordinates onto center coordinates s."""
    center = manifold.stages[0].centers[0]
    k = center.dim

    def f(cid, z):
        jac = np.zeros((k, len(z)))
        jac[:, :k] = np.eye(k)
        return 0, z[:k], jac

    return f


def exceptional_fields(field_, base_field, manifold):
    """Restrictions to E (drop tau) and to the center (s coordinates)."""
    center = manifold.stages[0].centers[0]
    k = center.dim

    def src(cid, z):
        y = np.insert(z, k, 0.0)
        g = field_(cid, y)
        keep = [i for i in range(len(y)) if i != k]
        return g[np.ix_(keep, keep)]

    def tgt(cid, s):
        x = center.basis @ s
        return pullback_matrix(center.basis, base_field(0, x))

    return src, tgt


def check_isometry_outside(manifold, upstairs, base_field, rho, samples, tol=1e-9):
    """Compare ``J^T G_base J`` with the upstairs field away from the center.

    Samples whose blown-down point is within ``rho`` of the center are
    skipped.  Returns the report and whether the fields were bit-equal.
    """
    center = manifold.stages[0].centers[0] if manifold.stage_count else None
    worst = 0.0
    count = 0
    exact = True
    failures = []
    for cid, y in samples:
        y = np.asarray(y, dtype=float)
        x = manifold.blow_down(cid, y)
        if center is not None and np.linalg.norm(center.normal.T @ x) <= rho:
            continue
        chart = manifold.charts[cid]
        jac = manifold.blow_down_jacobian(cid, y) if chart.kind == "projective" else np.eye(manifold.n)
        expect = pullback_matrix(jac, base_field(0, x))
        got = upstairs(cid, y)
        count += 1
        diff = float(np.max(np.abs(expect - got)))
        exact = exact and np.array_equal(expect, got)
        worst = max(worst, diff)
        if diff > tol:
            failures.append({"chart": int(cid), "point": y.tolist(), "defect": diff})
    return {"kind": "isometry", "samples": count, "max_defect": worst, "bit_equal": bool(exact),
            "failures": failures, "passed": not failures and count > 0, "tol": tol}


def blowdown_map(manifold):
    """``pi`` as a map for :func:`check_riemannian_submersion`."""

    def f(cid, y):
        chart = manifold.charts[cid]
        jac = manifold.blow_down_jacobian(cid, y) if chart.kind == "projective" else np.eye(manifold.n)
        return 0, manifold.blow_down(cid, y), jac

    return f
