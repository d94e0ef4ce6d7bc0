"""Real projective blow-ups of R^n along saturated centers.

Charts form a tree.  Chart 0 is the base R^n.  Blowing up a chart P
along a linear subspace C (stored with an orthonormal frame
Q = [C | N]) adds ``codim`` projective charts; projective chart i has
coordinates (s, tau, u) and maps to P by

    q = Q @ (s, tau * w(u)),    w_i = 1, remaining normal entries = u.

Every stage also adds an *outer* chart: base coordinates on the
complement of all centers blown up so far, where the blow-down is a
diffeomorphism.

The group action lifts chart by chart: off the exceptional divisor a
point is blown down, moved, and re-lifted; on the divisor the normal
direction is moved by the differential of the parent action.  Lie
algebra generators are lifted symbolically, which keeps them exact (and
polynomial) on the exceptional divisor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from . import actions as act_mod
from .errors import (
    CenterNotRecognized,
    CenterNotSaturated,
    ChartExit,
    RankAmbiguous,
    StageLimitExceeded,
    TubeTooLarge,
)

log = logging.getLogger(__name__)

SATURATION_TOL = 1e-9
DEFAULT_RHO = 0.5
DEFAULT_MAX_STAGES = 8
FD_STEP = 1e-6


@dataclass(frozen=True)
class BlowupCenter:
    """A linear subspace of one chart's coordinates.

    ``frame`` is an orthogonal matrix whose first ``dim`` columns span
    the center and whose remaining columns span its normal space.
    """

    chart_id: int
    frame: np.ndarray = field(repr=False)
    dim: int
    tol: float = SATURATION_TOL

    @property
    def basis(self):
        return self.frame[:, : self.dim]

    @property
    def normal(self):
        return self.frame[:, self.dim:]

    @property
    def codim(self):
        return self.frame.shape[0] - self.dim

    def split(self, q):
        """Center and normal coordinates of parent-chart points."""
        y = np.asarray(q) @ self.frame
        return y[..., : self.dim], y[..., self.dim:]

    def distance(self, q):
        return np.linalg.norm(self.split(q)[1], axis=-1)

    def to_dict(self):
        return {"chart": self.chart_id, "dim": self.dim,
                "basis": self.basis.T.tolist(), "tol": self.tol}


def make_center(chart_id, basis, dim_total, tol=SATURATION_TOL):
    """Center from spanning columns; snaps to coordinate axes when aligned."""
    basis = np.asarray(basis, dtype=float).reshape(dim_total, -1)
    k = basis.shape[1]
    if k:
        q, _ = np.linalg.qr(basis)
        basis = q[:, :k]
    proj = basis @ basis.T
    diag = np.diag(proj)
    axes = np.flatnonzero(diag > 0.5)
    aligned = (len(axes) == k and np.allclose(diag, np.round(diag), atol=1e-9)
               and np.allclose(proj, np.diag(np.round(diag)), atol=1e-9))
    if aligned:
        others = [i for i in range(dim_total) if i not in set(axes)]
        frame = np.eye(dim_total)[:, list(axes) + others]
    else:
        normal = act_mod.complement_basis(basis, dim_total)
        frame = np.hstack([basis, normal])
    return BlowupCenter(chart_id=chart_id, frame=frame, dim=k, tol=tol)


@dataclass(frozen=True)
class Chart:
    id: int
    kind: str  # "base" | "outer" | "projective"
    stage: int
    parent: int | None = None
    normal_index: int | None = None
    center: BlowupCenter | None = field(default=None, repr=False)
    name: str = ""

    def to_parent(self, y):
        """Parent-chart coordinates of points ``y`` (last axis = coords)."""
        if self.kind != "projective":
            return np.asarray(y, dtype=float)
        c = self.center
        y = np.asarray(y)
        s = y[..., : c.dim]
        tau = y[..., c.dim]
        u = y[..., c.dim + 1:]
        w = _insert_one(u, self.normal_index)
        local = np.concatenate([s, tau[..., None] * w], axis=-1)
        return local @ c.frame.T

    def to_parent_jacobian(self, y):
        c = self.center
        y = np.asarray(y, dtype=float)
        m = y.shape[-1]
        k = c.dim
        tau = y[k]
        w = _insert_one(y[k + 1:], self.normal_index)
        local = np.zeros((m, m))
        local[:k, :k] = np.eye(k)
        local[k:, k] = w
        cols = [j for j in range(m - k) if j != self.normal_index]
        for col, j in enumerate(cols):
            local[k + j, k + 1 + col] = tau
        return c.frame @ local

    def direction(self, y):
        """Normal direction w (in parent coordinates) of a projective point."""
        c = self.center
        y = np.asarray(y, dtype=float)
        w = _insert_one(y[c.dim + 1:], self.normal_index)
        return c.normal @ w


def _insert_one(u, i):
    u = np.asarray(u)
    one = np.ones(u.shape[:-1] + (1,), dtype=u.dtype)
    return np.concatenate([u[..., :i], one, u[..., i:]], axis=-1)


def relift(center, charts_by_index, q, direction=None):
    """Lift a parent point into the child chart with the largest normal entry.

    ``direction`` (a parent tangent vector) is required when ``q`` lies
    on the center: its normal part selects the point of the divisor.
    """
    s, v = center.split(q)
    scale = max(1.0, float(np.max(np.abs(q))))
    if np.max(np.abs(v)) > 1e-14 * scale:
        j = int(np.argmax(np.abs(v)))
        tau = v[j]
        u = np.delete(v, j) / v[j]
    else:
        if direction is None:
            raise ChartExit("point lies on the center; a normal direction is required",
                            point=np.asarray(q).tolist())
        n = np.asarray(direction) @ center.normal
        if np.max(np.abs(n)) == 0.0:
            raise ChartExit("direction is tangent to the center", point=np.asarray(q).tolist())
        j = int(np.argmax(np.abs(n)))
        tau = 0.0
        u = np.delete(n, j) / n[j]
    chart = charts_by_index[j]
    return chart.id, np.concatenate([s, [tau], u])


@dataclass(frozen=True)
class Stage:
    index: int
    centers: tuple
    tube_radius: float
    chart_ids: tuple
    outer_chart: int


class BlownUpManifold:
    """Chart atlas of an iterated blow-up of R^n.

    ``charts`` keeps every chart ever created (the atlas of all stages);
    :attr:`leaf_charts` are the projective charts of the final manifold.
    """

    def __init__(self, n):
        self.n = n
        self.charts = [Chart(id=0, kind="base", stage=0, name="base")]
        self.stages = []
        self._children = {}

    def copy(self):
        other = BlownUpManifold(self.n)
        other.charts = list(self.charts)
        other.stages = list(self.stages)
        other._children = {k: dict(v) for k, v in self._children.items()}
        return other

    @property
    def stage_count(self):
        return len(self.stages)

    @property
    def chart_count(self):
        return len(self.charts) - 1 if self.stages else 1

    def chart(self, cid):
        return self.charts[cid]

    def children(self, cid):
        """Projective children of chart ``cid`` keyed by normal index."""
        return self._children.get(cid, {})

    @property
    def leaf_charts(self):
        if not self.stages:
            return [self.charts[0]]
        return [c for c in self.charts if c.kind == "projective" and c.id not in self._children]

    @property
    def outer_chart(self):
        return self.stages[-1].outer_chart if self.stages else 0

    def center_of(self, cid):
        for stage in self.stages:
            for c in stage.centers:
                if c.chart_id == cid:
                    return c
        return None

    def chain(self, cid):
        """Chart ids from ``cid`` up to the base (inclusive)."""
        out = []
        while cid is not None:
            out.append(cid)
            cid = self.charts[cid].parent
        return out

    # -------------------------------------------------------- blow-down

    def blow_down(self, cid, y):
        chart = self.charts[cid]
        y = np.asarray(y, dtype=float)
        while chart.kind == "projective":
            y = chart.to_parent(y)
            chart = self.charts[chart.parent]
        return y

    def blow_down_jacobian(self, cid, y):
        chart = self.charts[cid]
        y = np.asarray(y, dtype=float)
        jac = np.eye(self.n)
        while chart.kind == "projective":
            jac = chart.to_parent_jacobian(y) @ jac
            y = chart.to_parent(y)
            chart = self.charts[chart.parent]
        return jac

    def on_exceptional(self, cid, y, tol=0.0):
        """True if the point lies on the exceptional divisor of any stage."""
        chart = self.charts[cid]
        y = np.asarray(y, dtype=float)
        while chart.kind == "projective":
            if abs(y[chart.center.dim]) <= tol:
                return True
            y = chart.to_parent(y)
            chart = self.charts[chart.parent]
        return False

    def exceptional_depth(self, cid, y):
        """Stage index of the divisor the point sits on (0 if none)."""
        chart = self.charts[cid]
        y = np.asarray(y, dtype=float)
        while chart.kind == "projective":
            if y[chart.center.dim] == 0.0:
                return chart.stage
            y = chart.to_parent(y)
            chart = self.charts[chart.parent]
        return 0

    def lift(self, x, direction=None):
        """Lift a base point to a leaf chart (inverse of the blow-down off E)."""
        cid, y = 0, np.asarray(x, dtype=float)
        for stage in self.stages:
            center = self.center_of(cid)
            if center is None:
                if cid == 0:
                    continue
                break
            cid, y = relift(center, self.children(cid), y,
                            None if direction is None else direction)
            direction = None
        return cid, y

    def chart_box(self, cid, radius):
        """Coordinate bounds covering the chart's part over the radius-ball."""
        chart = self.charts[cid]
        if chart.kind != "projective":
            return np.full(self.n, radius)
        parent = self.chart_box(chart.parent, radius)
        c = chart.center
        par = np.abs(c.frame).T @ parent
        s_box = par[: c.dim]
        tau_box = np.max(par[c.dim:]) if c.codim else 0.0
        return np.concatenate([s_box, [tau_box], np.ones(c.codim - 1)])

    def describe(self):
        return {
            "ambient_dim": self.n,
            "chart_count": self.chart_count,
            "stages": [
                {"index": st.index, "tube_radius": st.tube_radius,
                 "centers": [c.to_dict() for c in st.centers],
                 "chart_count": len(st.chart_ids)}
                for st in self.stages
            ],
        }


def blow_up(manifold, centers, rho=DEFAULT_RHO, action=None, separation=None):
    """Blow up ``manifold`` along ``centers`` (one per chart).

    ``centers`` may be a single :class:`BlowupCenter` or a list.  With
    ``action`` the centers are checked to be saturated.  ``separation``
    is the distance between distinct equal-codimension components; the
    tube must fit in half of it.
    """
    if isinstance(centers, BlowupCenter):
        centers = [centers]
    if manifold is None:
        raise ValueError("manifold required")
    if isinstance(manifold, int):
        manifold = BlownUpManifold(manifold)
    if separation is not None and rho >= 0.5 * separation:
        raise TubeTooLarge("tube radius overlaps a separated stratum",
                           rho=rho, separation=separation)
    if rho <= 0:
        raise TubeTooLarge("tube radius must be positive", rho=rho)
    new = manifold.copy()
    leaves = {c.id for c in manifold.leaf_charts}
    stage_index = manifold.stage_count + 1
    for c in centers:
        if c.chart_id not in leaves:
            raise ChartExit("center chart is not a leaf chart", chart=c.chart_id)
        if c.codim < 1:
            raise CenterNotRecognized("center has no normal directions", chart=c.chart_id)
    if action is not None:
        check_saturation(action, manifold, centers)
    ids = []
    for c in centers:
        kids = {}
        parent_name = new.charts[c.chart_id].name
        for i in range(c.codim):
            cid = len(new.charts)
            name = f"s{stage_index}:{parent_name}/n{i}"
            new.charts.append(Chart(id=cid, kind="projective", stage=stage_index,
                                    parent=c.chart_id, normal_index=i, center=c, name=name))
            kids[i] = new.charts[cid]
            ids.append(cid)
        new._children[c.chart_id] = kids
    outer = len(new.charts)
    new.charts.append(Chart(id=outer, kind="outer", stage=stage_index, parent=0,
                            name=f"s{stage_index}:outer"))
    ids.append(outer)
    new.stages.append(Stage(index=stage_index, centers=tuple(centers), tube_radius=float(rho),
                            chart_ids=tuple(ids), outer_chart=outer))
    return new


def check_saturation(action, manifold, centers, samples=16, seed=0):
    """Raise :class:`CenterNotSaturated` if group nodes move center points off."""
    rng = np.random.default_rng(seed)
    lifted = LiftedAction(action, manifold)
    mats = action.group.haar_matrices
    step = max(1, len(mats) // 32)
    by_chart = {c.chart_id: c for c in centers}
    worst = 0.0
    for c in centers:
        box = manifold.chart_box(c.chart_id, 1.0)
        for _ in range(samples):
            s = rng.uniform(-1, 1, c.dim) * (np.abs(c.basis).T @ box if c.dim else 1.0)
            q = c.basis @ s if c.dim else np.zeros(c.frame.shape[0])
            for g in mats[::step]:
                cid, q2 = lifted.act(g, c.chart_id, q)
                other = by_chart.get(cid)
                if other is None:
                    raise CenterNotSaturated("image of a center point left every center chart",
                                             chart=c.chart_id, point=q.tolist())
                worst = max(worst, float(other.distance(q2)))
                if worst > c.tol * max(1.0, np.linalg.norm(q)):
                    raise CenterNotSaturated("center is not invariant under the group",
                                             chart=c.chart_id, defect=worst)
    return worst


def blow_down(manifold, chart_id, chart_point):
    return manifold.blow_down(chart_id, chart_point)


# ------------------------------------------------------------------ lifted action

class LiftedAction:
    """The action of a linear group on a blown-up manifold, in chart coordinates."""

    def __init__(self, action, manifold=None):
        self.action = action
        self.manifold = manifold if manifold is not None else BlownUpManifold(action.ambient_dim)
        self.n = action.ambient_dim

    # ---- finite group elements

    def act(self, g, cid, y, direction=None):
        """Image of chart point (cid, y) under g, as (chart id, coords)."""
        cid2, y2, _ = self._act(np.asarray(g, dtype=float), cid, np.asarray(y, dtype=float),
                                want_jac=False, direction=direction)
        return cid2, y2

    def act_with_jacobian(self, g, cid, y):
        return self._act(np.asarray(g, dtype=float), cid, np.asarray(y, dtype=float), want_jac=True)

    def _act(self, g, cid, y, want_jac, direction=None):
        m = self.manifold
        chart = m.charts[cid]
        if chart.kind in ("base", "outer"):
            return cid, y @ g.T, (g.copy() if want_jac else None)
        center = chart.center
        parent = chart.parent
        q = chart.to_parent(y)
        tau = y[center.dim]
        pcid, q2, _ = self._act(g, parent, q, want_jac=False)
        pcenter = m.center_of(pcid)
        if pcenter is None:
            # image sits in a parent chart that was never blown up
            if tau == 0.0:
                raise ChartExit("exceptional point mapped outside every blown-up chart",
                                chart=cid, point=y.tolist())
            if want_jac:
                return pcid, q2, self._offdivisor_jacobian(g, cid, y, pcid, q2)
            return pcid, q2, None
        if tau != 0.0:
            cid2, y2 = relift(pcenter, m.children(pcid), q2)
        else:
            d = chart.direction(y)
            d2 = self.parent_jacobian(g, parent, q, pcid) @ d
            cid2, y2 = relift(pcenter, m.children(pcid), q2, direction=d2)
        if not want_jac:
            return cid2, y2, None
        if m.on_exceptional(cid, y):
            jac = self._fd_jacobian(g, cid, y, cid2, y2)
        else:
            jac = self._offdivisor_jacobian(g, cid, y, cid2, y2)
        return cid2, y2, jac

    def parent_jacobian(self, g, pcid, q, target_cid):
        """Jacobian of the lifted action at a parent-chart point."""
        chart = self.manifold.charts[pcid]
        if chart.kind in ("base", "outer"):
            return g
        c2, q2, jac = self._act(g, pcid, q, want_jac=True)
        if c2 != target_cid:
            raise ChartExit("inconsistent chart choice", chart=pcid)
        return jac

    def _offdivisor_jacobian(self, g, cid, y, cid2, y2):
        m = self.manifold
        j1 = m.blow_down_jacobian(cid, y)
        j2 = m.blow_down_jacobian(cid2, y2)
        return np.linalg.solve(j2, g @ j1)

    def _fd_jacobian(self, g, cid, y, cid2, y2):
        h = FD_STEP
        cols = []
        for k in range(len(y)):
            e = np.zeros_like(y)
            e[k] = h
            out = []
            for sgn in (1.0, -1.0):
                yy = y + sgn * e
                c, z = self.act(g, cid, yy, direction=None)
                out.append(self.to_chart(c, z, cid2))
            cols.append((out[0] - out[1]) / (2 * h))
        return np.stack(cols, axis=1)

    def to_chart(self, cid, y, target):
        """Express chart point (cid, y) in chart ``target`` (same manifold)."""
        if cid == target:
            return np.asarray(y, dtype=float)
        m = self.manifold
        tchart = m.charts[target]
        if tchart.kind in ("base", "outer"):
            if m.on_exceptional(cid, y):
                raise ChartExit("exceptional point has no base coordinates", chart=cid)
            return m.blow_down(cid, y)
        ident = np.eye(self.n)
        # express in target's parent, then project with the target's own normalization
        schart = m.charts[cid]
        if schart.kind == "projective" and schart.stage == tchart.stage:
            q = schart.to_parent(y)
            qt = self.to_chart(schart.parent, q, tchart.parent)
            tau = y[schart.center.dim]
            if tau != 0.0:
                d = None
            else:
                d_src = schart.direction(y)
                if schart.parent == tchart.parent:
                    d = d_src
                else:
                    _, _, jt = self._transition_jacobian(schart.parent, q, tchart.parent)
                    d = jt @ d_src
        else:
            qt = self.to_chart(cid, y, tchart.parent) if cid != tchart.parent else np.asarray(y)
            d = None
        c = tchart.center
        s, v = c.split(qt)
        i = tchart.normal_index
        if d is None:
            if abs(v[i]) <= 1e-300:
                raise ChartExit("point not in target chart", chart=target)
            return np.concatenate([s, [v[i]], np.delete(v, i) / v[i]])
        nvec = np.asarray(d) @ c.normal
        if nvec[i] == 0.0:
            raise ChartExit("point not in target chart", chart=target)
        del ident
        return np.concatenate([s, [0.0], np.delete(nvec, i) / nvec[i]])

    def _transition_jacobian(self, cid, y, target):
        yt = self.to_chart(cid, y, target)
        m = self.manifold
        if not m.on_exceptional(cid, y):
            j1 = m.blow_down_jacobian(cid, y)
            j2 = m.blow_down_jacobian(target, yt)
            return target, yt, np.linalg.solve(j2, j1)
        h = FD_STEP
        cols = []
        for k in range(len(y)):
            e = np.zeros_like(y)
            e[k] = h
            cols.append((self.to_chart(cid, y + e, target) - self.to_chart(cid, y - e, target)) / (2 * h))
        return target, yt, np.stack(cols, axis=1)

    # ---- infinitesimal generators

    @cached_property
    def _generator_cache(self):
        return {}

    def generator_functions(self, cid):
        cache = self._generator_cache
        if cid not in cache:
            cache[cid] = _lambdify_fields(self._symbolic_generators(cid), self.n)
        return cache[cid]

    def _symbolic_generators(self, cid):
        key = ("sym", cid)
        cache = self._generator_cache
        if key in cache:
            return cache[key]
        m = self.manifold
        chart = m.charts[cid]
        syms = sp.symbols(f"y0:{self.n}", real=True)
        if chart.kind in ("base", "outer"):
            fields = [sp.Matrix(_sym_matrix(x)) * sp.Matrix(syms) for x in self.action.generators]
            result = (syms, [list(f) for f in fields])
        else:
            psyms, pfields = self._symbolic_generators(chart.parent)
            c = chart.center
            k = c.dim
            frame = _sym_matrix(c.frame)
            s = list(syms[:k])
            tau = syms[k]
            u = list(syms[k + 1:])
            w = u[: chart.normal_index] + [sp.Integer(1)] + u[chart.normal_index:]
            local = sp.Matrix(s + [tau * wi for wi in w])
            q = frame * local
            subs = dict(zip(psyms, list(q)))
            out = []
            for pf in pfields:
                vq = sp.Matrix([sp.expand(e.xreplace(subs)) for e in pf])
                vloc = frame.T * vq
                vs = [sp.expand(e) for e in vloc[:k]]
                vv = [sp.expand(e) for e in vloc[k:]]
                i = chart.normal_index
                tau_dot = vv[i]
                u_dot = []
                for j in range(len(vv)):
                    if j == i:
                        continue
                    uj = w[j]
                    num = sp.expand(vv[j] - uj * vv[i])
                    u_dot.append(_divide_by(num, tau))
                out.append(vs + [tau_dot] + u_dot)
            result = (syms, out)
        cache[key] = result
        return result

    def generator_jacobians(self, cid, y):
        """Jacobians of the lifted generators at one chart point, shape (d, m, m)."""
        cache = self._generator_cache
        key = ("jac", cid)
        if key not in cache:
            syms, fields = self._symbolic_generators(cid)
            fns = []
            for f in fields:
                jac = sp.Matrix(f).jacobian(sp.Matrix(syms))
                fns.append(sp.lambdify(syms, jac, modules="numpy"))
            cache[key] = fns
        y = np.asarray(y, dtype=float)
        if not cache[key]:
            return np.zeros((0, self.n, self.n))
        return np.stack([np.asarray(fn(*y), dtype=float) for fn in cache[key]])

    def generator_matrix(self, cid, y):
        """Columns: lifted generators at chart points (shape (..., m, d))."""
        y = np.asarray(y, dtype=float)
        funcs = self.generator_functions(cid)
        if not funcs:
            return np.zeros(y.shape[:-1] + (self.n, 0))
        cols = [f(y) for f in funcs]
        return np.stack(cols, axis=-1)

    def orbit_dimension(self, cid, y):
        return act_mod.numerical_rank(self.generator_matrix(cid, y), where=y)

    def orbit_dimensions(self, cid, ys):
        mats = self.generator_matrix(cid, ys)
        return batch_rank(mats, ys)


def _sym_matrix(a):
    a = np.asarray(a, dtype=float)
    return sp.Matrix([[_sym_number(v) for v in row] for row in a])


def _sym_number(v):
    if float(v).is_integer():
        return sp.Integer(int(v))
    return sp.Float(float(v), 17)


def _divide_by(num, tau, tol=1e-9):
    """Exact division of a polynomial vanishing at tau=0 by tau."""
    if num == 0:
        return sp.Integer(0)
    poly = sp.Poly(num, tau)
    coeffs = poly.all_coeffs()[::-1]
    const = sp.expand(coeffs[0])
    if const != 0:
        numeric = [abs(float(c)) for c in sp.Poly(const, *sorted(const.free_symbols, key=str)).coeffs()] \
            if const.free_symbols else [abs(float(const))]
        if max(numeric) > tol:
            raise CenterNotSaturated("generator is not tangent to the center",
                                     residual=max(numeric))
    return sp.expand(sum(c * tau ** (p - 1) for p, c in enumerate(coeffs) if p >= 1))


def _lambdify_fields(sym, n):
    syms, fields = sym
    out = []
    for f in fields:
        fn = sp.lambdify(syms, f, modules="numpy")
        out.append(_vectorize(fn, n))
    return out


def _vectorize(fn, n):
    def evaluate(y):
        y = np.asarray(y, dtype=float)
        args = [y[..., i] for i in range(n)]
        vals = fn(*args)
        shape = y.shape[:-1]
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], axis=-1)

    return evaluate


def batch_rank(mats, points=None):
    """Vectorized :func:`desing.actions.numerical_rank` over a stack."""
    mats = np.asarray(mats, dtype=float)
    lead = mats.shape[:-2]
    if mats.shape[-1] == 0:
        return np.zeros(lead, dtype=int)
    s = np.linalg.svd(mats, compute_uv=False)
    smax = s[..., :1]
    zero = smax[..., 0] <= act_mod.RANK_ATOL
    rel = np.where(smax > 0, s / np.where(smax > 0, smax, 1.0), 0.0)
    lo, hi = act_mod.AMBIGUOUS_BAND
    bad = np.any((rel >= lo) & (rel <= hi), axis=-1) & ~zero
    if np.any(bad):
        idx = np.unravel_index(np.flatnonzero(bad)[0], lead) if lead else ()
        pt = None if points is None else np.asarray(points)[idx].tolist()
        raise RankAmbiguous("singular value inside ambiguity band", point=pt,
                            singular_values=s[idx].tolist())
    ranks = np.count_nonzero(rel > act_mod.RANK_RTOL, axis=-1)
    return np.where(zero, 0, ranks)


def lift_action(action, manifold):
    return LiftedAction(action, manifold)


# ------------------------------------------------------------------ sampling & driver

def sample_atlas(manifold, n_samples, radius=1.0, seed=0, zero_fraction=0.3):
    """Random (chart id, point) samples over the region, split evenly across charts.

    A fraction of the samples has random coordinates set to zero so that
    centers, exceptional divisors and coordinate planes are hit.
    """
    rng = np.random.default_rng(seed)
    charts = manifold.leaf_charts
    per = -(-n_samples // len(charts))
    out = []
    for chart in charts:
        box = manifold.chart_box(chart.id, radius)
        got = []
        need = per
        while need > 0:
            pts = rng.uniform(-1.0, 1.0, (2 * need + 8, manifold.n)) * box
            zero = rng.random(len(pts)) < zero_fraction
            mask = rng.random(pts.shape) < 0.5
            pts[zero] = np.where(mask[zero], 0.0, pts[zero])
            if chart.kind == "base":
                keep = np.linalg.norm(pts, axis=1) <= radius
            else:
                keep = np.linalg.norm(manifold.blow_down(chart.id, pts), axis=1) <= radius
            pts = pts[keep][:need]
            got.append(pts)
            need -= len(pts)
        out.append((chart.id, np.concatenate(got)))
    return out


def is_regular(lifted, n_samples=10_000, radius=1.0, seed=0):
    """Report whether orbit dimensions agree at sampled atlas points."""
    hist = {}
    count = 0
    for cid, pts in sample_atlas(lifted.manifold, n_samples, radius, seed):
        dims = lifted.orbit_dimensions(cid, pts)
        for d, c in zip(*np.unique(dims, return_counts=True)):
            hist[int(d)] = hist.get(int(d), 0) + int(c)
        count += len(pts)
    return {"regular": len(hist) <= 1, "histogram": dict(sorted(hist.items())),
            "samples": count}


def exceptional_leaf_check(action, manifold, samples=200, seed=0, tol=1e-9):
    """Check the newest exceptional divisor against the leaves of its center.

    (a) the blow-down of a sampled orbit lies in the center and equals the
    base orbit of the blown-down point; (b) the orbit upstairs is
    strictly larger than the orbit downstairs.
    """
    if manifold.stage_count == 0:
        return {"passed": True, "vacuous": True, "samples": 0}
    lifted = LiftedAction(action, manifold)
    stage = manifold.stages[-1]
    rng = np.random.default_rng(seed)
    mats = action.group.haar_matrices
    step = max(1, len(mats) // 16)
    parents = {}
    for c in stage.centers:
        parents[c.chart_id] = c
    charts = [manifold.charts[cid] for cid in stage.chart_ids if manifold.charts[cid].kind == "projective"]
    worst_a = 0.0
    failures = []
    per = max(1, samples // len(charts))
    below = LiftedAction(action, _truncate(manifold, stage.index - 1))
    for chart in charts:
        box = manifold.chart_box(chart.id, 1.0)
        c = chart.center
        for _ in range(per):
            y = rng.uniform(-1, 1, manifold.n) * box
            y[c.dim] = 0.0
            x = manifold.blow_down(chart.id, y)
            q = chart.to_parent(y)
            for g in mats[::step]:
                cid2, y2 = lifted.act(g, chart.id, y)
                img = manifold.blow_down(cid2, y2)
                gx = x @ g.T
                q2 = manifold.charts[cid2].to_parent(y2)
                d_center = parents[manifold.charts[cid2].parent].distance(q2) \
                    if manifold.charts[cid2].kind == "projective" else np.inf
                worst_a = max(worst_a, float(np.max(np.abs(img - gx))), float(d_center))
            up = lifted.orbit_dimension(chart.id, y)
            down = below.orbit_dimension(chart.parent, q)
            if not up > down:
                failures.append({"chart": chart.id, "point": y.tolist(), "dims": [up, down]})
    passed = worst_a <= tol and not failures
    return {"passed": bool(passed), "max_leaf_defect": worst_a, "dimension_failures": failures,
            "samples": per * len(charts)}


def _truncate(manifold, stages):
    """The blow-up after only the first ``stages`` stages (chart ids preserved)."""
    out = BlownUpManifold(manifold.n)
    if stages == 0:
        return out
    last = manifold.stages[stages - 1]
    keep = max(last.chart_ids) + 1
    out.charts = manifold.charts[:keep]
    out.stages = manifold.stages[:stages]
    out._children = {k: v for k, v in manifold._children.items()
                     if any(ch.id < keep for ch in v.values())}
    return out


@dataclass
class DesingularizationResult:
    stages: list  # of (tuple of centers, BlownUpManifold)
    lifted: LiftedAction
    snapshots: list
    final_report: dict
    max_codims: list = field(default_factory=list)

    @property
    def manifold(self):
        return self.lifted.manifold

    @property
    def stage_count(self):
        return len(self.stages)

    def blow_down(self, cid, y):
        return self.manifold.blow_down(cid, y)

    def to_dict(self):
        hist = self.final_report["histogram"]
        return {
            "stages": [
                {"center": [c.to_dict() for c in centers],
                 "chart_count": m.chart_count,
                 "tube_radius": m.stages[-1].tube_radius}
                for centers, m in self.stages
            ],
            "final_regular": bool(self.final_report["regular"]),
            "orbit_dim": (next(iter(hist)) if len(hist) == 1 else None),
            "histogram": hist,
            "samples": self.final_report["samples"],
        }


def desingularize(action, max_stages=DEFAULT_MAX_STAGES, radius=1.0, grid=11, rho=DEFAULT_RHO,
                  samples=10_000, seed=0):
    """Blow up most singular strata until the action is regular."""
    from . import strata

    lifted = LiftedAction(action)
    stages, snapshots = [], []
    while True:
        strat = strata.stratify_stage(lifted, radius, grid)
        snapshots.append(strat)
        if strata.is_regular_stratification(strat):
            break
        if lifted.manifold.stage_count >= max_stages:
            raise StageLimitExceeded("action still singular at the stage limit",
                                     max_stages=max_stages, max_codim=strat.max_codim)
        centers = strata.most_singular_stratum(lifted, radius, grid, strat=strat)
        manifold = blow_up(lifted.manifold, centers, rho=rho, action=action)
        log.info("stage %d: %d centers, %d charts", manifold.stage_count, len(centers),
                 manifold.chart_count)
        stages.append((tuple(centers), manifold))
        lifted = LiftedAction(action, manifold)
    report = is_regular(lifted, samples, radius, seed)
    for a, b in zip(snapshots, snapshots[1:]):
        if not b.max_codim < a.max_codim:
            raise CenterNotRecognized("blow-up did not reduce the maximal codimension",
                                      before=a.max_codim, after=b.max_codim)
    return DesingularizationResult(stages=stages, lifted=lifted, snapshots=snapshots,
                                   final_report=report, max_codims=[s.max_codim for s in snapshots])
