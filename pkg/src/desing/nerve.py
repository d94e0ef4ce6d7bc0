"""Metrics on the nerve of an action groupoid (k <= 2) and their face maps.

Points of the k-th nerve space are composable chains ``(c_1, ..., c_k, y)``:
``c_1`` moves ``y``, ``c_2`` moves ``c_1 y`` and so on.  For the circle
the chain entries are angles; for finite groups they are element
indices and carry no continuous coordinates.

The construction follows the usual recipe for simplicial metrics on
action groupoids.  The base level uses a product metric on
``G^(k+1) x M`` pushed down along the quotient by the diagonal action.
These metrics are pulled back to the blow-up through a fibered
product with the blow-up metric.  The result is Haar-averaged and
pushed down again.
"""
from __future__ import annotations

import numpy as np

from .blowup import LiftedAction
from .errors import UnsupportedGroup
from .metrics import (
    fibered_gram,
    invariance_defect,
    submersion_defect,
    symmetrize,
)

MAX_LEVEL = 2
# metric used on each group factor of G^(k+1) x M
GROUP_METRIC = {0: "discrete", 1: "flat unit-speed angle"}


class _Group:
    """Finite group or the circle, with the operations the nerve needs."""

    def __init__(self, action):
        grp = action.group
        self.action = action
        if grp.algebra_dim == 0:
            self.c = 0
            self.elements = [np.asarray(e) for e in grp.finite_elements]
            self.weights = np.full(len(self.elements), 1.0 / len(self.elements))
        elif grp.algebra_dim == 1 and len(grp.finite_elements) == 1:
            self.c = 1
            self.X = np.asarray(action.generators[0])
            n = len(grp.haar_weights)
            self.angles = 2 * np.pi * np.arange(n) / n
            self.weights = np.full(n, 1.0 / n)
        else:
            raise UnsupportedGroup("nerve metrics need a finite group or the circle",
                                   algebra_dim=grp.algebra_dim,
                                   components=len(grp.finite_elements))

    # elements are angles (circle) or indices (finite)
    def matrix(self, g):
        if self.c:
            return self.action.group.exp([g])
        return self.elements[g]

    def index_of(self, m):
        for i, e in enumerate(self.elements):
            if np.allclose(e, m, atol=1e-9):
                return i
        raise UnsupportedGroup("finite element set is not closed under products")

    def mul(self, a, b):
        if self.c:
            return a + b
        return self.index_of(self.elements[a] @ self.elements[b])

    def inv(self, a):
        if self.c:
            return -a
        return self.index_of(self.elements[a].T)

    def nodes(self):
        return self.angles if self.c else range(len(self.elements))

    def identity(self):
        return 0.0 if self.c else self.index_of(np.eye(self.action.ambient_dim))


class NerveMetrics:
    """Evaluators for the blow-up nerve metrics of one desingularization stage."""

    def __init__(self, action, user_field, upstairs_field=None, manifold=None):
        self.action = action
        self.group = _Group(action)
        self.user = user_field
        self.lifted = LiftedAction(action, manifold)
        self.manifold = self.lifted.manifold
        self.n = action.ambient_dim
        self.upstairs = upstairs_field if upstairs_field is not None else self.base_field()

    # ---- base level

    def base_dual(self, x):
        dual = np.linalg.inv(self.user(0, x))
        if self.group.c:
            v = self.group.X @ x
            dual = dual + np.outer(v, v)
        return symmetrize(dual)

    def base_field(self):
        from .metrics import MetricField

        return MetricField(lambda cid, x: symmetrize(np.linalg.inv(self.base_dual(x))),
                           "nerve", self.n)

    def original_dual(self, chain, x):
        """Dual of the original simplicial metric at a chain over ``x``."""
        k = len(chain)
        c = self.group.c
        if not c:
            return symmetrize(np.linalg.inv(self.user(0, x)))
        n = self.n
        p_inv = np.zeros((k + 1 + n,) * 2)
        p_inv[: k + 1, : k + 1] = np.eye(k + 1)
        p_inv[k + 1:, k + 1:] = np.linalg.inv(self.user(0, x))
        d = np.zeros((k + n, k + 1 + n))
        for i in range(k):
            d[i, i + 1] = 1.0
            d[i, i] = -1.0
        d[k:, 0] = self.group.X @ x
        d[k:, k + 1:] = np.eye(n)
        return symmetrize(d @ p_inv @ d.T)

    def psi_metric(self, gs, x):
        """Original metric in absolute coordinates ``(g_1..g_k, x)``."""
        k = len(gs)
        if not self.group.c:
            return symmetrize(self.user(0, x))
        chain = np.diff(np.concatenate([[0.0], gs]))
        dpsi = np.eye(k + self.n)
        for i in range(1, k):
            dpsi[i, i - 1] = -1.0
        met = np.linalg.inv(self.original_dual(chain, x))
        return symmetrize(dpsi.T @ met @ dpsi)

    # ---- upstairs

    def fibered(self, gs, cid, y):
        """Fibered-product metric on ``G^k x M~`` at ``(g, y)``."""
        k = len(gs) * self.group.c
        n = self.n
        m = self.manifold
        x = m.blow_down(cid, y)
        dpi = m.blow_down_jacobian(cid, y) if m.charts[cid].kind == "projective" else np.eye(n)
        tm = np.eye(k + n)
        tm[k:, k:] = dpi
        tp = np.zeros((n, k + n))
        tp[:, k:] = np.eye(n)
        return fibered_gram(self.psi_metric(gs, x), self.upstairs(cid, y),
                            np.linalg.inv(self.base_dual(x)), tm, tp, tp)

    def averaged_dual(self, gs, cid, y):
        """Haar average (right action) of the fibered metric, as a dual."""
        grp = self.group
        k = len(gs) * grp.c
        acc = np.zeros((k + self.n,) * 2)
        for h, w in zip(grp.nodes(), grp.weights):
            hinv = grp.matrix(grp.inv(h))
            c2, y2, jy = self.lifted.act_with_jacobian(hinv, cid, y)
            gs2 = [grp.mul(g, h) for g in gs]
            jac = np.eye(k + self.n)
            jac[k:, k:] = jy
            jinv = np.linalg.inv(jac)
            acc += w * (jinv @ np.linalg.inv(self.fibered(gs2, c2, y2)) @ jinv.T)
        return symmetrize(acc)

    def metric(self, chain, cid, y):
        """Blow-up nerve metric at a composable chain (level ``len(chain)``)."""
        grp = self.group
        k = len(chain)
        gs = [grp.identity()]
        for c in chain:
            gs.append(grp.mul(c, gs[-1]))
        dual = self.averaged_dual(gs, cid, y)
        if grp.c:
            n = self.n
            d = np.zeros((k + n, k + 1 + n))
            for i in range(k):
                d[i, i + 1] = 1.0
                d[i, i] = -1.0
            d[k:, 0] = self.lifted.generator_matrix(cid, y)[:, 0]
            d[k:, k + 1:] = np.eye(n)
            dual = d @ dual @ d.T
        return symmetrize(np.linalg.inv(symmetrize(dual)))

    # ---- face maps

    def _move(self, g, cid, y):
        return self.lifted.act_with_jacobian(self.group.matrix(g), cid, y)

    def faces(self, chain, cid, y):
        """(name, target chain, target chart, target point, jacobian) for each face."""
        grp = self.group
        c = grp.c
        n = self.n
        k = len(chain)
        out = []
        if k == 1:
            g = chain[0]
            d = np.zeros((n, c + n))
            d[:, c:] = np.eye(n)
            out.append(("source", (), cid, y, d))
            c2, y2, jy = self._move(g, cid, y)
            d = np.zeros((n, c + n))
            if c:
                d[:, 0] = self.lifted.generator_matrix(c2, y2)[:, 0]
            d[:, c:] = jy
            out.append(("target", (), c2, y2, d))
        elif k == 2:
            g1, g2 = chain
            d = np.zeros((c + n, 2 * c + n))
            if c:
                d[0, 0] = 1.0
            d[c:, 2 * c:] = np.eye(n)
            out.append(("drop_last", (g1,), cid, y, d))
            d = np.zeros((c + n, 2 * c + n))
            if c:
                d[0, 0] = d[0, 1] = 1.0
            d[c:, 2 * c:] = np.eye(n)
            out.append(("compose", (grp.mul(g2, g1),), cid, y, d))
            c2, y2, jy = self._move(g1, cid, y)
            d = np.zeros((c + n, 2 * c + n))
            if c:
                d[0, 1] = 1.0
                d[c:, 0] = self.lifted.generator_matrix(c2, y2)[:, 0]
            d[c:, 2 * c:] = jy
            out.append(("drop_first", (g2,), c2, y2, d))
        return out


def _random_chain(grp, k, rng):
    if grp.c:
        return tuple(float(v) for v in rng.uniform(-np.pi, np.pi, k))
    return tuple(int(v) for v in rng.integers(len(grp.elements), size=k))


def nerve_metric_check(action, user_field, k=2, manifold=None, upstairs_field=None,
                       samples=None, n_samples=8, seed=0, tol=1e-6):
    """Verify that every face map up to level ``k`` is a Riemannian submersion.

    ``samples`` is a list of ``(chart id, point)`` on the final manifold;
    by default points are drawn from the leaf charts.  At ``k = 0`` the
    check is invariance of ``user_field``.
    """
    if k < 0 or k > MAX_LEVEL:
        raise UnsupportedGroup("nerve levels above two are not supported", k=k)
    nm = NerveMetrics(action, user_field, upstairs_field, manifold)
    rng = np.random.default_rng(seed)
    if samples is None:
        from .blowup import sample_atlas

        samples = [(cid, p) for cid, pts in sample_atlas(nm.manifold, n_samples, 1.0, seed)
                   for p in pts]
    if k == 0:
        base_samples = [(0, nm.manifold.blow_down(cid, y)) for cid, y in samples]
        d = invariance_defect(action, user_field, base_samples)
        return {"kind": "nerve", "level": 0, "samples": len(samples), "max_defect": d,
                "failures": [] if d <= tol else [{"defect": d}], "passed": d <= tol,
                "faces": {}}
    faces = {}
    failures = []
    worst = 0.0
    cache = {}

    def metric(chain, cid, y):
        key = (chain, cid, tuple(np.round(y, 15)))
        if key not in cache:
            cache[key] = nm.metric(chain, cid, y) if chain else nm.metric((), cid, y)
        return cache[key]

    for level in range(1, k + 1):
        for cid, y in samples:
            y = np.asarray(y, dtype=float)
            chain = _random_chain(nm.group, level, rng)
            src = metric(chain, cid, y)
            for name, tchain, tcid, ty, jac in nm.faces(chain, cid, y):
                tgt = metric(tchain, tcid, ty)
                d = submersion_defect(jac, src, tgt)
                key = f"{level}:{name}"
                faces[key] = max(faces.get(key, 0.0), d)
                worst = max(worst, d)
                if not d <= tol:
                    failures.append({"face": key, "chart": int(cid), "point": y.tolist(),
                                     "chain": list(chain), "defect": d})
    return {"kind": "nerve", "level": k, "samples": len(samples), "max_defect": worst,
            "faces": faces, "failures": failures, "passed": not failures, "tol": tol,
            "group_metric": GROUP_METRIC[nm.group.c]}
