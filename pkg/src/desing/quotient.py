"""Sampled orbit spaces with the chain metric, and Gromov-Hausdorff bounds.

Orbit distances are estimated with straight chart segments whose length
uses the metric at segment midpoints, refined by bisection.  The chain
infimum over orbits is realised by shortest paths on a k-nearest-neighbour
graph of orbit representatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .blowup import LiftedAction
from .parallel import pmap
from .errors import ChartExit, GraphDisconnected, TooLargeForExact, UnsupportedStage

EXACT_LIMIT = 8
SEGMENT_TOL = 1e-4
MAX_DEPTH = 12
DEFAULT_K = 8
CANDIDATES = 3


@dataclass(frozen=True)
class FiniteMetricSpace:
    labels: tuple  # of str
    distances: np.ndarray
    points: tuple = ()  # of (stage, chart id, coords)

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        object.__setattr__(self, "distances", d)

    def __len__(self):
        return self.distances.shape[0]

    @property
    def diameter(self):
        return float(self.distances.max()) if len(self) else 0.0

    def eccentricities(self):
        return self.distances.max(axis=1) if len(self) else np.zeros(0)

    def check(self, tol=1e-9):
        d = self.distances
        ok_diag = bool(np.all(np.diag(d) == 0.0))
        ok_sym = bool(np.array_equal(d, d.T))
        worst = 0.0
        for i in range(len(self)):
            # d[i, j] - d[i, k] - d[k, j] over all k, j
            worst = max(worst, float(np.max(d[i][None, :] - d[i][:, None] - d)))
        return {"zero_diagonal": ok_diag, "symmetric": ok_sym, "triangle_excess": worst,
                "passed": ok_diag and ok_sym and worst <= tol}


# ------------------------------------------------------------------ segments

def segment_length(field_, cid, a, b, tol=SEGMENT_TOL, depth=MAX_DEPTH):
    """Length of the straight chart segment from ``a`` to ``b``."""

    def mid_len(p, q):
        d = q - p
        g = field_(cid, 0.5 * (p + q))
        return float(np.sqrt(max(d @ g @ d, 0.0)))

    def refine(p, q, whole, level):
        m = 0.5 * (p + q)
        left, right = mid_len(p, m), mid_len(m, q)
        if level >= depth or abs(left + right - whole) <= tol:
            return left + right
        return refine(p, m, left, level + 1) + refine(m, q, right, level + 1)

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        return 0.0
    return refine(a, b, mid_len(a, b), 1)


def _orbit_images(action, x):
    """Images of a base point under all quadrature nodes, shape (q, n)."""
    mats = action.group.haar_matrices
    return np.einsum("qij,j->qi", mats, x)


def point_orbit_distance(action, field_, x, y, manifold=None, cid_x=0, cid_y=0,
                         candidates=CANDIDATES, tol=SEGMENT_TOL):
    """Estimated distance from ``x`` to the orbit of ``y``.

    Nodes are ranked by Euclidean distance of blown-down points; the best
    ``candidates`` are measured with ``field_``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mats = action.group.haar_matrices
    if manifold is None or manifold.stage_count == 0:
        imgs = _orbit_images(action, y)
        order = np.argsort(np.linalg.norm(imgs - x, axis=1), kind="stable")
        return min(segment_length(field_, 0, x, imgs[q], tol) for q in order[:candidates])
    lifted = LiftedAction(action, manifold)
    bx = manifold.blow_down(cid_x, x)
    by = manifold.blow_down(cid_y, y)
    proxy = np.linalg.norm(np.einsum("qij,j->qi", mats, by) - bx, axis=1)
    dx, dy = _line_direction(manifold, cid_x, x), _line_direction(manifold, cid_y, y)
    if dx is not None and dy is not None:
        # tie-break equal base distances (points on E) by normal-line alignment
        gd = np.einsum("qij,j->qi", mats, dy)
        proxy = proxy + np.minimum(np.linalg.norm(gd - dx, axis=1),
                                   np.linalg.norm(gd + dx, axis=1))
    order = np.argsort(proxy, kind="stable")
    best = np.inf
    used = 0
    for q in order:
        if used >= candidates:
            break
        c2, y2 = lifted.act(mats[q], cid_y, y)
        try:
            z = lifted.to_chart(c2, y2, cid_x)
            length = segment_length(field_, cid_x, x, z, tol)
        except ChartExit:
            try:
                z = lifted.to_chart(cid_x, x, c2)
                length = segment_length(field_, c2, z, y2, tol)
            except ChartExit:
                continue
        used += 1
        best = min(best, length)
    if not np.isfinite(best):
        raise ChartExit("no chart contains both points", x=x.tolist(), y=y.tolist())
    return best


def _line_direction(manifold, cid, y):
    """Unit normal direction (base coordinates) of a first-stage chart point."""
    chart = manifold.charts[cid]
    if chart.kind != "projective" or chart.parent != 0:
        return None
    d = chart.direction(y)
    return d / np.linalg.norm(d)


# ------------------------------------------------------------------ sampling

def orbit_proxy(action, x, pts):
    """min_g |x - g p| for each row p (Euclidean, base coordinates)."""
    imgs = np.einsum("qij,pj->pqi", action.group.haar_matrices, pts)
    return np.min(np.linalg.norm(imgs - x, axis=2), axis=1)


def sample_representatives(action, n_samples, radius=1.0, seed=0, pool=None):
    """Farthest-point sample of orbit representatives in the ball.

    The pool starts with the origin so the most singular orbit of a
    linear action is always represented.
    """
    rng = np.random.default_rng(seed)
    n = action.ambient_dim
    if pool is None:
        pool = max(10 * n_samples, 2000)
    pts = rng.standard_normal((pool, n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= radius * rng.random((pool, 1)) ** (1.0 / n)
    pts[0] = 0.0
    chosen = [0]
    dist = orbit_proxy(action, pts[0], pts)
    for _ in range(min(n_samples, pool) - 1):
        i = int(np.argmax(dist))
        chosen.append(i)
        dist = np.minimum(dist, orbit_proxy(action, pts[i], pts))
    return pts[chosen]


def _knn_edges(action, reps, k):
    m = len(reps)
    prox = np.stack([orbit_proxy(action, r, reps) for r in reps])
    prox = np.minimum(prox, prox.T)
    edges = set()
    for i in range(m):
        order = np.argsort(prox[i], kind="stable")
        for j in order[1: k + 1]:
            edges.add((min(i, int(j)), max(i, int(j))))
    return sorted(edges)


def chain_metric(weights):
    """All-pairs shortest paths; raises if the graph is disconnected."""
    d = kernels.floyd_warshall(weights)
    if not np.all(np.isfinite(d)):
        raise GraphDisconnected("orbit graph is disconnected; increase k or the sample count",
                                unreachable=int(np.count_nonzero(~np.isfinite(d))))
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def _label(stage, cid, p):
    return f"s{stage}:c{cid}:" + ",".join(f"{v:.6g}" for v in p)


def sample_orbit_space(action, field_, n_samples=200, radius=1.0, seed=0, k=DEFAULT_K,
                       manifold=None, reps=None, direction=None):
    """Chain-metric orbit space of the base or of a blow-up.

    With ``manifold`` the representatives are lifted to its leaf charts.
    """
    if reps is None:
        reps = sample_representatives(action, n_samples, radius, seed)
    m = len(reps)
    stage = manifold.stage_count if manifold is not None else 0
    if stage:
        if direction is None:
            direction = manifold.stages[0].centers[0].normal[:, 0]
        lifted_pts = [manifold.lift(r, direction) for r in reps]
    else:
        lifted_pts = [(0, np.asarray(r, dtype=float)) for r in reps]
    w = np.full((m, m), np.inf)
    np.fill_diagonal(w, 0.0)
    edges = _knn_edges(action, np.asarray(reps), k)

    def weight(edge):
        (ci, pi), (cj, pj) = lifted_pts[edge[0]], lifted_pts[edge[1]]
        if stage:
            return point_orbit_distance(action, field_, pi, pj, manifold, ci, cj)
        return point_orbit_distance(action, field_, pi, pj)

    for (i, j), d in zip(edges, pmap(weight, edges)):
        w[i, j] = w[j, i] = d
    dist = chain_metric(w)
    labels = tuple(_label(stage, c, p) for c, p in lifted_pts)
    points = tuple((stage, int(c), tuple(float(v) for v in p)) for c, p in lifted_pts)
    return FiniteMetricSpace(labels=labels, distances=dist, points=points)


# ------------------------------------------------------------------ Gromov-Hausdorff

def _distortion(da, db, pairs):
    ra = np.array([p[0] for p in pairs], dtype=np.int_)
    rb = np.array([p[1] for p in pairs], dtype=np.int_)
    return kernels.correspondence_distortion(da, db, ra, rb)


def gh_exact(a, b):
    if len(a) > EXACT_LIMIT or len(b) > EXACT_LIMIT:
        raise TooLargeForExact("exact Gromov-Hausdorff distance limited to 8 points",
                               sizes=[len(a), len(b)], limit=EXACT_LIMIT)
    da, db = a.distances, b.distances
    if len(a) == 0 or len(b) == 0:
        return 0.0
    cand = np.unique(np.abs(da[:, :, None, None] - db[None, None, :, :]).ravel())
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if kernels.correspondence_feasible(da, db, cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return 0.5 * float(cand[lo])


def _hausdorff_1d(u, v):
    u = np.sort(u)
    v = np.sort(v)

    def one_way(p, q):
        idx = np.clip(np.searchsorted(q, p), 1, len(q) - 1) if len(q) > 1 else np.zeros(len(p), int)
        left = np.abs(p - q[np.maximum(idx - 1, 0)])
        right = np.abs(p - q[idx])
        return float(np.max(np.minimum(left, right)))

    return max(one_way(u, v), one_way(v, u))


def gh_lower_bound(a, b):
    if not len(a) or not len(b):
        return 0.0
    diam = 0.5 * abs(a.diameter - b.diameter)
    ecc = 0.5 * _hausdorff_1d(a.eccentricities(), b.eccentricities())
    return max(diam, ecc)


def _greedy_pairs(a, b):
    ea, eb = a.eccentricities(), b.eccentricities()
    pairs = set()
    for i, e in enumerate(ea):
        pairs.add((i, int(np.argmin(np.abs(eb - e)))))
    for j, e in enumerate(eb):
        pairs.add((int(np.argmin(np.abs(ea - e))), j))
    return sorted(pairs)


def _anchor_pairs(da, db, a0, b0, anchors=8):
    """Match points by their distance profiles to a growing set of anchor pairs."""
    cost = np.abs(da[:, a0][:, None] - db[:, b0][None, :])
    for _ in range(anchors - 1):
        row_best = cost.min(axis=1)
        a = int(np.argmax(row_best))
        if row_best[a] == 0.0:
            break
        b = int(np.argmin(cost[a]))
        cost = np.maximum(cost, np.abs(da[:, a][:, None] - db[:, b][None, :]))
    pairs = {(i, int(np.argmin(cost[i]))) for i in range(da.shape[0])}
    pairs |= {(int(np.argmin(cost[:, j])), j) for j in range(db.shape[0])}
    return sorted(pairs)


def _anchor_candidates(a, b):
    """Correspondences seeded by the most eccentric points of each space."""
    da, db = a.distances, b.distances
    ia = np.argsort(-a.eccentricities(), kind="stable")[:2]
    ib = np.argsort(-b.eccentricities(), kind="stable")[:2]
    return [_anchor_pairs(da, db, int(x), int(y)) for x in ia for y in ib]


def _local_search(da, db, pairs, rounds=50):
    pairs = list(pairs)
    best = _distortion(da, db, pairs)
    nb = db.shape[0]
    for _ in range(rounds):
        ra = np.array([p[0] for p in pairs], dtype=np.int_)
        rb = np.array([p[1] for p in pairs], dtype=np.int_)
        # pair contributing the worst distortion
        rows = [kernels.pair_distortion(da, db, ra, rb, p[0], p[1]) for p in pairs]
        worst_idx = int(np.argmax(rows))
        a0, b0 = pairs[worst_idx]
        rest = pairs[:worst_idx] + pairs[worst_idx + 1:]
        covered_b = {p[1] for p in rest}
        covered_a = {p[0] for p in rest}
        if a0 not in covered_a and b0 not in covered_b:
            break
        rra = np.array([p[0] for p in rest], dtype=np.int_)
        rrb = np.array([p[1] for p in rest], dtype=np.int_)
        base = kernels.correspondence_distortion(da, db, rra, rrb)
        if base >= best:
            break
        improved = False
        if b0 in covered_b:
            options = [(a0, bb) for bb in range(nb)]
        else:
            options = [(aa, b0) for aa in range(da.shape[0])]
        cand_best, cand_pair = best, None
        for pa, pb in options:
            v = max(base, kernels.pair_distortion(da, db, rra, rrb, pa, pb))
            if v < cand_best:
                cand_best, cand_pair = v, (pa, pb)
        if cand_pair is not None:
            pairs = rest + [cand_pair]
            best = cand_best
            improved = True
        if not improved:
            break
    return best, pairs


def gh_distance(a, b, mode="bounds", seed_pairs=None):
    """Gromov-Hausdorff distance interval ``(lower, upper)``."""
    if mode == "exact":
        v = gh_exact(a, b)
        return v, v
    if mode != "bounds":
        raise ValueError(f"unknown mode {mode!r}")
    if not len(a) or not len(b):
        return 0.0, 0.0
    da, db = a.distances, b.distances
    lower = gh_lower_bound(a, b)
    best, _ = _local_search(da, db, _greedy_pairs(a, b))
    for pairs in _anchor_candidates(a, b):
        if best == 0.0:
            break
        best = min(best, _local_search(da, db, pairs)[0])
    if seed_pairs is not None:
        seeded, _ = _local_search(da, db, seed_pairs)
        best = min(best, seeded)
    upper = 0.5 * best
    return lower, max(upper, lower)


# ------------------------------------------------------------------ comparison

def compare_quotients(action, desing_result, eps_schedule, base_field=None, n_samples=200,
                      radius=1.0, seed=0, k=DEFAULT_K):
    """GH upper bounds between the orbit space and its desingularization."""
    from .metrics import base_blowup_metric, euclidean_field

    n = action.ambient_dim
    if base_field is None:
        base_field = euclidean_field(n)
    stages = desing_result.stage_count
    if stages > 1:
        raise UnsupportedStage("quotient comparison is implemented for one blow-up stage",
                               stages=stages)
    reps = sample_representatives(action, n_samples, radius, seed)
    x = sample_orbit_space(action, base_field, radius=radius, k=k, reps=reps)
    rows = []
    for eps in eps_schedule:
        if stages == 0:
            reps2 = sample_representatives(action, n_samples, radius, seed + 1)
            xt = sample_orbit_space(action, base_field, radius=radius, k=k, reps=reps2)
            seed_pairs = None
            rho = None
        else:
            rho = eps / (4.0 * stages)
            manifold = desing_result.manifold
            up = base_blowup_metric(action, manifold, rho, base_field)
            xt = sample_orbit_space(action, up, radius=radius, k=k, manifold=manifold, reps=reps)
            seed_pairs = [(i, i) for i in range(len(reps))]
        lower, upper = gh_distance(x, xt, "bounds", seed_pairs)
        # observed only: the projection of orbit spaces need not be a submetry
        pair_defect = float(np.max(np.abs(xt.distances - x.distances))) if stages else None
        rows.append({"eps": float(eps), "rho": rho, "lower": lower, "upper": upper,
                     "pair_defect": pair_defect, "passed": bool(upper < eps)})
    uppers = [r["upper"] for r in rows]
    monotone = all(b <= a for a, b in zip(uppers, uppers[1:]))
    return {"kind": "compare", "stages": stages, "samples": len(reps), "rows": rows,
            "monotone": monotone, "passed": all(r["passed"] for r in rows) and monotone}
