"""Dimension stratification by orbit codimension, sampled on grids.

At the base the grid covers a closed ball.  On a blow-up stage each leaf
projective chart gets its own box grid (points blowing down outside the
ball are dropped) and components are found chart by chart.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import actions as act_mod
from .blowup import LiftedAction, batch_rank, make_center
from .errors import CenterNotRecognized

MAX_WITNESSES = 16
DENSITY_THRESHOLD = 0.9
FIT_RESIDUAL = 1e-7


@dataclass(frozen=True)
class Stratum:
    leaf_codim: int
    component_id: int
    estimated_dim: int
    witness_points: tuple  # of (chart id, tuple of coords)
    is_most_singular: bool
    size: int = 0
    chart_id: int = 0

    def to_dict(self):
        return {
            "codim": self.leaf_codim,
            "component_id": self.component_id,
            "dim": self.estimated_dim,
            "chart": self.chart_id,
            "witness_count": self.size,
            "witnesses": [list(p) for _, p in self.witness_points],
        }


@dataclass
class Stratification:
    strata: list
    grid_spec: dict
    min_codim: int
    max_codim: int
    ambient_dim: int
    # raw samples, one block per chart: (chart id, points, codims, component labels, spacing)
    samples: list = field(default_factory=list, repr=False)

    @property
    def codim_classes(self):
        return sorted({s.leaf_codim for s in self.strata})

    def component(self, cid):
        return self.strata[cid]

    def min_codim_fraction(self):
        total = sum(len(b[1]) for b in self.samples)
        hit = sum(int(np.count_nonzero(b[2] == self.min_codim)) for b in self.samples)
        return hit / total if total else 1.0

    def to_list(self):
        return [s.to_dict() for s in self.strata]


# ---------------------------------------------------------------- grids

def odd_resolution(grid):
    grid = int(grid)
    if grid < 3:
        grid = 3
    return grid if grid % 2 else grid + 1


def ball_grid(n, radius, grid):
    grid = odd_resolution(grid)
    axis = np.linspace(-radius, radius, grid)
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)
    return pts[keep], axis[1] - axis[0]


def box_grid(bounds, grid):
    grid = odd_resolution(grid)
    axes = [np.linspace(-b, b, grid) for b in bounds]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bounds))
    spacing = np.array([a[1] - a[0] for a in axes])
    return pts, spacing


# ---------------------------------------------------------------- dimensions

def _normal_fixed_dim(gens, jacs, tol_where=None):
    """dim {v orthogonal to span(gens) : J_xi v in span(gens) for xi in stabilizer}."""
    m = gens.shape[0]
    if gens.shape[1] == 0:
        return m
    tangent = act_mod.range_basis(gens, tol_where)
    normal = act_mod.complement_basis(tangent, m)
    if normal.shape[1] == 0:
        return 0
    stab = act_mod.null_basis(gens, tol_where)  # columns in algebra coords
    if stab.shape[1] == 0:
        return normal.shape[1]
    proj = np.eye(m) - tangent @ tangent.T
    blocks = []
    for xi in stab.T:
        op = np.tensordot(xi, jacs, axes=1)
        blocks.append(proj @ op @ normal)
    system = np.vstack(blocks)
    return normal.shape[1] - act_mod.numerical_rank(system, tol_where)


def stratum_dimension(action, x, chart=None, lifted=None):
    """Orbit dimension plus the dimension of stabilizer-fixed normal vectors."""
    x = np.asarray(x, dtype=float)
    if lifted is None or chart in (None, 0):
        gens = act_mod.generator_matrix(action, x)
        jacs = np.array(action.generators) if action.generators else np.zeros((0,) + (len(x),) * 2)
    else:
        gens = lifted.generator_matrix(chart, x)
        jacs = lifted.generator_jacobians(chart, x)
    orbit = act_mod.numerical_rank(gens, x) if gens.shape[1] else 0
    return orbit + _normal_fixed_dim(gens, jacs, x)


# ---------------------------------------------------------------- clustering

def _components(points, labels, eps):
    """Connected components of the eps-graph restricted to equal labels."""
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=int), 0
    tree = cKDTree(points)
    pairs = tree.query_pairs(eps, output_type="ndarray")
    if len(pairs):
        same = labels[pairs[:, 0]] == labels[pairs[:, 1]]
        pairs = pairs[same]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) \
        if len(pairs) else coo_matrix((n, n))
    count, comp = connected_components(graph, directed=False)
    return comp, count


def _pick_witnesses(pts):
    order = np.lexsort(pts.T[::-1])
    if len(order) <= MAX_WITNESSES:
        return pts[order]
    idx = np.linspace(0, len(order) - 1, MAX_WITNESSES).round().astype(int)
    return pts[order[idx]]


def _scaled(points, spacing):
    return points / np.asarray(spacing)


def _build(blocks, dim_fn, n, grid_spec):
    """Assemble strata from per-chart (chart id, points, codims, spacing) blocks."""
    raw = []
    samples = []
    for cid, pts, codims, spacing in blocks:
        # isotropic clustering in units of grid spacing
        comp, count = _components(_scaled(pts, spacing), codims, 2.0 + 1e-9)
        samples.append([cid, pts, codims, comp, spacing])
        for k in range(count):
            mask = comp == k
            members = pts[mask]
            wit = _pick_witnesses(members)
            raw.append((int(codims[mask][0]), tuple(wit[0]), cid, k, wit, int(mask.sum())))
    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    codims_all = [r[0] for r in raw]
    lo = min(codims_all) if raw else 0
    hi = max(codims_all) if raw else 0
    strata = []
    relabel = {}
    for new_id, (codim, _, cid, k, wit, size) in enumerate(raw):
        relabel[(cid, k)] = new_id
        strata.append(Stratum(
            leaf_codim=codim, component_id=new_id,
            estimated_dim=int(dim_fn(cid, wit[0])),
            witness_points=tuple((cid, tuple(float(v) for v in w)) for w in wit),
            is_most_singular=(codim == hi and hi != lo), size=size, chart_id=cid))
    for block in samples:
        cid, comp = block[0], block[3]
        block[3] = np.array([relabel[(cid, int(k))] for k in comp], dtype=int)
    return Stratification(strata=strata, grid_spec=grid_spec, min_codim=lo, max_codim=hi,
                          ambient_dim=n, samples=[tuple(b) for b in samples])


def _base_codims(action, pts):
    n = action.ambient_dim
    if not action.generators:
        return np.full(len(pts), n, dtype=int)
    mats = np.stack([pts @ x.T for x in action.generators], axis=-1)
    return n - batch_rank(mats, pts)


def stratify(action, radius=1.0, grid=21):
    """Stratify the base ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = action.ambient_dim
    pts, h = ball_grid(n, radius, grid)
    codims = _base_codims(action, pts)
    spec = {"region": "ball", "radius": float(radius), "grid": odd_resolution(grid),
            "spacing": float(h), "stage": 0}
    return _build([(0, pts, codims, np.full(n, h))],
                  lambda cid, x: stratum_dimension(action, x), n, spec)


def stratify_stage(lifted, radius=1.0, grid=11):
    """Stratify the leaf charts of a blown-up manifold."""
    m = lifted.manifold
    if m.stage_count == 0:
        return stratify(lifted.action, radius, grid)
    n = m.n
    blocks = []
    for chart in m.leaf_charts:
        pts, spacing = box_grid(m.chart_box(chart.id, radius), grid)
        down = m.blow_down(chart.id, pts)
        pts = pts[np.linalg.norm(down, axis=1) <= radius * (1 + 1e-12)]
        codims = n - lifted.orbit_dimensions(chart.id, pts)
        blocks.append((chart.id, pts, codims, spacing))
    spec = {"region": "blowup", "radius": float(radius), "grid": odd_resolution(grid),
            "stage": m.stage_count, "charts": [c.id for c in m.leaf_charts]}
    return _build(blocks, lambda cid, y: stratum_dimension(lifted.action, y, cid, lifted), n, spec)


def is_regular_stratification(strat):
    return strat.min_codim == strat.max_codim


# ---------------------------------------------------------------- checks

def check_frontier(strat):
    """Neighbouring samples with different components must be ordered.

    The higher-codimension side must also have strictly smaller
    dimension.  Returns a report dict.
    """
    by_id = {s.component_id: s for s in strat.strata}
    violations = []
    checked = 0
    seen = set()
    for cid, pts, codims, comp, spacing in strat.samples:
        tree = cKDTree(_scaled(pts, spacing))
        pairs = tree.query_pairs(2.0 + 1e-9, output_type="ndarray")
        if not len(pairs):
            continue
        diff = comp[pairs[:, 0]] != comp[pairs[:, 1]]
        for i, j in pairs[diff]:
            a, b = by_id[int(comp[i])], by_id[int(comp[j])]
            key = (min(a.component_id, b.component_id), max(a.component_id, b.component_id))
            if key in seen:
                continue
            seen.add(key)
            checked += 1
            lo, hi = (a, b) if a.leaf_codim < b.leaf_codim else (b, a)
            if lo.leaf_codim == hi.leaf_codim or not hi.estimated_dim < lo.estimated_dim:
                violations.append({"components": list(key),
                                   "codims": [a.leaf_codim, b.leaf_codim],
                                   "dims": [a.estimated_dim, b.estimated_dim],
                                   "point": pts[i].tolist()})
    return {"passed": not violations, "adjacent_pairs": checked, "violations": violations}


def check_no_codim_one(strat):
    n = strat.ambient_dim
    bad = [s.component_id for s in strat.strata
           if s.leaf_codim != strat.min_codim and not s.estimated_dim < n - 1]
    return {"passed": not bad, "violations": bad}


def check_density(strat, threshold=DENSITY_THRESHOLD):
    fam = [s for s in strat.strata if s.leaf_codim == strat.min_codim]
    frac = strat.min_codim_fraction()
    return {"passed": len(fam) == 1 and frac >= threshold, "fraction": frac,
            "components": len(fam)}


def check_witness_dimensions(strat, action, lifted=None):
    """Every witness must reproduce its component's estimated dimension."""
    bad = []
    for s in strat.strata:
        for cid, p in s.witness_points:
            d = stratum_dimension(action, p, cid, lifted)
            if d != s.estimated_dim:
                bad.append({"component": s.component_id, "point": list(p), "dim": d})
    return {"passed": not bad, "violations": bad}


# ---------------------------------------------------------------- centers

def most_singular_stratum(action_or_stage, radius=1.0, grid=11, strat=None):
    """Center(s) for the next blow-up.

    For a base action this is the fixed subspace of the identity
    component.  For a :class:`LiftedAction` the maximal-codimension
    samples of each leaf chart are fitted by a linear subspace.
    """
    if isinstance(action_or_stage, LiftedAction) and action_or_stage.manifold.stage_count:
        return _fit_centers(action_or_stage, radius, grid, strat)
    action = action_or_stage.action if isinstance(action_or_stage, LiftedAction) else action_or_stage
    n = action.ambient_dim
    return [make_center(0, act_mod.fixed_subspace(action), n)]


def _fit_centers(lifted, radius, grid, strat):
    if strat is None:
        strat = stratify_stage(lifted, radius, grid)
    top = strat.max_codim
    centers = []
    for cid, pts, codims, _, _ in strat.samples:
        sel = pts[codims == top]
        if not len(sel):
            continue
        u, sv, vt = np.linalg.svd(sel, full_matrices=False)
        scale = max(1.0, float(np.max(np.abs(sel))))
        k = int(np.count_nonzero(sv > 1e-9 * scale * np.sqrt(len(sel))))
        basis = vt[:k].T
        resid = sel - (sel @ basis) @ basis.T if k else sel
        worst = float(np.max(np.linalg.norm(resid, axis=1)))
        if worst > FIT_RESIDUAL:
            raise CenterNotRecognized("maximal-codimension samples are not a linear subspace",
                                      chart=cid, residual=worst)
        on = np.linalg.norm(pts - (pts @ basis) @ basis.T if k else pts, axis=1) <= FIT_RESIDUAL
        if np.any(codims[on] != top):
            raise CenterNotRecognized("fitted subspace contains regular samples", chart=cid)
        centers.append(make_center(cid, basis, pts.shape[1]))
    if not centers:
        raise CenterNotRecognized("no maximal-codimension samples found")
    return centers

