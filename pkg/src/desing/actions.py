"""Compact groups acting orthogonally on R^n, and pointwise orbit linear algebra.

A group is presented by representatives of its connected components,
a basis of its Lie algebra (as skew matrices acting on R^n) and a
weighted node set approximating normalized Haar measure.  Orbit
dimensions only see the Lie algebra; the finite components take part
in orbits and averages.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, RankAmbiguous, ValidationError

RANK_RTOL = 1e-8
AMBIGUOUS_BAND = (1e-10, 1e-6)
# below this the generator matrix is treated as exactly zero
RANK_ATOL = 1e-12

ORTHO_TOL = 1e-10
SKEW_TOL = 1e-10
WEIGHT_TOL = 1e-12

DEFAULT_NODES = {"circle": 64, "torus2": 16, "so3": 8}


def singular_values(m):
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def numerical_rank(m, where=None):
    """Rank of ``m`` under the fixed policy.

    Singular values above ``RANK_RTOL * s_max`` count.  Any value inside
    ``[1e-10, 1e-6] * s_max`` raises :class:`RankAmbiguous` instead of
    guessing.
    """
    s = singular_values(m)
    if s.size == 0 or s[0] <= RANK_ATOL:
        return 0
    rel = s / s[0]
    lo, hi = AMBIGUOUS_BAND
    bad = (rel >= lo) & (rel <= hi)
    if np.any(bad):
        raise RankAmbiguous(
            "singular value inside ambiguity band",
            singular_values=s.tolist(),
            point=None if where is None else np.asarray(where, dtype=float).tolist(),
        )
    return int(np.count_nonzero(rel > RANK_RTOL))


def range_basis(m, where=None):
    """Orthonormal basis (columns) of the column space of ``m``."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return np.zeros((m.shape[0], 0))
    r = numerical_rank(m, where)
    u, _, _ = np.linalg.svd(m, full_matrices=True)
    return u[:, :r]


def null_basis(m, where=None):
    """Orthonormal basis (columns) of the null space of ``m``."""
    m = np.asarray(m, dtype=float)
    ncols = m.shape[1]
    if m.shape[0] == 0 or m.size == 0:
        return np.eye(ncols)
    r = numerical_rank(m, where)
    _, _, vt = np.linalg.svd(m, full_matrices=True)
    return vt[r:].T.copy()


def complement_basis(basis, dim):
    """Orthonormal basis of the orthogonal complement of span(basis)."""
    basis = np.asarray(basis, dtype=float).reshape(dim, -1)
    if basis.shape[1] == 0:
        return np.eye(dim)
    return null_basis(basis.T)


@dataclass(frozen=True)
class CompactGroupModel:
    finite_elements: tuple
    lie_algebra: tuple
    haar_matrices: np.ndarray = field(repr=False)
    haar_weights: np.ndarray = field(repr=False)
    haar_kind: str = "explicit"

    @property
    def dim(self):
        return self.finite_elements[0].shape[0]

    @property
    def algebra_dim(self):
        return len(self.lie_algebra)

    @property
    def haar_nodes(self):
        return list(zip(self.haar_matrices, self.haar_weights))

    def is_finite(self):
        return self.algebra_dim == 0

    def exp(self, coeffs):
        """Group element exp(sum c_i X_i)."""
        x = sum(c * a for c, a in zip(coeffs, self.lie_algebra))
        return expm(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinearOrthogonalAction:
    group: CompactGroupModel
    ambient_dim: int
    name: str = ""

    @property
    def generators(self):
        return self.group.lie_algebra

    def check_norm_preservation(self, points, tol=1e-10):
        pts = np.atleast_2d(points)
        base = np.linalg.norm(pts, axis=1)
        for g in self.group.haar_matrices:
            if np.max(np.abs(np.linalg.norm(pts @ g.T, axis=1) - base)) > tol:
                return False
        return True


# ---------------------------------------------------------------- haar

def _circle_nodes(algebra, n):
    if len(algebra) != 1:
        raise ValidationError([{"code": "BadHaar", "entry": "haar.kind",
                                "detail": "circle quadrature needs exactly one generator"}])
    x = algebra[0]
    thetas = 2.0 * np.pi * np.arange(n) / n
    mats = np.array([expm(t * x) for t in thetas])
    return mats, np.full(n, 1.0 / n)


def _torus_nodes(algebra, n):
    if len(algebra) != 2:
        raise ValidationError([{"code": "BadHaar", "entry": "haar.kind",
                                "detail": "torus2 quadrature needs exactly two generators"}])
    x1, x2 = algebra
    thetas = 2.0 * np.pi * np.arange(n) / n
    e1 = [expm(t * x1) for t in thetas]
    e2 = [expm(t * x2) for t in thetas]
    mats = np.array([a @ b for a in e1 for b in e2])
    return mats, np.full(n * n, 1.0 / (n * n))


def _so3_nodes(algebra, n):
    # ZYZ Euler angles: alpha, gamma uniform, cos(beta) Gauss-Legendre
    if len(algebra) != 3:
        raise ValidationError([{"code": "BadHaar", "entry": "haar.kind",
                                "detail": "so3 quadrature needs the basis (L_x, L_y, L_z)"}])
    _, ly, lz = algebra
    angles = 2.0 * np.pi * np.arange(n) / n
    xs, ws = np.polynomial.legendre.leggauss(n)
    betas = np.arccos(xs)
    ez = [expm(a * lz) for a in angles]
    ey = [expm(b * ly) for b in betas]
    mats, weights = [], []
    for a in ez:
        for b, wb in zip(ey, ws):
            ab = a @ b
            for c in ez:
                mats.append(ab @ c)
                weights.append(wb / (2.0 * n * n))
    return np.array(mats), np.array(weights)


def _check_period(algebra, kind, violations):
    for i, x in enumerate(algebra):
        if kind in ("circle", "torus2") and np.max(np.abs(expm(2 * np.pi * x) - np.eye(len(x)))) > 1e-8:
            violations.append({"code": "BadHaar", "entry": f"lie_algebra[{i}]",
                               "detail": "exp(2*pi*X) is not the identity"})


# ---------------------------------------------------------------- validation

def _as_matrix(raw, n, label, violations):
    try:
        m = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        violations.append({"code": "BadShape", "entry": label, "detail": "not numeric"})
        return None
    if m.ndim != 2 or m.shape[0] != m.shape[1] or (n is not None and m.shape[0] != n):
        violations.append({"code": "BadShape", "entry": label,
                           "detail": f"expected {n}x{n}, got shape {list(m.shape)}"})
        return None
    return m


def validate_group(spec, ambient_dim=None):
    """Validate a raw group description and build its Haar quadrature.

    ``spec`` is the ``"group"`` object of the action JSON.  Raises
    :class:`ValidationError` listing every violated invariant.
    """
    violations = []
    n = ambient_dim
    raw_finite = spec.get("finite_elements")
    raw_alg = spec.get("lie_algebra", []) or []
    if not raw_finite and n is not None:
        raw_finite = [np.eye(n).tolist()]
    if not raw_finite:
        raise ValidationError([{"code": "BadShape", "entry": "finite_elements",
                                "detail": "no elements and no ambient_dim"}])
    finite = []
    for i, raw in enumerate(raw_finite):
        m = _as_matrix(raw, n, f"finite_elements[{i}]", violations)
        if m is None:
            continue
        n = m.shape[0] if n is None else n
        err = np.max(np.abs(m.T @ m - np.eye(n)))
        if err > ORTHO_TOL:
            violations.append({"code": "NonOrthogonal", "entry": f"finite_elements[{i}]",
                               "detail": f"|Q^T Q - I| = {err:.3e}"})
        finite.append(m)
    algebra = []
    for i, raw in enumerate(raw_alg):
        m = _as_matrix(raw, n, f"lie_algebra[{i}]", violations)
        if m is None:
            continue
        err = np.max(np.abs(m + m.T))
        if err > SKEW_TOL:
            violations.append({"code": "NonSkew", "entry": f"lie_algebra[{i}]",
                               "detail": f"|X + X^T| = {err:.3e}"})
        algebra.append(m)
    if finite and not any(np.max(np.abs(f - np.eye(n))) <= ORTHO_TOL for f in finite):
        violations.append({"code": "MissingIdentity", "entry": "finite_elements",
                           "detail": "identity matrix not among the component representatives"})
    if violations:
        raise ValidationError(violations)

    haar = spec.get("haar") or {"kind": "explicit" if not algebra else None}
    kind = haar.get("kind")
    if kind is None:
        kind = {1: "circle", 2: "torus2", 3: "so3"}.get(len(algebra), "explicit")
    if kind == "explicit":
        nodes = haar.get("nodes")
        if nodes is None or isinstance(nodes, int):
            if algebra:
                raise ValidationError([{"code": "BadHaar", "entry": "haar",
                                        "detail": "explicit haar needs a node list"}])
            mats = np.array(finite)
            weights = np.full(len(finite), 1.0 / len(finite))
        else:
            mats, weights = [], []
            for i, node in enumerate(nodes):
                m = _as_matrix(node["matrix"], n, f"haar.nodes[{i}]", violations)
                if m is not None and np.max(np.abs(m.T @ m - np.eye(n))) > ORTHO_TOL:
                    violations.append({"code": "NonOrthogonal", "entry": f"haar.nodes[{i}]"})
                mats.append(m)
                weights.append(float(node["weight"]))
            mats, weights = np.array(mats), np.array(weights)
            if np.any(weights <= 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
                violations.append({"code": "BadWeights", "entry": "haar.nodes",
                                   "detail": f"weights must be positive and sum to 1 (sum={weights.sum()!r})"})
            if violations:
                raise ValidationError(violations)
    else:
        count = haar.get("nodes") or DEFAULT_NODES.get(kind)
        builders = {"circle": _circle_nodes, "torus2": _torus_nodes, "so3": _so3_nodes}
        if kind not in builders:
            raise ValidationError([{"code": "BadHaar", "entry": "haar.kind", "detail": str(kind)}])
        _check_period(algebra, kind, violations)
        if violations:
            raise ValidationError(violations)
        ident, wid = builders[kind](algebra, int(count))
        # product with the component representatives
        mats = np.array([f @ h for f in finite for h in ident])
        weights = np.concatenate([wid / len(finite) for _ in finite])
    return CompactGroupModel(
        finite_elements=tuple(finite),
        lie_algebra=tuple(algebra),
        haar_matrices=np.asarray(mats, dtype=float),
        haar_weights=np.asarray(weights, dtype=float),
        haar_kind=kind,
    )


def load_action(source, name=""):
    """Build a validated action from a JSON path, JSON string or dict."""
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("{"):
        path = Path(source)
        spec = json.loads(path.read_text())
        name = name or path.stem
    elif isinstance(source, str):
        spec = json.loads(source)
    else:
        spec = source
    n = int(spec["ambient_dim"])
    group = validate_group(spec.get("group", {}), n)
    action = LinearOrthogonalAction(group=group, ambient_dim=n, name=name or spec.get("name", ""))
    if not action.check_norm_preservation(_probe_points(n)):
        raise ValidationError([{"code": "NonOrthogonal", "entry": "haar", "detail": "norm not preserved"}])
    return action


def _probe_points(n):
    rng = np.random.default_rng(0)
    return rng.standard_normal((8, n))


# ---------------------------------------------------------------- pointwise ops

def act(g, x):
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    if g.ndim != 2 or g.shape[1] != x.shape[-1]:
        raise DimensionMismatch("group element and point dimensions differ",
                                group_shape=list(g.shape), point_shape=list(x.shape))
    return x @ g.T


def generator_matrix(action, x):
    """Columns X_i x for the Lie algebra basis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != action.ambient_dim:
        raise DimensionMismatch("point has wrong dimension", expected=action.ambient_dim,
                                got=int(x.shape[-1]))
    if not action.generators:
        return np.zeros((action.ambient_dim, 0))
    return np.stack([xi @ x for xi in action.generators], axis=1)


def orbit_tangent_basis(action, x):
    return range_basis(generator_matrix(action, x), x)


def orbit_dimension(action, x):
    return numerical_rank(generator_matrix(action, x), x)


def stabilizer_subalgebra(action, x):
    """Orthonormal basis (rows, algebra coordinates) of {xi : xi.x = 0}."""
    m = generator_matrix(action, x)
    if m.shape[1] == 0:
        return np.zeros((0, 0))
    return null_basis(m, x).T


def algebra_element(action, coeffs):
    return sum(c * a for c, a in zip(coeffs, action.generators))


def fixed_subspace(action, restricted_algebra=None):
    """Orthonormal basis (columns) of the common kernel of the algebra.

    With ``restricted_algebra`` (rows of algebra coordinates) only those
    elements are used.
    """
    n = action.ambient_dim
    if restricted_algebra is None:
        mats = list(action.generators)
    else:
        mats = [algebra_element(action, c) for c in np.atleast_2d(restricted_algebra) if len(c)]
    if not mats:
        return np.eye(n)
    return null_basis(np.vstack(mats))


def differential_of_action(action, g, chart_point, chart=None, manifold=None):
    """Jacobian of the (lifted) action of ``g`` at a chart point.

    On the base this is ``g`` itself.  On a blow-up pass ``manifold``
    (a :class:`desing.blowup.BlownUpManifold`) and the chart id.
    """
    g = np.asarray(g, dtype=float)
    if manifold is None or chart in (None, 0):
        if g.shape != (action.ambient_dim, action.ambient_dim):
            raise DimensionMismatch("group element has wrong shape", shape=list(g.shape))
        return g.copy()
    from .blowup import LiftedAction

    _, _, jac = LiftedAction(action, manifold).act_with_jacobian(g, chart, chart_point)
    return jac
