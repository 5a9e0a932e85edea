"""Convex hulls, v-rep/h-rep conversion and zonotope overapproximation of polytopes."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from zonoconform.config import DEFAULT_TOL, HULL_MAX_DIM, LP_OPTIONS
from zonoconform.errors import (
    DegeneracyError,
    DomainError,
    InfeasibleProgramError,
    UnsupportedDimensionError,
)
from zonoconform.sets import (
    HalfSpace,
    Zonotope,
    _canonical_directions,
    gauge,
)

logger = logging.getLogger(__name__)

# GLOBALS:
DIRECTION_MERGE_ANGLE = 1e-9


@dataclass(frozen=True, eq=False)
class VPolytope:
    """Polytope given by its vertices (one per row)."""
    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[0] == 0:
            raise DomainError(f"a polytope needs at least one vertex, got shape {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise DomainError("polytope vertices must be finite")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)

    @property
    def dim(self):
        return self.vertices.shape[1]


@dataclass(frozen=True, eq=False)
class HPolytope:
    """Polytope given as an intersection of half-spaces."""
    halfspaces: tuple

    def __post_init__(self):
        spaces = tuple(self.halfspaces)
        if not spaces:
            raise DomainError("an h-polytope needs at least one half-space")
        object.__setattr__(self, "halfspaces", spaces)

    @property
    def normals(self):
        return np.vstack([h.normal for h in self.halfspaces])

    @property
    def offsets(self):
        return np.array([h.offset for h in self.halfspaces])

    def contains(self, points, tol=DEFAULT_TOL):
        X = np.atleast_2d(np.asarray(points, dtype=float))
        slack = X @ self.normals.T - self.offsets
        scale = max(np.max(np.abs(self.offsets)), 1.0)
        return np.all(slack <= tol * scale, axis=1)


def _check_full_dimensional(X):
    n, d = X.shape
    if n < d + 1:
        raise DegeneracyError(f"{n} points cannot span a full-dimensional hull in {d} dimensions")
    if np.linalg.matrix_rank(X - X[0]) < d:
        raise DegeneracyError(f"points lie in a lower-dimensional affine subspace of R^{d}")


def convex_hull(points):
    """
    Vertices of the convex hull of a sample.

    Parameters:
        points (np.ndarray): n x d sample with d <= 6.

    Returns:
        VPolytope: the extreme points.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError(f"convex hull needs a nonempty n x d matrix, got shape {X.shape}")
    d = X.shape[1]
    if d > HULL_MAX_DIM:
        raise UnsupportedDimensionError(
            f"convex hull fitting supports at most {HULL_MAX_DIM} dimensions, got {d}; use the rotated_box method"
        )
    _check_full_dimensional(X)
    if d == 1:
        return VPolytope(np.array([[X.min()], [X.max()]]))
    try:
        hull = ConvexHull(X)
    except QhullError as err:
        raise DegeneracyError(f"convex hull failed: {str(err).splitlines()[0]}") from None
    logger.debug("convex hull of %d points has %d vertices", X.shape[0], hull.vertices.shape[0])
    return VPolytope(X[hull.vertices])


def vrep_to_hrep(p):
    """
    Facet half-spaces of a full-dimensional polytope.

    Coplanar facets that Qhull triangulates are merged into one half-space.

    Parameters:
        p (VPolytope): the polytope.

    Returns:
        HPolytope: unit-normal half-spaces a.x <= b.
    """
    V = p.vertices
    _check_full_dimensional(V)
    if p.dim == 1:
        return HPolytope((HalfSpace([1.0], V.max()), HalfSpace([-1.0], -V.min())))
    try:
        hull = ConvexHull(V)
    except QhullError as err:
        raise DegeneracyError(f"convex hull failed: {str(err).splitlines()[0]}") from None
    equations = hull.equations
    scale = max(np.max(np.abs(V)), 1.0)
    keys = np.round(np.hstack([equations[:, :-1], equations[:, -1:] / scale]), 9) + 0.0
    _, first = np.unique(keys, axis=0, return_index=True)
    spaces = tuple(HalfSpace(equations[i, :-1], -equations[i, -1]) for i in np.sort(first))
    return HPolytope(spaces)


def merge_directions(directions):
    """
    Normalise directions and merge those within DIRECTION_MERGE_ANGLE of each other.

    A direction and its negative give the same generator, so they merge too.
    """
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    if D.shape[0] == 0:
        raise DomainError("direction set is empty")
    if np.any(np.linalg.norm(D, axis=1) == 0.0):
        raise DomainError("directions must be nonzero")
    D = _canonical_directions(D)
    kept = []
    for row in D:
        if all(np.linalg.norm(row - other) >= DIRECTION_MERGE_ANGLE for other in kept):
            kept.append(row)
    return np.vstack(kept)


def overapprox_zonotope(p, directions=None):
    """
    Zonotope enclosing a polytope, built from fixed generator directions.

    Solves min sum_k alpha_k subject to v_j = c + sum_k b_kj d_k and
    -alpha_k <= b_kj <= alpha_k for every vertex v_j. The result has
    center c and generators alpha_k d_k, with zero-length columns dropped.

    Parameters:
        p (VPolytope): polytope to enclose.
        directions (np.ndarray | None): K x d directions; defaults to the
            facet normals of p with +/- pairs merged.

    Returns:
        Zonotope: contains every vertex of p.
    """
    V = p.vertices
    m, d = V.shape
    if directions is None:
        directions = vrep_to_hrep(p).normals
    D = merge_directions(directions)
    if D.shape[1] != d:
        raise DomainError(f"directions have dimension {D.shape[1]}, polytope has {d}")
    if np.linalg.matrix_rank(D) < d:
        raise InfeasibleProgramError("directions do not span the space; the enclosing program is infeasible")
    K = D.shape[0]

    # variables: center (d), coefficients b (m*K, vertex-major), alpha (K)
    n_coef = m * K
    equality = sparse.hstack([
        sparse.kron(np.ones((m, 1)), sparse.identity(d)),
        sparse.kron(sparse.identity(m), sparse.csr_matrix(D.T)),
        sparse.csr_matrix((m * d, K)),
    ])
    spread = sparse.kron(np.ones((m, 1)), sparse.identity(K))
    ident = sparse.identity(n_coef)
    upper = sparse.vstack([
        sparse.hstack([sparse.csr_matrix((n_coef, d)), ident, -spread]),
        sparse.hstack([sparse.csr_matrix((n_coef, d)), -ident, -spread]),
    ])
    cost = np.concatenate([np.zeros(d + n_coef), np.ones(K)])
    bounds = [(None, None)] * (d + n_coef) + [(0.0, None)] * K
    result = linprog(
        cost,
        A_ub=upper.tocsr(),
        b_ub=np.zeros(2 * n_coef),
        A_eq=equality.tocsr(),
        b_eq=V.reshape(-1),
        bounds=bounds,
        method="highs",
        options=LP_OPTIONS,
    )
    if result.status != 0:
        raise InfeasibleProgramError(f"overapproximation program failed: {result.message}")

    center = result.x[:d]
    alphas = np.maximum(result.x[-K:], 0.0)
    keep = alphas > 1e-14 * max(alphas.max(), 1e-300)
    zonotope = Zonotope(center, D[keep].T * alphas[keep])

    # the solver meets constraints to its tolerance only; rescale so every vertex is inside
    worst = float(np.max(gauge(zonotope, V)))
    if worst > 1.0:
        zonotope = Zonotope(center, zonotope.generators * worst)
    logger.debug("overapproximation: %d directions, %d generators kept, objective %.6g",
                 K, int(keep.sum()), result.fun)
    return zonotope
