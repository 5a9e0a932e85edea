"""
Zonotopes, hyperrectangles and nested zonotope families.

A zonotope <c, G> is the set {c + G xi : ||xi||_inf <= 1}. Membership is
answered through the gauge of a point, the smallest ||xi||_inf over all
representations c + G xi; a point is a member when its gauge is at most
1 + tol.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from zonoconform.config import (
    DEFAULT_TOL,
    FACET_MAX_COMBINATIONS,
    FACET_MAX_DIM,
    LP_CHUNK_ROWS,
    LP_OPTIONS,
)
from zonoconform.errors import (
    DegeneracyError,
    DomainError,
    InfeasibleProgramError,
    UnsupportedDimensionError,
)
from zonoconform.util import as_vector

logger = logging.getLogger(__name__)

# GLOBALS:
FACET_ENUMERATION_LIMIT = 200000
_SUBSET_BATCH = 20000


def _readonly(arr):
    arr.setflags(write=False)
    return arr


def _check_tol(tol):
    if not tol >= 0.0:
        raise DomainError(f"tolerance must be nonnegative, got {tol}")


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")


def _points(points, dim, name="points"):
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"{name} must have {dim} columns, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Zonotope:
    """
    Zonotope <center, generators>.

    Parameters:
        center (np.ndarray): length-n center c.
        generators (np.ndarray): n x p matrix, one generator per column. p = 0 is a singleton.
    """
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        generators = np.array(self.generators, dtype=float)
        if generators.size == 0:
            generators = generators.reshape(center.shape[0], 0)
        if generators.ndim != 2 or generators.shape[0] != center.shape[0]:
            raise DomainError(
                f"generator matrix of shape {generators.shape} does not match center of length {center.shape[0]}"
            )
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(generators))):
            raise DomainError("zonotope entries must be finite")
        object.__setattr__(self, "center", _readonly(center))
        object.__setattr__(self, "generators", _readonly(generators))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def num_generators(self):
        return self.generators.shape[1]

    @cached_property
    def _operator(self):
        return _GaugeOperator(self.generators, self.center)

    def sample(self, n, rng=None):
        """
        Draw points c + G xi with xi uniform on [-1, 1]^p.

        The points cover the set but are not uniform over its volume.

        Parameters:
            n (int): number of points.
            rng (np.random.Generator | int | None): generator or seed.

        Returns:
            np.ndarray: n x dim sample.
        """
        rng = np.random.default_rng(rng)
        xi = rng.uniform(-1.0, 1.0, size=(n, self.num_generators))
        return self.center + xi @ self.generators.T

    def vertices_2d(self):
        """Vertices of a 2D zonotope in counterclockwise order."""
        if self.dim != 2:
            raise DomainError(f"vertices_2d needs a 2D zonotope, got dimension {self.dim}")
        gens = self.generators[:, np.any(self.generators != 0.0, axis=0)].T.copy()
        if gens.shape[0] == 0:
            return self.center.reshape(1, 2).copy()
        flip = (gens[:, 1] < 0) | ((gens[:, 1] == 0) & (gens[:, 0] < 0))
        gens[flip] *= -1.0
        gens = gens[np.argsort(np.arctan2(gens[:, 1], gens[:, 0]), kind="stable")]
        start = self.center - gens.sum(axis=0)
        steps = np.vstack([2.0 * gens, -2.0 * gens])
        return start + np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)[:-1]])

    def to_dict(self):
        return {
            "center": self.center.tolist(),
            "generators": self.generators.T.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        center = np.asarray(payload["center"], dtype=float)
        columns = payload.get("generators") or []
        if len(columns) == 0:
            generators = np.zeros((center.shape[0], 0))
        else:
            generators = np.asarray(columns, dtype=float).T
        return cls(center, generators)


@dataclass(frozen=True, eq=False)
class Hyperrectangle:
    """Axis-aligned box with center c and nonnegative radius r."""
    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        radius = np.array(self.radius, dtype=float).reshape(-1)
        if center.shape != radius.shape:
            raise DomainError(f"box center length {center.shape[0]} != radius length {radius.shape[0]}")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(radius))):
            raise DomainError("box entries must be finite")
        if np.any(radius < 0):
            raise DomainError("box radius must be nonnegative")
        object.__setattr__(self, "center", _readonly(center))
        object.__setattr__(self, "radius", _readonly(radius))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def lower(self):
        return self.center - self.radius

    @property
    def upper(self):
        return self.center + self.radius

    def contains(self, points, tol=DEFAULT_TOL):
        _check_tol(tol)
        X = _points(points, self.dim)
        scale = max(np.max(self.radius, initial=0.0), np.max(np.abs(self.center), initial=0.0)) or 1.0
        slack = np.abs(X - self.center) - self.radius
        return np.max(slack, axis=1, initial=-np.inf) <= tol * scale

    def to_dict(self):
        return {"center": self.center.tolist(), "radius": self.radius.tolist()}

    @classmethod
    def from_dict(cls, payload):
        return cls(np.asarray(payload["center"], dtype=float), np.asarray(payload["radius"], dtype=float))


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """The half-space {x | normal . x <= offset}."""
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.array(self.normal, dtype=float).reshape(-1)
        if not np.any(normal != 0.0):
            raise DomainError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", _readonly(normal))
        object.__setattr__(self, "offset", float(self.offset))

    def contains(self, points, tol=DEFAULT_TOL):
        X = _points(points, self.normal.shape[0])
        scale = max(abs(self.offset), 1.0)
        return X @ self.normal - self.offset <= tol * scale


@dataclass(frozen=True, eq=False)
class NestedZonotopeFamily:
    """
    The family Z^alpha = <c(1-alpha) + p alpha, G(1-alpha)>, alpha in [0, 1].

    Z^0 is the base zonotope and Z^1 the singleton {core}. The sets shrink
    monotonically toward the core, which belongs to all of them.
    """
    base: Zonotope
    core: np.ndarray

    def __post_init__(self):
        core = as_vector(self.core, name="core", length=self.base.dim).copy()
        if not member(self.base, core, DEFAULT_TOL):
            raise DomainError("core point is not a member of the base zonotope")
        object.__setattr__(self, "core", _readonly(core))

    @property
    def dim(self):
        return self.base.dim

    def at(self, alpha):
        return nested_at(self, alpha)

    def contains(self, alphas, points, tol=DEFAULT_TOL):
        """
        Vectorised membership x_i in Z^{alpha_i}.

        Parameters:
            alphas (float | np.ndarray): one level, or one level per row.
            points (np.ndarray): N x dim rows.
            tol (float): membership tolerance.

        Returns:
            np.ndarray: boolean vector of length N.
        """
        _check_tol(tol)
        X = _points(points, self.dim)
        alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (X.shape[0],))
        if np.any((alphas < 0.0) | (alphas > 1.0)):
            raise DomainError("alpha must lie in [0, 1]")
        operator = self.base._operator
        result = np.empty(X.shape[0], dtype=bool)
        at_core = alphas >= 1.0
        if np.any(at_core):
            gap = np.abs(X[at_core] - self.core)
            result[at_core] = np.max(gap, axis=1, initial=0.0) <= tol * operator.scale
        rest = ~at_core
        if np.any(rest):
            level = alphas[rest, None]
            shift = self.core - self.base.center
            mapped = (X[rest] - self.base.center - level * shift) / (1.0 - level)
            result[rest] = operator.gauge(mapped, tol) <= 1.0 + tol
        return result

    def to_dict(self):
        return {"base": self.base.to_dict(), "core": self.core.tolist()}

    @classmethod
    def from_dict(cls, payload):
        return cls(Zonotope.from_dict(payload["base"]), np.asarray(payload["core"], dtype=float))


class _GaugeOperator:
    """
    Evaluates min ||xi||_inf subject to G xi = d for batches of offsets d.

    Zero generator columns are ignored. Offsets leaving the span of G get an
    infinite gauge. Inside the span there are three paths: a direct solve
    when the generators are linearly independent, the facet formula
    max |a.y| / sum_j |a.g_j| in low dimension, and a block linear program
    otherwise.
    """

    def __init__(self, generators, center):
        active = generators[:, np.any(generators != 0.0, axis=0)]
        self.dim = generators.shape[0]
        self.scale = max(np.max(np.abs(generators), initial=0.0), np.max(np.abs(center), initial=0.0)) or 1.0
        self.n_active = active.shape[1]
        self.mode = "singleton"
        if self.n_active == 0:
            return
        left, sing, right = np.linalg.svd(active, full_matrices=False)
        rank = int(np.sum(sing > sing[0] * max(active.shape) * np.finfo(float).eps))
        self.rank = rank
        self.basis = left[:, :rank]
        self.full_span = rank == self.dim
        self.reduced = self.basis.T @ active
        if rank == self.n_active:
            self.mode = "solve"
            self.coefficients = right[:rank] / sing[:rank, None]
        elif rank == 1:
            self.mode = "facet"
            self.normals = np.ones((1, 1))
        elif rank <= FACET_MAX_DIM and math.comb(self.n_active, rank - 1) <= FACET_MAX_COMBINATIONS:
            self.mode = "facet"
            self.normals = _subset_normals(self.reduced)
        else:
            self.mode = "lp"
        if self.mode == "facet":
            self.support = np.abs(self.normals @ self.reduced).sum(axis=1)
        logger.debug("gauge operator: dim=%d generators=%d rank=%d mode=%s",
                     self.dim, self.n_active, rank, self.mode)

    def gauge(self, offsets, tol):
        atol = tol * self.scale
        if self.mode == "singleton":
            return np.where(np.max(np.abs(offsets), axis=1, initial=0.0) <= atol, 0.0, np.inf)
        coords = offsets @ self.basis
        if self.full_span:
            off_span = np.zeros(offsets.shape[0], dtype=bool)
        else:
            residual = offsets - coords @ self.basis.T
            off_span = np.max(np.abs(residual), axis=1) > atol
        if self.mode == "solve":
            values = np.max(np.abs(coords @ self.coefficients), axis=1)
        elif self.mode == "facet":
            values = np.max(np.abs(coords @ self.normals.T) / self.support, axis=1)
        else:
            values = np.zeros(offsets.shape[0])
            inside = np.flatnonzero(~off_span)
            for start in range(0, inside.shape[0], LP_CHUNK_ROWS):
                rows = inside[start:start + LP_CHUNK_ROWS]
                values[rows] = _min_inf_norm(self.reduced, coords[rows])
        values[off_span] = np.inf
        return values


def _min_inf_norm(matrix, targets):
    """
    Solve min ||xi_b||_inf s.t. matrix @ xi_b = y_b for a block of targets.

    The blocks are independent, so one program minimising sum_b t_b with
    -t_b <= xi_b <= t_b returns every per-row optimum at once.
    """
    r, q = matrix.shape
    b = targets.shape[0]
    eye = sparse.identity(b, format="csr")
    equality = sparse.hstack([sparse.kron(eye, sparse.csr_matrix(matrix)), sparse.csr_matrix((b * r, b))])
    spread = sparse.kron(eye, sparse.csr_matrix(np.ones((q, 1))))
    ident = sparse.identity(b * q, format="csr")
    upper = sparse.vstack([sparse.hstack([ident, -spread]), sparse.hstack([-ident, -spread])])
    cost = np.concatenate([np.zeros(b * q), np.ones(b)])
    bounds = [(None, None)] * (b * q) + [(0.0, None)] * b
    result = linprog(
        cost,
        A_ub=upper.tocsr(),
        b_ub=np.zeros(2 * b * q),
        A_eq=equality.tocsr(),
        b_eq=targets.reshape(-1),
        bounds=bounds,
        method="highs",
        options=LP_OPTIONS,
    )
    if result.status != 0:
        raise InfeasibleProgramError(f"membership program failed: {result.message}")
    return result.x[b * q:]


def _canonical_directions(rows):
    """Normalise rows to unit length with the first nonzero entry positive."""
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    lead = np.argmax(np.abs(rows) > 1e-12, axis=1)
    signs = np.sign(rows[np.arange(rows.shape[0]), lead])
    signs[signs == 0] = 1.0
    return rows * signs[:, None]


def _unique_rows(rows, decimals=9):
    keys = np.round(rows, decimals) + 0.0
    _, first = np.unique(keys, axis=0, return_index=True)
    return rows[np.sort(first)]


def _subset_normals(matrix):
    """Unit normals of the hyperplanes spanned by (r-1)-subsets of the columns of an r x q matrix."""
    r, q = matrix.shape
    combos = itertools.combinations(range(q), r - 1)
    found = []
    while True:
        batch = np.array(list(itertools.islice(combos, _SUBSET_BATCH)), dtype=int)
        if batch.size == 0:
            break
        stacks = matrix[:, batch].transpose(1, 2, 0)
        _, sing, right = np.linalg.svd(stacks)
        independent = sing[:, -1] > 1e-10 * sing[:, 0]
        if np.any(independent):
            found.append(_canonical_directions(right[independent, -1, :]))
    if not found:
        raise DegeneracyError("generators do not span a full-dimensional set")
    return _unique_rows(np.vstack(found))


def member(z, x, tol=DEFAULT_TOL):
    """
    Test x in z at tolerance tol.

    Parameters:
        z (Zonotope): the set.
        x (np.ndarray): point of dimension z.dim.
        tol (float): relative tolerance, the gauge may reach 1 + tol.

    Returns:
        bool: True when some xi with ||xi||_inf <= 1 + tol gives c + G xi = x.
    """
    x = as_vector(x, name="point", length=z.dim)
    return bool(members(z, x.reshape(1, -1), tol)[0])


def members(z, points, tol=DEFAULT_TOL):
    """Vectorised member over the rows of points."""
    return gauge(z, points, tol) <= 1.0 + tol


def gauge(z, points, tol=DEFAULT_TOL):
    """
    Minimal ||xi||_inf representing each row of points (inf off the affine hull).

    Parameters:
        z (Zonotope): the set.
        points (np.ndarray): N x dim rows.
        tol (float): tolerance for the affine-hull test.

    Returns:
        np.ndarray: gauge values of length N.
    """
    _check_tol(tol)
    X = _points(points, z.dim)
    return z._operator.gauge(X - z.center, tol)


def nested_at(family, alpha):
    """
    Member alpha of a nested family.

    Parameters:
        family (NestedZonotopeFamily): the family.
        alpha (float): level in [0, 1].

    Returns:
        Zonotope: <c(1-alpha) + p alpha, G(1-alpha)>.
    """
    _check_alpha(alpha)
    base = family.base
    return Zonotope(base.center * (1.0 - alpha) + family.core * alpha, base.generators * (1.0 - alpha))


def nested_box_at(box, core, alpha):
    """
    Member alpha of the nested hyperrectangle family around core.

    Parameters:
        box (Hyperrectangle): the alpha = 0 box.
        core (np.ndarray): point of the box the family contracts to.
        alpha (float): level in [0, 1].

    Returns:
        Hyperrectangle: center (1-alpha)c + alpha p, radius (1-alpha)r.
    """
    _check_alpha(alpha)
    core = as_vector(core, name="core", length=box.dim)
    if not box.contains(core)[0]:
        raise DomainError("core point is not a member of the box")
    return Hyperrectangle((1.0 - alpha) * box.center + alpha * core, (1.0 - alpha) * box.radius)


def linear_map(M, z):
    """Exact image <Mc, MG> of z under the matrix M."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != z.dim:
        raise DomainError(f"matrix of shape {M.shape} cannot map a {z.dim}-dimensional zonotope")
    return Zonotope(M @ z.center, M @ z.generators)


def translate(z, v):
    v = as_vector(v, name="translation", length=z.dim)
    return Zonotope(z.center + v, z.generators)


def cartesian_product(a, b):
    """
    Product a x b with block-diagonal generators, so both coefficient
    vectors stay independent.
    """
    top = np.hstack([a.generators, np.zeros((a.dim, b.num_generators))])
    bottom = np.hstack([np.zeros((b.dim, a.num_generators)), b.generators])
    return Zonotope(np.concatenate([a.center, b.center]), np.vstack([top, bottom]))


def from_hyperrectangle(box):
    return Zonotope(box.center, np.diag(box.radius))


def interval_hull(points):
    """
    Smallest axis-aligned box containing every row.

    Parameters:
        points (np.ndarray): n x d sample, n >= 1.

    Returns:
        Hyperrectangle: center (min+max)/2, radius (max-min)/2.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError(f"interval hull needs a nonempty n x d matrix, got shape {X.shape}")
    low = X.min(axis=0)
    high = X.max(axis=0)
    return Hyperrectangle((low + high) / 2.0, (high - low) / 2.0)


def box_member(box, x, tol=DEFAULT_TOL):
    x = as_vector(x, name="point", length=box.dim)
    return bool(box.contains(x, tol)[0])


def bounds(z):
    """Per-axis lower and upper limits c -/+ sum_j |g_j|."""
    spread = np.abs(z.generators).sum(axis=1)
    return z.center - spread, z.center + spread


def facet_normals(z):
    """
    Unsigned unit facet directions of a full-dimensional zonotope.

    Square generator matrices give the rows of G^-1. Otherwise each
    (n-1)-subset of generators spanning a hyperplane contributes its normal,
    which is only supported up to dimension 10.

    Parameters:
        z (Zonotope): full-dimensional zonotope.

    Returns:
        np.ndarray: m x n matrix of unit normals, first nonzero entry positive.
    """
    active = z.generators[:, np.any(z.generators != 0.0, axis=0)]
    n = z.dim
    if n == 0 or active.shape[1] < n or np.linalg.matrix_rank(active) < n:
        raise DegeneracyError("zonotope is not full-dimensional; facet normals are undefined")
    if active.shape[1] == n:
        normals = np.linalg.inv(active)
    elif n == 1:
        normals = np.ones((1, 1))
    elif n > FACET_MAX_DIM:
        raise UnsupportedDimensionError(
            f"facet enumeration for non-square generators is limited to {FACET_MAX_DIM} dimensions, got {n}"
        )
    elif math.comb(active.shape[1], n - 1) > FACET_ENUMERATION_LIMIT:
        raise UnsupportedDimensionError(
            f"{active.shape[1]} generators in dimension {n} give too many candidate facets"
        )
    else:
        normals = _subset_normals(active)
    return _unique_rows(_canonical_directions(normals))


def zonotope_halfspaces(z):
    """Half-space representation {a.x <= a.c + sum_j |a.g_j|} over both signs of every facet normal."""
    normals = facet_normals(z)
    support = np.abs(normals @ z.generators).sum(axis=1)
    level = normals @ z.center
    spaces = []
    for a, h, m in zip(normals, support, level):
        spaces.append(HalfSpace(a, m + h))
        spaces.append(HalfSpace(-a, -m + h))
    return spaces


def projected_area_2d(z, dims):
    """
    Area of the projection of z onto two coordinates.

    Parameters:
        z (Zonotope): the set.
        dims (tuple): coordinate pair (i, j), i != j.

    Returns:
        float: 4 * sum_{a<b} |det[g_a, g_b]| over the projected generators.
    """
    i, j = (int(d) for d in dims)
    if i == j or not (0 <= i < z.dim and 0 <= j < z.dim):
        raise DomainError(f"invalid projection dims {dims} for dimension {z.dim}")
    plane = z.generators[[i, j], :]
    if plane.shape[1] < 2:
        return 0.0
    cross = np.outer(plane[0], plane[1]) - np.outer(plane[1], plane[0])
    return float(2.0 * np.abs(cross).sum())
