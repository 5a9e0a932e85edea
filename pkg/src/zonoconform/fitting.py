"""Fitting enclosing zonotopes and core points to data."""
import logging
from dataclasses import dataclass

import numpy as np

from zonoconform.config import DEFAULT_TOL
from zonoconform.depth import DepthResult, euclidean_depth, getDepthByType
from zonoconform.errors import DegeneracyError, DomainError, SingularCovarianceError, UnsupportedDimensionError
from zonoconform.polytope import convex_hull, overapprox_zonotope, vrep_to_hrep
from zonoconform.sets import (
    NestedZonotopeFamily,
    Zonotope,
    facet_normals,
    interval_hull,
    linear_map,
    translate,
)
from zonoconform.util import as_matrix

logger = logging.getLogger(__name__)

FIT_METHODS = ("rotated_box", "convex_hull")
DEPTH_METHODS = ("euclidean", "mahalanobis", "tukey_approx")


@dataclass(frozen=True)
class FitConfig:
    """
    Options for fitting a nested family.

    Parameters:
        method (str): "rotated_box" or "convex_hull".
        depth_method (str): "euclidean", "mahalanobis" or "tukey_approx".
        inflation (float): relative margin added to the generators, >= 0.
        tol (float): membership tolerance.
    """
    method: str = "rotated_box"
    depth_method: str = "mahalanobis"
    inflation: float = 0.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.method not in FIT_METHODS:
            raise DomainError(f"unknown fit method {self.method!r}; choose from {', '.join(FIT_METHODS)}")
        if self.depth_method not in DEPTH_METHODS:
            raise DomainError(
                f"unknown depth method {self.depth_method!r}; choose from {', '.join(DEPTH_METHODS)}"
            )
        if not self.inflation >= 0.0:
            raise DomainError(f"inflation must be nonnegative, got {self.inflation}")
        if not self.tol >= 0.0:
            raise DomainError(f"tolerance must be nonnegative, got {self.tol}")


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    A fitted nested family.

    Parameters:
        family (NestedZonotopeFamily): base zonotope and core.
        basis (tuple | None): (V, sigma) of the centred data for rotated_box fits.
        depth (DepthResult | None): depth diagnostics of the core selection.
        config (FitConfig | None): options used.
    """
    family: NestedZonotopeFamily
    basis: tuple = None
    depth: DepthResult = None
    config: FitConfig = None

    def to_dict(self):
        payload = {"family": self.family.to_dict(), "basis": None, "depth": None, "config": None}
        if self.basis is not None:
            V, sigma = self.basis
            payload["basis"] = {"V": np.asarray(V).tolist(), "sigma": np.asarray(sigma).tolist()}
        if self.depth is not None:
            payload["depth"] = {
                "argmax_index": self.depth.argmax_index,
                "core_depth": self.depth.core_depth,
            }
        if self.config is not None:
            payload["config"] = {
                "method": self.config.method,
                "depth_method": self.config.depth_method,
                "inflation": self.config.inflation,
                "tol": self.config.tol,
            }
        return payload

    @classmethod
    def from_dict(cls, payload):
        basis = None
        if payload.get("basis"):
            basis = (np.asarray(payload["basis"]["V"], dtype=float),
                     np.asarray(payload["basis"]["sigma"], dtype=float))
        config = FitConfig(**payload["config"]) if payload.get("config") else None
        return cls(NestedZonotopeFamily.from_dict(payload["family"]), basis, None, config)


def _oriented(V):
    """Flip columns so the first nonzero entry of each is positive."""
    V = V.copy()
    for j in range(V.shape[1]):
        column = V[:, j]
        lead = np.flatnonzero(np.abs(column) > 1e-12)
        if lead.size and column[lead[0]] < 0:
            V[:, j] = -column
    return V


def _select_core(X, base, cfg, fallback_directions=None):
    """
    Deepest sample under the configured depth.

    Mahalanobis depth on a singular covariance (or n <= d) and Tukey depth
    on a rank-deficient base fall back to euclidean depth with a warning.
    """
    try:
        if cfg.depth_method == "tukey_approx":
            try:
                directions = facet_normals(base)
            except UnsupportedDimensionError:
                if fallback_directions is None:
                    raise
                logger.debug("facet enumeration too large; using hull normals for Tukey depth")
                directions = fallback_directions
            return getDepthByType("tukey_approx")(X, directions)
        return getDepthByType(cfg.depth_method)(X)
    except (SingularCovarianceError, DegeneracyError, DomainError) as err:
        if cfg.depth_method == "euclidean":
            raise
        logger.warning("%s depth unavailable (%s); falling back to euclidean depth", cfg.depth_method, err)
        return euclidean_depth(X)


def fit_rotated_box(data, cfg=None):
    """
    Enclose data in a box aligned with its principal axes.

    The data are centred, decomposed as X - mu = U S V^T and expressed in
    the coordinates u = S^-1 V^T (x - mu). The interval hull <c_U, diag(r_U)>
    of those coordinates maps back to <mu + V S c_U, V S diag(r_U)>. Zero
    singular values give zero generators, so G stays square.

    Parameters:
        data (np.ndarray): n x d sample, n >= 2.
        cfg (FitConfig): fit options.

    Returns:
        FitResult: family and basis (V, sigma).
    """
    cfg = cfg or FitConfig()
    X = as_matrix(data)
    n, d = X.shape
    if n < 2:
        raise DomainError(f"rotated box fitting needs at least 2 rows, got {n}")
    mean = X.mean(axis=0)
    centred = X - mean
    _, sing, right = np.linalg.svd(centred, full_matrices=True)
    V = _oriented(right.T)
    sigma = np.zeros(d)
    sigma[:sing.shape[0]] = sing
    nonzero = sigma > sigma.max() * max(n, d) * np.finfo(float).eps
    sigma[~nonzero] = 0.0

    coords = centred @ V
    coords[:, nonzero] /= sigma[nonzero]
    coords[:, ~nonzero] = 0.0
    box = interval_hull(coords)
    local = Zonotope(box.center, np.diag(box.radius * (1.0 + cfg.inflation)))
    base = translate(linear_map(V * sigma, local), mean)
    logger.info("rotated box fit: n=%d d=%d, %d nonzero singular values", n, d, int(nonzero.sum()))

    depth = _select_core(X, base, cfg)
    family = NestedZonotopeFamily(base, depth.core)
    return FitResult(family, (V, sigma), depth, cfg)


def fit_convex_hull(data, cfg=None):
    """
    Enclose data in a zonotope overapproximating its convex hull.

    Parameters:
        data (np.ndarray): n x d sample, d <= 6, full-dimensional.
        cfg (FitConfig): fit options.

    Returns:
        FitResult: family without a basis.
    """
    cfg = cfg or FitConfig(method="convex_hull")
    X = as_matrix(data)
    hull = convex_hull(X)
    normals = vrep_to_hrep(hull).normals
    zonotope = overapprox_zonotope(hull, normals)
    base = Zonotope(zonotope.center, zonotope.generators * (1.0 + cfg.inflation))
    logger.info("convex hull fit: n=%d d=%d, %d hull vertices, %d generators",
                X.shape[0], X.shape[1], hull.vertices.shape[0], base.num_generators)
    depth = _select_core(X, base, cfg, fallback_directions=normals)
    family = NestedZonotopeFamily(base, depth.core)
    return FitResult(family, None, depth, cfg)


def getFitterByMethod(method: str):
    """
    Return the fitting function for a method name.

    Parameters:
        method (str): "rotated_box" or "convex_hull".
    """
    if method == "rotated_box":
        return fit_rotated_box
    elif method == "convex_hull":
        return fit_convex_hull
    raise DomainError(f"unknown fit method {method!r}")


def fit(data, cfg=None):
    cfg = cfg or FitConfig()
    return getFitterByMethod(cfg.method)(data, cfg)
