"""Data depth measures used to pick the core point of a nested family."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from zonoconform.config import COVARIANCE_COND_LIMIT, TUKEY_EXACT_MAX_ROWS
from zonoconform.errors import DomainError, SingularCovarianceError, UnsupportedDimensionError
from zonoconform.util import as_matrix, as_vector

logger = logging.getLogger(__name__)

# GLOBALS:
HALFPLANE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DepthResult:
    """
    Depth of every sample and the deepest one.

    Parameters:
        depths (np.ndarray): depth per row.
        argmax_index (int): first row of maximal depth.
        core (np.ndarray): that row.
    """
    depths: np.ndarray
    argmax_index: int
    core: np.ndarray

    @property
    def core_depth(self):
        return float(self.depths[self.argmax_index])


def _result(data, depths):
    # np.argmax returns the first maximum, so ties go to the lowest index
    index = int(np.argmax(depths))
    return DepthResult(depths, index, data[index].copy())


def euclidean_depth(data):
    """
    Depth (1 + ||x_i - mean||)^-1 of every row.

    Parameters:
        data (np.ndarray): n x d sample, n >= 1.

    Returns:
        DepthResult: depths in (0, 1].
    """
    X = as_matrix(data)
    distance = np.linalg.norm(X - X.mean(axis=0), axis=1)
    return _result(X, 1.0 / (1.0 + distance))


def mahalanobis_distances(X, covariance, center):
    """Mahalanobis distance of every row using a Cholesky solve."""
    factor = cho_factor(covariance, lower=True)
    offsets = X - center
    squared = np.sum(offsets * cho_solve(factor, offsets.T).T, axis=1)
    return np.sqrt(np.maximum(squared, 0.0))


def checked_covariance(X, what="sample covariance"):
    """
    Sample covariance of the rows of X, rejected when nearly singular.

    Parameters:
        X (np.ndarray): n x d sample with n > d.
        what (str): name used in messages.

    Returns:
        np.ndarray: d x d covariance.
    """
    n, d = X.shape
    if n <= d:
        raise DomainError(f"{what} needs more rows than columns, got n={n}, d={d}")
    covariance = np.atleast_2d(np.cov(X, rowvar=False))
    condition = np.linalg.cond(covariance)
    if not np.isfinite(condition) or condition >= COVARIANCE_COND_LIMIT:
        raise SingularCovarianceError(
            f"{what} is singular (condition number {condition:.3g}); use euclidean depth instead"
        )
    return covariance


def mahalanobis_depth(data):
    """
    Depth (1 + d_M(x_i))^-1 with d_M the Mahalanobis distance to the sample mean.

    Parameters:
        data (np.ndarray): n x d sample, n > d, well-conditioned covariance.

    Returns:
        DepthResult: depths in (0, 1].
    """
    X = as_matrix(data)
    covariance = checked_covariance(X)
    distance = mahalanobis_distances(X, covariance, X.mean(axis=0))
    return _result(X, 1.0 / (1.0 + distance))


def _halfspace_fraction(offsets, directions):
    """min over v of #{j: v.(X_j - x) >= 0} / n, for the given v and their negatives."""
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    projected = offsets @ directions.T
    # points on the boundary line belong to the closed half-plane
    slack = HALFPLANE_TOL * max(np.max(np.abs(offsets), initial=0.0), 1.0)
    above = np.sum(projected >= -slack, axis=0)
    below = np.sum(projected <= slack, axis=0)
    return min(above.min(), below.min()) / offsets.shape[0]


def tukey_candidate_directions(data, x):
    """
    Directions at which the exact 2D half-space count can change, plus one
    direction inside every arc between them.

    Parameters:
        data (np.ndarray): n x 2 sample.
        x (np.ndarray): query point.

    Returns:
        np.ndarray: K x 2 unit directions.
    """
    X = as_matrix(data)
    if X.shape[1] != 2:
        raise UnsupportedDimensionError(f"exact Tukey depth is only available in 2D, got d={X.shape[1]}")
    x = as_vector(x, name="point", length=2)
    offsets = X - x
    offsets = offsets[np.any(offsets != 0.0, axis=1)]
    if offsets.shape[0] == 0:
        return np.array([[1.0, 0.0], [-1.0, 0.0]])
    angles = np.arctan2(offsets[:, 1], offsets[:, 0])
    critical = np.mod(np.concatenate([angles + np.pi / 2.0, angles - np.pi / 2.0]), 2.0 * np.pi)
    critical = np.unique(critical)
    following = np.append(critical[1:], critical[0] + 2.0 * np.pi)
    arcs = (critical + following) / 2.0
    theta = np.concatenate([critical, arcs])
    return np.column_stack([np.cos(theta), np.sin(theta)])


def tukey_depth_exact(data, x):
    """
    Exact half-space depth of x in a 2D sample.

    The count #{j : v.(X_j - x) >= 0} is piecewise constant in the angle of
    v, so checking every breakpoint and one angle per arc finds the minimum.

    Parameters:
        data (np.ndarray): n x 2 sample, n <= 2000.
        x (np.ndarray): query point.

    Returns:
        float: depth in [0, 1].
    """
    X = as_matrix(data)
    if X.shape[1] != 2:
        raise UnsupportedDimensionError(f"exact Tukey depth is only available in 2D, got d={X.shape[1]}")
    if X.shape[0] > TUKEY_EXACT_MAX_ROWS:
        raise DomainError(f"exact Tukey depth is limited to {TUKEY_EXACT_MAX_ROWS} rows, got {X.shape[0]}")
    x = as_vector(x, name="point", length=2)
    directions = tukey_candidate_directions(X, x)
    return float(_halfspace_fraction(X - x, directions))


def tukey_depth_approx(data, x, directions):
    """
    Half-space depth restricted to a direction set, each direction used with both signs.

    Parameters:
        data (np.ndarray): n x d sample.
        x (np.ndarray): query point.
        directions (np.ndarray): K x d nonempty direction set.

    Returns:
        float: depth in [0, 1], never below the exact depth.
    """
    X = as_matrix(data)
    x = as_vector(x, name="point", length=X.shape[1])
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    if D.size == 0:
        raise DomainError("approximate Tukey depth needs at least one direction")
    if D.shape[1] != X.shape[1]:
        raise DomainError(f"directions have dimension {D.shape[1]}, data has {X.shape[1]}")
    if np.any(np.linalg.norm(D, axis=1) == 0.0):
        raise DomainError("directions must be nonzero")
    return float(_halfspace_fraction(X - x, D))


def tukey_depth_all(data, directions):
    """
    Approximate Tukey depth of every row of the sample.

    Parameters:
        data (np.ndarray): n x d sample.
        directions (np.ndarray): K x d direction set.

    Returns:
        DepthResult: depths in [0, 1].
    """
    X = as_matrix(data)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    if D.size == 0:
        raise DomainError("approximate Tukey depth needs at least one direction")
    if D.shape[1] != X.shape[1]:
        raise DomainError(f"directions have dimension {D.shape[1]}, data has {X.shape[1]}")
    n = X.shape[0]
    depths = np.full(n, np.inf)
    for v in D:
        projected = X @ v
        ordered = np.sort(projected)
        at_or_above = n - np.searchsorted(ordered, projected, side="left")
        at_or_below = np.searchsorted(ordered, projected, side="right")
        depths = np.minimum(depths, np.minimum(at_or_above, at_or_below) / n)
    return _result(X, depths)


def getDepthByType(depthType: str):
    """
    Return the depth function for a depth method name.

    Parameters:
        depthType (str): "euclidean", "mahalanobis" or "tukey_approx".
    """
    if depthType == "euclidean":
        return euclidean_depth
    elif depthType == "mahalanobis":
        return mahalanobis_depth
    elif depthType == "tukey_approx":
        return tukey_depth_all
    raise DomainError(f"unknown depth method {depthType!r}")
