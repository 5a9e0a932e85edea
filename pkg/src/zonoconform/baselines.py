"""
Reference conformal methods: the supremum (modulation) band and the
elliptical set.

Both use the split-conformal quantile index ceil((1 - eps)(n + 1)),
clamped to n, on ascending scores.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from zonoconform.config import ELLIPTICAL_MAX_DIM, SIGMA_FLOOR
from zonoconform.depth import checked_covariance
from zonoconform.errors import DomainError, UnsupportedDimensionError
from zonoconform.util import as_matrix, as_vector

logger = logging.getLogger(__name__)


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")


def conformal_quantile(sorted_scores, eps):
    """
    Score at index ceil((1 - eps)(n + 1)), clamped to [1, n].

    Parameters:
        sorted_scores (np.ndarray): ascending calibration scores.
        eps (float): miscoverage in (0, 1).

    Returns:
        float: the threshold q(eps).
    """
    _check_eps(eps)
    n = sorted_scores.shape[0]
    index = math.ceil(round((1.0 - eps) * (n + 1), 9))
    index = min(max(index, 1), n)
    return float(sorted_scores[index - 1])


@dataclass(frozen=True)
class IntervalBand:
    """Per-coordinate band [lower, upper]."""
    lower: np.ndarray
    upper: np.ndarray
    eps: float

    @property
    def widths(self):
        return self.upper - self.lower

    def contains(self, truths):
        F = np.atleast_2d(np.asarray(truths, dtype=float))
        return np.all((F >= self.lower) & (F <= self.upper), axis=1)


@dataclass(frozen=True, eq=False)
class ModulationModel:
    """
    Supremum-score model s(e) = max_t |e(t)| / sigma(t).

    Parameters:
        sigma_t (np.ndarray): per-coordinate scale, floored to be positive.
        scores (np.ndarray): calibration scores sorted ascending.
    """
    sigma_t: np.ndarray
    scores: np.ndarray

    @property
    def n(self):
        return self.scores.shape[0]

    def quantile(self, eps):
        return conformal_quantile(self.scores, eps)

    def score(self, errors):
        E = np.atleast_2d(np.asarray(errors, dtype=float))
        if E.shape[1] != self.sigma_t.shape[0]:
            raise DomainError(f"errors have {E.shape[1]} columns, model has {self.sigma_t.shape[0]}")
        return np.max(np.abs(E) / self.sigma_t, axis=1)


def modulation_calibrate(errors, sigma_errors=None):
    """
    Calibrate the modulation band.

    Parameters:
        errors (np.ndarray): n x l calibration errors, n >= 2.
        sigma_errors (np.ndarray | None): errors used to estimate sigma(t);
            the calibration errors when omitted.

    Returns:
        ModulationModel: scale and sorted scores.
    """
    E = as_matrix(errors, name="errors")
    if E.shape[0] < 2:
        raise DomainError(f"modulation calibration needs at least 2 rows, got {E.shape[0]}")
    source = E if sigma_errors is None else as_matrix(sigma_errors, name="sigma errors")
    if source.shape[1] != E.shape[1] or source.shape[0] < 2:
        raise DomainError(f"sigma errors must be m x {E.shape[1]} with m >= 2")
    sigma = source.std(axis=0, ddof=1)
    floored = sigma < SIGMA_FLOOR
    if np.any(floored):
        logger.warning("%d coordinates have zero error variance; sigma floored at %g",
                       int(floored.sum()), SIGMA_FLOOR)
        sigma = np.maximum(sigma, SIGMA_FLOOR)
    model = ModulationModel(sigma, np.zeros(0))
    return ModulationModel(sigma, np.sort(model.score(E)))


def modulation_band(model, base_point, eps):
    """Band base_point -/+ q(eps) sigma(t)."""
    base = as_vector(base_point, name="base point", length=model.sigma_t.shape[0])
    q = model.quantile(eps)
    return IntervalBand(base - q * model.sigma_t, base + q * model.sigma_t, eps)


def modulation_contains_rows(model, base_points, truths, eps):
    bases = np.atleast_2d(np.asarray(base_points, dtype=float))
    return model.score(np.atleast_2d(np.asarray(truths, dtype=float)) - bases) <= model.quantile(eps)


def modulation_contains(model, base_point, truth, eps):
    return bool(modulation_contains_rows(model, base_point, truth, eps)[0])


@dataclass(frozen=True, eq=False)
class EllipticalModel:
    """
    Mahalanobis-score model s(e) = sqrt(e^T Sigma^-1 e).

    Parameters:
        sigma_hat (np.ndarray): l_e x l_e error covariance.
        scores (np.ndarray): calibration scores sorted ascending.
    """
    sigma_hat: np.ndarray
    scores: np.ndarray

    @cached_property
    def inv_factor(self):
        return cho_factor(self.sigma_hat, lower=True)

    @property
    def dim(self):
        return self.sigma_hat.shape[0]

    @property
    def n(self):
        return self.scores.shape[0]

    def quantile(self, eps):
        return conformal_quantile(self.scores, eps)

    def score(self, errors):
        E = np.atleast_2d(np.asarray(errors, dtype=float))
        if E.shape[1] != self.dim:
            raise DomainError(f"errors have {E.shape[1]} columns, model has {self.dim}")
        squared = np.sum(E * cho_solve(self.inv_factor, E.T).T, axis=1)
        return np.sqrt(np.maximum(squared, 0.0))


def elliptical_calibrate(errors, covariance_errors=None):
    """
    Calibrate the elliptical set on errors of dimension at most 32.

    Parameters:
        errors (np.ndarray): n x l_e calibration errors, n > l_e.
        covariance_errors (np.ndarray | None): errors used for Sigma; the
            calibration errors when omitted.

    Returns:
        EllipticalModel: covariance and sorted scores.
    """
    E = as_matrix(errors, name="errors")
    if E.shape[1] > ELLIPTICAL_MAX_DIM:
        raise UnsupportedDimensionError(
            f"elliptical sets are limited to {ELLIPTICAL_MAX_DIM} dimensions, got {E.shape[1]}; "
            "reduce the errors to SVD coordinates first"
        )
    source = E if covariance_errors is None else as_matrix(covariance_errors, name="covariance errors")
    if source.shape[1] != E.shape[1]:
        raise DomainError(f"covariance errors must have {E.shape[1]} columns")
    covariance = checked_covariance(source, "error covariance")
    model = EllipticalModel(covariance, np.zeros(0))
    return EllipticalModel(covariance, np.sort(model.score(E)))


def elliptical_contains_rows(model, base_points, truths, eps):
    bases = np.atleast_2d(np.asarray(base_points, dtype=float))
    return model.score(np.atleast_2d(np.asarray(truths, dtype=float)) - bases) <= model.quantile(eps)


def elliptical_contains(model, base_point, truth, eps):
    """truth is inside the ellipsoid of radius q(eps) around base_point (inclusive)."""
    return bool(elliptical_contains_rows(model, base_point, truth, eps)[0])


@dataclass(frozen=True, eq=False)
class EllipsoidSet:
    """
    The set {center + A u : u^T Sigma^-1 u <= radius^2} stored by its shape A Sigma A^T.

    Parameters:
        center (np.ndarray): length-l center.
        shape (np.ndarray): l x l positive semidefinite shape matrix.
        radius (float): q(eps).
    """
    center: np.ndarray
    shape: np.ndarray
    radius: float

    @property
    def dim(self):
        return self.center.shape[0]

    def projected_area_2d(self, dims):
        i, j = (int(d) for d in dims)
        if i == j or not (0 <= i < self.dim and 0 <= j < self.dim):
            raise DomainError(f"invalid projection dims {dims} for dimension {self.dim}")
        block = self.shape[np.ix_([i, j], [i, j])]
        det = max(float(np.linalg.det(block)), 0.0)
        return float(np.pi * self.radius ** 2 * np.sqrt(det))


def elliptical_output_set(model, base_point, eps, back_map=None):
    """
    Elliptical set at eps, optionally mapped to output space.

    Parameters:
        model (EllipticalModel): calibrated model.
        base_point (np.ndarray): center in output space.
        eps (float): miscoverage level.
        back_map (np.ndarray | None): l x l_e map from the model coordinates
            to output space (V S restricted to the kept modes).

    Returns:
        EllipsoidSet: the set.
    """
    shape = model.sigma_hat
    if back_map is not None:
        A = np.asarray(back_map, dtype=float)
        if A.shape[1] != model.dim:
            raise DomainError(f"back map has {A.shape[1]} columns, model has {model.dim}")
        shape = A @ shape @ A.T
    base = as_vector(base_point, name="base point", length=shape.shape[0])
    return EllipsoidSet(base, shape, model.quantile(eps))
