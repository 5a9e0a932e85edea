"""
Conformal prediction sets for function-valued outputs.

Errors e = F - f(X) are reduced with an SVD e = U S V^T. The leading k modes
carry a calibrated nested family, the remaining r - k modes are bounded by a
box E, and a prediction set is f(x) + V S (Z^alpha x E).
"""
import logging
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from zonoconform.calibration import (
    BELOW_GRID,
    CalibratedFamily,
    calibrate,
    level_alpha,
    level_set,
)
from zonoconform.config import DEFAULT_TOL, DEFAULT_TRUNC_INFLATION, DEFAULT_VARIANCE_FRACTION
from zonoconform.errors import DegenerateErrorsError, DomainError
from zonoconform.fitting import FitConfig, FitResult, fit
from zonoconform.sets import (
    Hyperrectangle,
    Zonotope,
    bounds,
    cartesian_product,
    from_hyperrectangle,
    interval_hull,
    linear_map,
    member,
    nested_at,
    translate,
)
from zonoconform.util import as_matrix, as_vector, read_json, read_matrix_csv, write_json, write_matrix_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ErrorSVD:
    """
    Truncated SVD basis of an error matrix.

    Parameters:
        V (np.ndarray): l x r right singular vectors.
        sigma (np.ndarray): r singular values, nonincreasing and positive.
        k (int): number of kept modes, 1 <= k <= r.
        variance_fraction (float): energy fraction used to pick k.
    """
    V: np.ndarray
    sigma: np.ndarray
    k: int
    variance_fraction: float

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if V.ndim != 2 or V.shape[1] != sigma.shape[0]:
            raise DomainError(f"V of shape {V.shape} does not match {sigma.shape[0]} singular values")
        if np.any(sigma <= 0.0) or np.any(np.diff(sigma) > 0.0):
            raise DomainError("singular values must be positive and nonincreasing")
        if not 1 <= self.k <= sigma.shape[0]:
            raise DomainError(f"kept rank k={self.k} outside [1, {sigma.shape[0]}]")
        if not 0.0 < self.variance_fraction <= 1.0:
            raise DomainError(f"variance fraction must lie in (0, 1], got {self.variance_fraction}")
        V.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "k", int(self.k))

    @property
    def r(self):
        return self.sigma.shape[0]

    @property
    def output_dim(self):
        return self.V.shape[0]


@dataclass(frozen=True, eq=False)
class FunctionalConformalModel:
    """
    Calibrated model for function-valued errors.

    Parameters:
        svd (ErrorSVD | None): basis; None for a degenerate all-zero model.
        calibrated (CalibratedFamily | None): family on the k kept coordinates.
        trunc_box (Hyperrectangle | None): box E on the r - k truncated coordinates.
        output_dim (int): l.
        trunc_inflation (float): relative margin applied to E.
    """
    svd: ErrorSVD
    calibrated: CalibratedFamily
    trunc_box: Hyperrectangle
    output_dim: int
    trunc_inflation: float = 0.0

    @property
    def degenerate(self):
        return self.svd is None

    @property
    def kept_dim(self):
        return 0 if self.degenerate else self.svd.k

    @property
    def trunc_dim(self):
        return 0 if self.degenerate else self.svd.r - self.svd.k

    @property
    def tol(self):
        return DEFAULT_TOL if self.calibrated is None else self.calibrated.tol

    @cached_property
    def back_map(self):
        """V S, mapping SVD coordinates to output space."""
        return self.svd.V * self.svd.sigma


@dataclass(frozen=True, eq=False)
class FunctionalPredictionSet:
    """
    Prediction sets f(x) + R at several confidence levels.

    Parameters:
        eps_levels (tuple): the requested eps values.
        sets (tuple): one output-space Zonotope per eps.
        base_point (np.ndarray): the prediction f(x).
    """
    eps_levels: tuple
    sets: tuple
    base_point: np.ndarray

    def set_at(self, eps):
        for level, zonotope in zip(self.eps_levels, self.sets):
            if level == eps:
                return zonotope
        raise DomainError(f"eps={eps} is not one of the predicted levels {list(self.eps_levels)}")

    def to_dict(self):
        return {
            "base_point": np.asarray(self.base_point).tolist(),
            "eps": list(self.eps_levels),
            "sets": [z.to_dict() for z in self.sets],
        }


def compute_errors(truths, predictions):
    """
    Row-wise errors F_i - f(X_i).

    Parameters:
        truths (np.ndarray): n x l true outputs.
        predictions (np.ndarray): n x l predicted outputs.

    Returns:
        np.ndarray: n x l errors.
    """
    F = as_matrix(truths, name="truths")
    P = as_matrix(predictions, name="predictions")
    if F.shape != P.shape:
        raise DomainError(f"truths of shape {F.shape} and predictions of shape {P.shape} differ")
    return F - P


def _oriented_columns(V):
    V = V.copy()
    for j in range(V.shape[1]):
        lead = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if lead.size and V[lead[0], j] < 0:
            V[:, j] *= -1.0
    return V


def error_svd(errors, variance_fraction=DEFAULT_VARIANCE_FRACTION):
    """
    SVD of the (uncentred) error matrix with an energy-based truncation rank.

    k is the smallest rank with sum_{i<=k} sigma_i^2 / sum sigma_i^2 >= variance_fraction.
    Numerically zero singular values are dropped, so r is the numerical rank.

    Parameters:
        errors (np.ndarray): n x l errors, n >= 2.
        variance_fraction (float): in (0, 1].

    Returns:
        ErrorSVD: basis, singular values and k.
    """
    E = as_matrix(errors, name="errors")
    if E.shape[0] < 2:
        raise DomainError(f"error SVD needs at least 2 rows, got {E.shape[0]}")
    if not 0.0 < variance_fraction <= 1.0:
        raise DomainError(f"variance fraction must lie in (0, 1], got {variance_fraction}")
    if not np.any(E != 0.0):
        raise DegenerateErrorsError("all errors are zero; prediction sets collapse to the prediction")
    _, sing, right = np.linalg.svd(E, full_matrices=False)
    r = int(np.sum(sing > sing[0] * max(E.shape) * np.finfo(float).eps))
    sing = sing[:r]
    energy = np.cumsum(sing ** 2) / np.sum(sing ** 2)
    k = min(int(np.searchsorted(energy, variance_fraction - 1e-12, side="left")) + 1, r)
    logger.info("error SVD: n=%d l=%d, rank %d, keeping %d modes (%.4f of the energy)",
                E.shape[0], E.shape[1], r, k, energy[k - 1])
    return ErrorSVD(_oriented_columns(right[:r].T), sing, k, variance_fraction)


def project_errors(svd, errors):
    """
    SVD coordinates u = S^-1 V^T e of every error row, split at k.

    Parameters:
        svd (ErrorSVD): basis.
        errors (np.ndarray): n x l errors.

    Returns:
        tuple: (kept n x k, truncated n x (r-k), residual norms ||e - V S u||).
    """
    E = np.atleast_2d(np.asarray(errors, dtype=float))
    if E.shape[1] != svd.output_dim:
        raise DomainError(f"errors have {E.shape[1]} columns, the basis has {svd.output_dim}")
    along = E @ svd.V
    coords = along / svd.sigma
    residual = np.linalg.norm(E - along @ svd.V.T, axis=1)
    return coords[:, :svd.k], coords[:, svd.k:], residual


class FunctionalModelBuilder():
    """
    Staged construction of a FunctionalConformalModel.

    reduce() computes the SVD, fit() fits the family on kept coordinates and
    calibrate() scores calibration errors and bounds the truncated modes.
    calibrate() may be called again with fresh data to recalibrate the same
    basis and family.
    """

    def __init__(self, variance_fraction=DEFAULT_VARIANCE_FRACTION, tol=DEFAULT_TOL):
        self.variance_fraction = variance_fraction
        self.tol = tol
        self.svd = None
        self.fit_result = None
        self.calibrated = None
        self.trunc_box = None
        self.trunc_inflation = DEFAULT_TRUNC_INFLATION
        self.output_dim = None
        self.degenerate = False
        self._training = None

    def reduce(self, training_errors):
        E = as_matrix(training_errors, name="training errors")
        self.output_dim = E.shape[1]
        self._training = E
        try:
            self.svd = error_svd(E, self.variance_fraction)
        except DegenerateErrorsError:
            logger.warning("all training errors are zero; predictions will be singletons")
            self.degenerate = True
        return self

    def fit(self, cfg=None, errors=None):
        """Fit the nested family on kept coordinates of the training errors (or of errors)."""
        if self._training is None:
            raise DomainError("call reduce() before fit()")
        if self.degenerate:
            return self
        source = self._training if errors is None else as_matrix(errors, name="fit errors")
        kept, _, _ = project_errors(self.svd, source)
        cfg = cfg or FitConfig(tol=self.tol)
        self.fit_result = fit(kept, cfg)
        return self

    def calibrate(self, errors, grid=None, trunc_inflation=DEFAULT_TRUNC_INFLATION):
        """
        Score calibration errors and bound their truncated coordinates.

        Parameters:
            errors (np.ndarray): n x l calibration errors.
            grid (AlphaGrid | None): level grid.
            trunc_inflation (float): relative margin on the box E, >= 0.
        """
        if not trunc_inflation >= 0.0:
            raise DomainError(f"truncation inflation must be nonnegative, got {trunc_inflation}")
        E = as_matrix(errors, name="calibration errors")
        if self.output_dim is not None and E.shape[1] != self.output_dim:
            raise DomainError(f"calibration errors have {E.shape[1]} columns, expected {self.output_dim}")
        self.trunc_inflation = trunc_inflation
        if self.degenerate:
            return self
        if self.fit_result is None:
            raise DomainError("call fit() before calibrate()")
        kept, truncated, residual = project_errors(self.svd, E)
        self.calibrated = calibrate(self.fit_result.family, kept, grid, self.tol)
        if truncated.shape[1] > 0:
            hull = interval_hull(truncated)
            self.trunc_box = Hyperrectangle(hull.center, hull.radius * (1.0 + trunc_inflation))
        else:
            self.trunc_box = Hyperrectangle(np.zeros(0), np.zeros(0))
        logger.info("calibrated %d rows: %d kept modes, %d truncated modes, max residual %.3g",
                    E.shape[0], self.svd.k, truncated.shape[1], float(residual.max()))
        return self

    def build(self):
        if self.output_dim is None:
            raise DomainError("call reduce() before build()")
        if self.degenerate:
            return FunctionalConformalModel(None, None, None, self.output_dim, self.trunc_inflation)
        if self.calibrated is None:
            raise DomainError("call calibrate() before build()")
        return FunctionalConformalModel(self.svd, self.calibrated, self.trunc_box,
                                        self.output_dim, self.trunc_inflation)


def build_model(errors, cfg=None, variance_fraction=DEFAULT_VARIANCE_FRACTION, grid=None,
                training_errors=None, trunc_inflation=DEFAULT_TRUNC_INFLATION, tol=DEFAULT_TOL):
    """
    SVD, fit and calibrate in one call.

    Parameters:
        errors (np.ndarray): n x l calibration errors, n >= 2.
        cfg (FitConfig | None): fit options for the kept coordinates.
        variance_fraction (float): energy fraction for k.
        grid (AlphaGrid | None): level grid.
        training_errors (np.ndarray | None): separate errors for the SVD and
            the fit; the calibration errors are used when omitted.
        trunc_inflation (float): relative margin on E.
        tol (float): membership tolerance.

    Returns:
        FunctionalConformalModel: the calibrated model.
    """
    E = as_matrix(errors, name="calibration errors")
    if E.shape[0] < 2:
        raise DomainError(f"building a model needs at least 2 calibration rows, got {E.shape[0]}")
    training = E if training_errors is None else as_matrix(training_errors, name="training errors")
    builder = FunctionalModelBuilder(variance_fraction, tol)
    return builder.reduce(training).fit(cfg).calibrate(E, grid, trunc_inflation).build()


def _check_levels(eps_levels):
    levels = tuple(float(eps) for eps in eps_levels)
    if not levels:
        raise DomainError("at least one eps level is required")
    for eps in levels:
        if not 0.0 < eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return levels


def predict(model, base_point, eps_levels, finite_sample=False):
    """
    Output-space prediction sets f(x) + V S (Z^{s(eps)} x E).

    Parameters:
        model (FunctionalConformalModel): calibrated model.
        base_point (np.ndarray): the prediction f(x), length l.
        eps_levels (list): miscoverage levels in (0, 1).
        finite_sample (bool): use the floor(eps * (n + 1)) quantile index.

    Returns:
        FunctionalPredictionSet: one set per eps, in the given order.
    """
    base = as_vector(base_point, name="base point", length=model.output_dim)
    levels = _check_levels(eps_levels)
    if model.degenerate:
        singleton = Zonotope(base, np.zeros((model.output_dim, 0)))
        return FunctionalPredictionSet(levels, tuple(singleton for _ in levels), base)
    box = from_hyperrectangle(model.trunc_box)
    sets = []
    for eps in levels:
        reduced = cartesian_product(level_set(model.calibrated, eps, finite_sample), box)
        sets.append(translate(linear_map(model.back_map, reduced), base))
    return FunctionalPredictionSet(levels, tuple(sets), base)


def contains_functions(model, eps, base_points, truths, residual_tol=np.inf, finite_sample=False):
    """
    Vectorised containment of true functions in their prediction sets.

    A row is covered when its kept coordinates lie in Z^{s(eps)}, its
    truncated coordinates lie in E and its residual outside span(V) is at
    most residual_tol.

    Parameters:
        model (FunctionalConformalModel): calibrated model.
        eps (float): miscoverage level.
        base_points (np.ndarray): N x l predictions.
        truths (np.ndarray): N x l true outputs.
        residual_tol (float): bound on the out-of-span residual norm.
        finite_sample (bool): use the floor(eps * (n + 1)) quantile index.

    Returns:
        np.ndarray: boolean vector of length N.
    """
    bases = np.atleast_2d(np.asarray(base_points, dtype=float))
    F = np.atleast_2d(np.asarray(truths, dtype=float))
    if bases.shape != F.shape or F.shape[1] != model.output_dim:
        raise DomainError(f"base points {bases.shape} and truths {F.shape} must both be N x {model.output_dim}")
    errors = F - bases
    if model.degenerate:
        scale = max(np.max(np.abs(bases), initial=0.0), 1.0)
        return np.max(np.abs(errors), axis=1) <= model.tol * scale
    kept, truncated, residual = project_errors(model.svd, errors)
    level = level_alpha(model.calibrated, eps, finite_sample)
    in_kept = model.calibrated.family.contains(level.alpha, kept, model.tol)
    in_box = model.trunc_box.contains(truncated, model.tol)
    return in_kept & in_box & (residual <= residual_tol)


def contains_function(model, pset, eps, truth, residual_tol=np.inf, finite_sample=False):
    """
    Whether truth lies in the set predicted at eps.

    Parameters:
        model (FunctionalConformalModel): the model that produced pset.
        pset (FunctionalPredictionSet): prediction around its base point.
        eps (float): one of pset.eps_levels.
        truth (np.ndarray): true output, length l.
        residual_tol (float): bound on the out-of-span residual norm.

    Returns:
        bool: membership.
    """
    pset.set_at(eps)
    truth = as_vector(truth, name="truth", length=model.output_dim)
    return bool(contains_functions(model, eps, pset.base_point, truth, residual_tol, finite_sample)[0])


def joint_membership_scores(model, errors):
    """
    Scores of error rows against the product family Z^alpha x E.

    Each test runs member() on the Cartesian product in the full r
    coordinates, independent of the kept-coordinate scoring.

    Parameters:
        model (FunctionalConformalModel): calibrated model.
        errors (np.ndarray): n x l errors.

    Returns:
        np.ndarray: scores on the model grid (BELOW_GRID outside Z^0 x E).
    """
    if model.degenerate:
        raise DomainError("a degenerate model has no scores")
    kept, truncated, _ = project_errors(model.svd, errors)
    points = np.hstack([kept, truncated])
    family = model.calibrated.family
    levels = model.calibrated.grid.values
    box = from_hyperrectangle(model.trunc_box)
    products = {}

    def product_at(index):
        if index not in products:
            products[index] = cartesian_product(nested_at(family, float(levels[index])), box)
        return products[index]

    scores = np.empty(points.shape[0])
    for row_index, point in enumerate(points):
        if not member(product_at(0), point, model.tol):
            scores[row_index] = BELOW_GRID
            continue
        low, high = 0, levels.shape[0]
        while high - low > 1:
            middle = (low + high) // 2
            if member(product_at(middle), point, model.tol):
                low = middle
            else:
                high = middle
        scores[row_index] = levels[low]
    return scores


def prediction_envelopes(pset):
    """
    Per-output interval envelopes of every set.

    Returns:
        tuple: (lower, upper), each len(eps_levels) x l.
    """
    lower, upper = zip(*(bounds(z) for z in pset.sets))
    return np.vstack(lower), np.vstack(upper)


def _basis_path(path):
    stem, _ = os.path.splitext(path)
    return stem + ".V.csv"


def _svd_payload(svd, path):
    basis_file = _basis_path(path)
    write_matrix_csv(basis_file, svd.V)
    return {
        "V_file": os.path.basename(basis_file),
        "sigma": svd.sigma.tolist(),
        "k": svd.k,
        "variance_fraction": svd.variance_fraction,
    }


def _svd_from_payload(info, directory):
    V = read_matrix_csv(os.path.join(directory, info["V_file"]))
    return ErrorSVD(V, np.asarray(info["sigma"], dtype=float), int(info["k"]), float(info["variance_fraction"]))


def save_fit(builder, path):
    """
    Write the reduce and fit stages of a builder so calibration can run later.

    Parameters:
        builder (FunctionalModelBuilder): builder after reduce() and fit().
        path (str): JSON path; V goes to <stem>.V.csv next to it.
    """
    if builder.output_dim is None:
        raise DomainError("call reduce() before saving a fit")
    payload = {
        "kind": "functional_fit",
        "output_dim": builder.output_dim,
        "degenerate": builder.degenerate,
        "tol": builder.tol,
        "svd": None,
        "fit": None,
    }
    if not builder.degenerate:
        if builder.fit_result is None:
            raise DomainError("call fit() before saving a fit")
        payload["svd"] = _svd_payload(builder.svd, path)
        payload["fit"] = builder.fit_result.to_dict()
    write_json(path, payload)


def fit_from_dict(payload, directory):
    if payload.get("kind") != "functional_fit":
        raise DomainError("not a functional fit file")
    builder = FunctionalModelBuilder(tol=float(payload["tol"]))
    builder.output_dim = int(payload["output_dim"])
    builder.degenerate = bool(payload["degenerate"])
    if not builder.degenerate:
        builder.svd = _svd_from_payload(payload["svd"], directory)
        builder.variance_fraction = builder.svd.variance_fraction
        builder.fit_result = FitResult.from_dict(payload["fit"])
    return builder


def load_fit(path):
    """Builder restored from save_fit, ready for calibrate()."""
    return fit_from_dict(read_json(path), os.path.dirname(os.path.abspath(path)))


def save_model(model, path):
    """
    Write a model as JSON plus a CSV file holding V.

    Parameters:
        model (FunctionalConformalModel): the model.
        path (str): JSON path; V goes to <stem>.V.csv next to it.
    """
    payload = {
        "kind": "functional",
        "output_dim": model.output_dim,
        "degenerate": model.degenerate,
        "trunc_inflation": model.trunc_inflation,
        "svd": None,
        "calibrated": None,
        "trunc_box": None,
    }
    if not model.degenerate:
        payload["svd"] = _svd_payload(model.svd, path)
        payload["calibrated"] = model.calibrated.to_dict()
        payload["trunc_box"] = model.trunc_box.to_dict()
    write_json(path, payload)


def model_from_dict(payload, directory):
    if payload.get("kind") != "functional":
        raise DomainError("not a functional model file")
    if payload["degenerate"]:
        return FunctionalConformalModel(None, None, None, int(payload["output_dim"]),
                                        float(payload["trunc_inflation"]))
    return FunctionalConformalModel(
        _svd_from_payload(payload["svd"], directory),
        CalibratedFamily.from_dict(payload["calibrated"]),
        Hyperrectangle.from_dict(payload["trunc_box"]),
        int(payload["output_dim"]),
        float(payload["trunc_inflation"]),
    )


def load_model(path):
    return model_from_dict(read_json(path), os.path.dirname(os.path.abspath(path)))
