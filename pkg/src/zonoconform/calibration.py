"""
Conformal calibration of nested zonotope families.

Every calibration point gets the largest grid level alpha at which it is
still inside Z^alpha. With scores sorted ascending, the set Z^{alpha_(k)},
k = ceil(eps * n), contains at least n - k + 1 calibration points and a new
exchangeable point with probability at least 1 - eps.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from zonoconform.config import DEFAULT_MC_SAMPLES, DEFAULT_TOL, MIN_GRID_SIZE, MIN_MC_SAMPLES
from zonoconform.errors import DomainError
from zonoconform.sets import NestedZonotopeFamily, nested_at
from zonoconform.util import as_matrix, map_row_chunks

logger = logging.getLogger(__name__)

# GLOBALS:
BELOW_GRID = -1.0   # score of points outside the base set


@dataclass(frozen=True, eq=False)
class AlphaGrid:
    """Strictly increasing levels in [0, 1] starting at 0 and ending at 1."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] < 2:
            raise DomainError("an alpha grid needs at least the two levels 0 and 1")
        if values[0] != 0.0 or values[-1] != 1.0:
            raise DomainError("alpha grid must start at 0 and end at 1")
        if np.any(np.diff(values) <= 0.0):
            raise DomainError("alpha grid must be strictly increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def size(self):
        return self.values.shape[0]

    @classmethod
    def uniform(cls, size):
        """
        Uniform grid i / (size - 1), i = 0..size-1.

        Grids whose interval counts divide each other share their common
        levels bit for bit.
        """
        size = int(size)
        if size < 2:
            raise DomainError(f"grid size must be at least 2, got {size}")
        return cls(np.arange(size) / (size - 1))

    @classmethod
    def default(cls, n):
        return cls.uniform(max(MIN_GRID_SIZE, int(n) + 1))

    def is_uniform(self):
        return np.array_equal(self.values, np.arange(self.size) / (self.size - 1))

    def to_dict(self):
        if self.is_uniform():
            return {"size": self.size}
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, payload):
        if "values" in payload:
            return cls(np.asarray(payload["values"], dtype=float))
        return cls.uniform(payload["size"])


@dataclass(frozen=True, eq=False)
class CalibratedFamily:
    """
    A nested family with its calibration scores.

    Parameters:
        family (NestedZonotopeFamily): the family.
        scores (np.ndarray): membership scores sorted ascending.
        grid (AlphaGrid): the level grid the scores live on.
        tol (float): membership tolerance used for scoring.
    """
    family: NestedZonotopeFamily
    scores: np.ndarray
    grid: AlphaGrid
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float).reshape(-1)
        if scores.shape[0] == 0:
            raise DomainError("calibration needs at least one score")
        if np.any(np.diff(scores) < 0.0):
            raise DomainError("scores must be sorted ascending")
        valid = np.isin(scores, self.grid.values) | (scores == BELOW_GRID)
        if not np.all(valid):
            raise DomainError("every score must be a grid level or the below-grid sentinel")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def outside_count(self):
        return int(np.sum(self.scores == BELOW_GRID))

    def to_dict(self):
        return {
            "family": self.family.to_dict(),
            "scores": self.scores.tolist(),
            "grid": self.grid.to_dict(),
            "n": self.n,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            NestedZonotopeFamily.from_dict(payload["family"]),
            np.asarray(payload["scores"], dtype=float),
            AlphaGrid.from_dict(payload["grid"]),
            float(payload.get("tol", DEFAULT_TOL)),
        )


@dataclass(frozen=True)
class Level:
    """
    The level chosen for a confidence eps.

    Parameters:
        alpha (float): the level used for the set.
        index (int): 1-based rank of the score used, 0 when none applies.
        conservative (bool): eps was too small for the sample, the base set is returned.
        below_base (bool): the selected score was the below-grid sentinel.
    """
    alpha: float
    index: int
    conservative: bool
    below_base: bool = False


def membership_scores(family, points, grid=None, tol=DEFAULT_TOL):
    """
    Largest grid level alpha with x in Z^alpha, for every row.

    Membership is monotone in alpha, so a binary search over grid indices
    is run for all rows at once. Rows outside Z^0 score BELOW_GRID.

    Parameters:
        family (NestedZonotopeFamily): the family.
        points (np.ndarray): N x dim rows.
        grid (AlphaGrid | None): levels; defaults to AlphaGrid.default(N).
        tol (float): membership tolerance.

    Returns:
        np.ndarray: scores of length N.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != family.dim:
        raise DomainError(f"points have {X.shape[1]} columns, family has dimension {family.dim}")
    grid = grid or AlphaGrid.default(X.shape[0])
    levels = grid.values

    def score_block(block):
        inside = family.contains(0.0, block, tol)
        low = np.zeros(block.shape[0], dtype=int)
        high = np.full(block.shape[0], grid.size)
        while True:
            rows = np.flatnonzero(inside & (high - low > 1))
            if rows.size == 0:
                break
            middle = (low[rows] + high[rows]) // 2
            hit = family.contains(levels[middle], block[rows], tol)
            low[rows] = np.where(hit, middle, low[rows])
            high[rows] = np.where(hit, high[rows], middle)
        scores = levels[low].copy()
        scores[~inside] = BELOW_GRID
        return scores

    if X.shape[0] == 0:
        return np.zeros(0)
    return map_row_chunks(score_block, X)


def membership_score(family, x, grid, tol=DEFAULT_TOL):
    return float(membership_scores(family, np.asarray(x, dtype=float).reshape(1, -1), grid, tol)[0])


def calibrate(family, data, grid=None, tol=DEFAULT_TOL):
    """
    Score calibration data against a family.

    Parameters:
        family (NestedZonotopeFamily): fitted family.
        data (np.ndarray): n x dim calibration sample, n >= 1.
        grid (AlphaGrid | None): levels; defaults to AlphaGrid.default(n).
        tol (float): membership tolerance.

    Returns:
        CalibratedFamily: family with its sorted scores.
    """
    X = as_matrix(data, name="calibration data")
    grid = grid or AlphaGrid.default(X.shape[0])
    scores = np.sort(membership_scores(family, X, grid, tol))
    outside = int(np.sum(scores == BELOW_GRID))
    if outside:
        logger.info("%d of %d calibration rows lie outside the base set", outside, X.shape[0])
    logger.debug("calibrated %d rows on a %d-level grid", X.shape[0], grid.size)
    return CalibratedFamily(family, scores, grid, tol)


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")


def level_alpha(cf, eps, finite_sample=False):
    """
    Level for confidence 1 - eps.

    The default index is k = ceil(eps * n). With finite_sample the stricter
    k = floor(eps * (n + 1)) is used instead. When k < 1 the base set
    (alpha = 0) is returned and the level is flagged conservative.

    Parameters:
        cf (CalibratedFamily): calibrated family.
        eps (float): miscoverage in (0, 1).
        finite_sample (bool): use the floor(eps * (n + 1)) index.

    Returns:
        Level: alpha and flags.
    """
    _check_eps(eps)
    n = cf.n
    # rounding first keeps e.g. 0.7 * 10 from becoming 8
    if finite_sample:
        k = math.floor(round(eps * (n + 1), 9))
    else:
        k = math.ceil(round(eps * n, 9))
    if k < 1:
        return Level(0.0, 0, True)
    score = float(cf.scores[k - 1])
    if score == BELOW_GRID:
        return Level(0.0, k, False, True)
    return Level(score, k, False)


def level_set(cf, eps, finite_sample=False):
    """
    Calibrated set Z^{s(eps)} with coverage at least 1 - eps.

    Parameters:
        cf (CalibratedFamily): calibrated family.
        eps (float): miscoverage in (0, 1).
        finite_sample (bool): use the floor(eps * (n + 1)) index.

    Returns:
        Zonotope: the level set.
    """
    level = level_alpha(cf, eps, finite_sample)
    if level.conservative:
        logger.warning("eps=%g is below 1/n for n=%d; returning the full base set", eps, cf.n)
    if level.below_base:
        logger.warning("more than eps*n calibration rows lie outside the base set; "
                       "returning the base set, coverage %g is not guaranteed", 1.0 - eps)
    return nested_at(cf.family, level.alpha)


def calibration_coverage(cf, eps, finite_sample=False):
    """Fraction of calibration rows inside level_set(cf, eps)."""
    level = level_alpha(cf, eps, finite_sample)
    return float(np.mean(cf.scores >= level.alpha))


@dataclass(frozen=True, eq=False)
class DensityCalibration:
    """
    Monte Carlo estimate of alpha -> P(X in Z^alpha) on a grid.

    Parameters:
        grid (AlphaGrid): levels.
        coverage (np.ndarray): estimated P(X in Z^alpha) per level, nonincreasing.
        stderr (np.ndarray): Monte Carlo standard error per level.
        n_samples (int): number of draws.
        effective_samples (float): effective sample size of the weights.
    """
    grid: AlphaGrid
    coverage: np.ndarray
    stderr: np.ndarray
    n_samples: int
    effective_samples: float

    @property
    def s_values(self):
        """s(alpha) = 1 - P(X in Z^alpha), nondecreasing in alpha."""
        return 1.0 - self.coverage

    def coverage_at(self, alpha):
        """Step map: coverage of the largest grid level not above alpha."""
        if not 0.0 <= alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
        index = int(np.searchsorted(self.grid.values, alpha, side="right")) - 1
        return float(self.coverage[index])

    def level_for(self, eps):
        """Largest grid level whose estimated coverage is at least 1 - eps."""
        _check_eps(eps)
        eligible = np.flatnonzero(self.coverage >= 1.0 - eps)
        if eligible.size == 0:
            logger.warning("estimated coverage of the base set is below %g; returning alpha=0", 1.0 - eps)
            return 0.0
        return float(self.grid.values[eligible[-1]])


def calibrate_from_density(family, log_density, grid=None, mc_samples=DEFAULT_MC_SAMPLES, seed=0,
                           sampler=None, proposal_log_density=None, tol=DEFAULT_TOL):
    """
    Calibrate a family against a known density by Monte Carlo.

    Draws come from a caller-supplied sampler. Without a proposal density
    the sampler must draw from the target itself; with one, draws are
    reweighted by exp(log_density - proposal_log_density) (self-normalised).

    Parameters:
        family (NestedZonotopeFamily): the family.
        log_density (callable): point -> log f(x); values must be finite.
        grid (AlphaGrid | None): levels; defaults to AlphaGrid.default(mc_samples).
        mc_samples (int): number of draws, at least 1000.
        seed (int): seed for the sampler's generator.
        sampler (callable): (n, rng) -> n x dim draws.
        proposal_log_density (callable | None): log density of the sampler.
        tol (float): membership tolerance.

    Returns:
        DensityCalibration: coverage per level with standard errors.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise DomainError(f"mc_samples must be at least {MIN_MC_SAMPLES}, got {mc_samples}")
    if sampler is None:
        raise DomainError("density calibration needs a sampler; sampling from the base set is not supported")
    rng = np.random.default_rng(seed)
    draws = np.atleast_2d(np.asarray(sampler(mc_samples, rng), dtype=float))
    if draws.shape != (mc_samples, family.dim):
        raise DomainError(f"sampler returned shape {draws.shape}, expected {(mc_samples, family.dim)}")
    log_f = np.array([log_density(row) for row in draws], dtype=float)
    if not np.all(np.isfinite(log_f)):
        raise DomainError("log density returned non-finite values on sampled points")
    if proposal_log_density is None:
        weights = np.full(mc_samples, 1.0 / mc_samples)
    else:
        log_q = np.array([proposal_log_density(row) for row in draws], dtype=float)
        if not np.all(np.isfinite(log_q)):
            raise DomainError("proposal log density returned non-finite values")
        log_w = log_f - log_q
        weights = np.exp(log_w - log_w.max())
        weights /= weights.sum()
    effective = 1.0 / float(np.sum(weights ** 2))

    grid = grid or AlphaGrid.default(mc_samples)
    scores = membership_scores(family, draws, grid, tol)
    order = np.argsort(scores, kind="stable")
    prefix = np.concatenate([[0.0], np.cumsum(weights[order])])
    below = prefix[np.searchsorted(scores[order], grid.values, side="left")]
    coverage = np.clip(1.0 - below, 0.0, 1.0)
    coverage = np.minimum.accumulate(coverage)
    stderr = np.sqrt(coverage * (1.0 - coverage) / effective)
    logger.info("density calibration: %d draws, effective size %.1f, coverage of base %.4f",
                mc_samples, effective, coverage[0])
    return DensityCalibration(grid, coverage, stderr, mc_samples, effective)
