"""Package-wide defaults and environment settings."""
import logging
import os

logger = logging.getLogger(__name__)

# GLOBALS:
DEFAULT_TOL = 1e-9                  # membership tolerance, relative to generator scale
DEFAULT_VARIANCE_FRACTION = 0.99
MIN_GRID_SIZE = 1000
DEFAULT_PAIR_BUDGET = 512
DEFAULT_TRUNC_INFLATION = 0.5       # relative margin on the truncation box
DEFAULT_MC_SAMPLES = 10000
MIN_MC_SAMPLES = 1000

HULL_MAX_DIM = 6
FACET_MAX_DIM = 10
FACET_MAX_COMBINATIONS = 5000       # above this the gauge falls back to linear programming
ELLIPTICAL_MAX_DIM = 32
COVARIANCE_COND_LIMIT = 1e12
SIGMA_FLOOR = 1e-12
TUKEY_EXACT_MAX_ROWS = 2000

LP_CHUNK_ROWS = 64
SCORE_CHUNK_ROWS = 4096
LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}

THREADS_ENV = "ZONOCONFORM_THREADS"


def get_thread_count():
    """
    Number of worker threads used for row-parallel scoring.

    Reads ZONOCONFORM_THREADS; falls back to the CPU count when it is unset
    or not a positive integer.

    Returns:
        int: number of threads, at least 1.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r: not an integer", THREADS_ENV, raw)
        return max(1, os.cpu_count() or 1)
    if value < 1:
        logger.warning("Ignoring %s=%r: must be positive", THREADS_ENV, raw)
        return max(1, os.cpu_count() or 1)
    return value
