"""Seeded synthetic datasets for demos and property tests."""
import numpy as np

from zonoconform.errors import DomainError

# GLOBALS:
GAUSSIAN_COVARIANCE = np.array([[1.0, 0.8], [0.8, 1.0]])
SINE_NOISE = 0.1


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_rows(n):
    if n < 1:
        raise DomainError(f"number of samples must be positive, got {n}")


def correlated_gaussian(n, seed=0, covariance=GAUSSIAN_COVARIANCE):
    """
    Zero-mean Gaussian sample with a correlated covariance.

    Parameters:
        n (int): number of rows.
        seed (int | np.random.Generator): randomness.
        covariance (np.ndarray): 2 x 2 covariance.

    Returns:
        np.ndarray: n x 2 sample.
    """
    _check_rows(n)
    covariance = np.asarray(covariance, dtype=float)
    return _rng(seed).multivariate_normal(np.zeros(covariance.shape[0]), covariance, size=n)


def skewed_half_moon(n, seed=0, noise=0.1, skew=0.5):
    """
    Upper half-moon with Gaussian jitter, sheared along the first axis and
    with more mass near one tip.

    Returns:
        np.ndarray: n x 2 sample.
    """
    _check_rows(n)
    rng = _rng(seed)
    angle = np.pi * rng.beta(2.0, 5.0, size=n)
    points = np.column_stack([np.cos(angle), np.sin(angle)])
    points += noise * rng.standard_normal((n, 2))
    points[:, 0] += skew * points[:, 1]
    return points


def sine_samples(n, seed=0, noise=SINE_NOISE):
    """Pairs (t, sin t + noise) with t uniform on [0, 2 pi]."""
    _check_rows(n)
    rng = _rng(seed)
    t = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([t, np.sin(t) + noise * rng.standard_normal(n)])


def getSamplerByName(name: str):
    """
    Return the generator for a named two-dimensional setting.

    Parameters:
        name (str): "gaussian", "half_moon" or "sine".
    """
    if name == "gaussian":
        return correlated_gaussian
    elif name == "half_moon":
        return skewed_half_moon
    elif name == "sine":
        return sine_samples
    raise DomainError(f"unknown synthetic setting {name!r}")


def smooth_error_field(n, seed=0, length=256, modes=8, noise=0.01):
    """
    Random smooth functions on a grid of length points plus white noise.

    Each row is sum_j a_j sqrt(2) sin(j pi t) over j = 1..modes, with
    a_j ~ N(0, 1/j), sampled at t in [0, 1], plus N(0, noise^2) per point.

    Parameters:
        n (int): number of rows.
        seed (int | np.random.Generator): randomness.
        length (int): number of output points.
        modes (int): number of smooth modes.
        noise (float): white-noise standard deviation.

    Returns:
        np.ndarray: n x length errors.
    """
    _check_rows(n)
    if length < 2 or modes < 1:
        raise DomainError(f"need length >= 2 and modes >= 1, got {length} and {modes}")
    rng = _rng(seed)
    t = np.linspace(0.0, 1.0, length)
    order = np.arange(1, modes + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(order, t))
    coefficients = rng.standard_normal((n, modes)) / np.sqrt(order)
    return coefficients @ basis + noise * rng.standard_normal((n, length))


def functional_surrogate(n, seed=0, length=256, modes=8, noise=0.01):
    """
    Truths and predictions of a surrogate whose errors are a smooth field.

    Predictions are random smooth curves; truths add smooth_error_field.

    Returns:
        tuple: (truths, predictions), each n x length.
    """
    rng = _rng(seed)
    t = np.linspace(0.0, 1.0, length)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, 1))
    amplitude = rng.uniform(0.5, 2.0, size=(n, 1))
    predictions = amplitude * np.sin(2.0 * np.pi * t + phase)
    errors = smooth_error_field(n, rng, length, modes, noise)
    return predictions + errors, predictions
