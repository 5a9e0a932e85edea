import numpy as np
import pytest

from zonoconform.sets import NestedZonotopeFamily, Zonotope
from zonoconform.synthetic import functional_surrogate, smooth_error_field


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_square():
    return Zonotope(np.zeros(2), np.eye(2))


@pytest.fixture
def square_family(unit_square):
    return NestedZonotopeFamily(unit_square, np.zeros(2))


@pytest.fixture
def hexagon():
    return Zonotope(np.array([1.0, -1.0]), np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))


@pytest.fixture
def small_errors():
    """Train/calibration/test errors of a 32-point smooth field."""
    return (smooth_error_field(300, seed=11, length=32, modes=4),
            smooth_error_field(200, seed=12, length=32, modes=4),
            smooth_error_field(200, seed=13, length=32, modes=4))


@pytest.fixture
def surrogate_csvs(tmp_path):
    """Training, calibration and test truth/prediction CSV pairs for the CLI."""
    from zonoconform.util import write_matrix_csv

    paths = {}
    for name, n, seed in (("train", 150, 21), ("cal", 120, 22), ("test", 80, 23)):
        truths, predictions = functional_surrogate(n, seed=seed, length=16, modes=3)
        paths[name] = (str(tmp_path / f"{name}_truths.csv"), str(tmp_path / f"{name}_predictions.csv"))
        write_matrix_csv(paths[name][0], truths)
        write_matrix_csv(paths[name][1], predictions)
    return paths
