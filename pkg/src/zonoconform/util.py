"""File ingestion/export helpers and row-parallel execution."""
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from zonoconform.config import SCORE_CHUNK_ROWS, get_thread_count
from zonoconform.errors import DomainError

logger = logging.getLogger(__name__)


def as_matrix(data, name="data"):
    """
    Coerce input to a finite 2D float matrix (rows = samples).

    Parameters:
        data (array-like): matrix or single row.
        name (str): name used in error messages.

    Returns:
        np.ndarray: n x d float array.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DomainError(f"{name} must be a 2D matrix, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_vector(data, name="vector", length=None):
    vec = np.asarray(data, dtype=float).reshape(-1)
    if length is not None and vec.shape[0] != length:
        raise DomainError(f"{name} has length {vec.shape[0]}, expected {length}")
    if not np.all(np.isfinite(vec)):
        raise DomainError(f"{name} contains non-finite entries")
    return vec


def read_matrix_csv(path, header=False):
    """
    Read a numeric CSV file into a matrix.

    Parameters:
        path (str): CSV file, rows = samples, columns = dimensions.
        header (bool): skip the first line.

    Returns:
        np.ndarray: n x d float matrix.
    """
    rows = []
    width = None
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        for line_no, record in enumerate(reader, start=1):
            if header and line_no == 1:
                continue
            if not record or all(cell.strip() == "" for cell in record):
                continue
            values = []
            for col_no, cell in enumerate(record, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DomainError(
                        f"{path}: non-numeric cell {cell!r} at row {line_no}, column {col_no}"
                    ) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DomainError(
                    f"{path}: row {line_no} has {len(values)} columns, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise DomainError(f"{path}: no data rows")
    matrix = np.array(rows, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise DomainError(f"{path}: contains non-finite values")
    logger.debug("Read %s with shape %s", path, matrix.shape)
    return matrix


def write_matrix_csv(path, matrix, header=None):
    """Write a matrix as CSV with round-trip float formatting."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if header is not None:
            writer.writerow(header)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def write_json(path, payload):
    # json serialises floats with repr, the shortest string that round-trips
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def read_json(path):
    with open(path) as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as err:
            raise DomainError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None


def parse_eps_list(text):
    """
    Parse a comma separated list of confidence levels.

    Parameters:
        text (str): e.g. "0.1,0.2".

    Returns:
        list[float]: the levels, each in (0, 1).
    """
    levels = []
    for chunk in str(text).split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            eps = float(chunk)
        except ValueError:
            raise DomainError(f"invalid eps value {chunk!r}") from None
        if not 0.0 < eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
        levels.append(eps)
    if not levels:
        raise DomainError("no eps values given")
    return levels


def map_row_chunks(func, matrix, chunk_rows=SCORE_CHUNK_ROWS):
    """
    Apply func to consecutive row blocks of a matrix in a thread pool.

    Results are concatenated in row order, so the output does not depend on
    the number of threads.

    Parameters:
        func (callable): maps an m x d block to a length-m array.
        matrix (np.ndarray): rows to process.
        chunk_rows (int): block size.

    Returns:
        np.ndarray: concatenated results.
    """
    n_rows = matrix.shape[0]
    if n_rows <= chunk_rows:
        return np.asarray(func(matrix))
    blocks = [matrix[start:start + chunk_rows] for start in range(0, n_rows, chunk_rows)]
    workers = min(get_thread_count(), len(blocks))
    if workers == 1:
        return np.concatenate([np.asarray(func(block)) for block in blocks])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(func, blocks))
    return np.concatenate([np.asarray(part) for part in parts])
