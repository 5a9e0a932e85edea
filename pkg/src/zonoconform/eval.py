"""Coverage and efficiency metrics and comparison reports."""
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd

from zonoconform.baselines import EllipsoidSet, IntervalBand
from zonoconform.calibration import calibrate
from zonoconform.config import DEFAULT_PAIR_BUDGET
from zonoconform.errors import DomainError
from zonoconform.functional import FunctionalConformalModel, FunctionalPredictionSet, project_errors
from zonoconform.sets import (
    Hyperrectangle,
    NestedZonotopeFamily,
    Zonotope,
    bounds,
    from_hyperrectangle,
    projected_area_2d,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoverageReport:
    method: str
    eps: float
    n_test: int
    covered: int
    coverage: float
    mc_stderr: float
    note: str = ""


@dataclass(frozen=True)
class EfficiencyReport:
    method: str
    eps: float
    mean_projected_area: float
    pairs_sampled: int
    seed: int
    note: str = ""


@dataclass(frozen=True)
class ReportRow:
    """One merged coverage/efficiency line of a comparison table."""
    method: str
    eps: float
    n_test: int = None
    covered: int = None
    coverage: float = None
    mc_stderr: float = None
    mean_projected_area: float = None
    pairs_sampled: int = None
    seed: int = None
    note: str = ""


REPORT_COLUMNS = tuple(f.name for f in fields(ReportRow))
_INT_COLUMNS = ("n_test", "covered", "pairs_sampled", "seed")
_FLOAT_COLUMNS = ("eps", "coverage", "mc_stderr", "mean_projected_area")


def empirical_coverage(contains, test_truths, test_bases, eps, method="zonotope", vectorized=False, note=""):
    """
    Fraction of test rows whose truth lies in the set predicted around their base point.

    Parameters:
        contains (callable): (truth, base) -> bool, or (truths, bases) -> bool array when vectorized.
        test_truths (np.ndarray): n x l true outputs.
        test_bases (np.ndarray): n x l base points.
        eps (float): miscoverage level the sets were built for.
        method (str): label for the report.
        vectorized (bool): call contains once on all rows.
        note (str): free-text flag carried into the report.

    Returns:
        CoverageReport: counts, coverage and its Monte Carlo standard error.
    """
    F = np.atleast_2d(np.asarray(test_truths, dtype=float))
    B = np.atleast_2d(np.asarray(test_bases, dtype=float))
    if F.shape[0] == 0 or F.size == 0:
        raise DomainError("coverage needs at least one test row")
    if F.shape != B.shape:
        raise DomainError(f"test truths {F.shape} and bases {B.shape} differ in shape")
    if vectorized:
        hits = np.asarray(contains(F, B), dtype=bool).reshape(-1)
    else:
        hits = np.array([bool(contains(f, b)) for f, b in zip(F, B)], dtype=bool)
    n_test = F.shape[0]
    covered = int(hits.sum())
    coverage = covered / n_test
    stderr = math.sqrt(coverage * (1.0 - coverage) / n_test)
    logger.info("%s eps=%g: coverage %.4f (%d/%d)", method, eps, coverage, covered, n_test)
    return CoverageReport(method, float(eps), n_test, covered, coverage, stderr, note)


def coordinate_pairs(dim, pair_budget=DEFAULT_PAIR_BUDGET, seed=0):
    """
    Coordinate pairs (i < j) used for projected areas.

    All pairs when there are at most pair_budget of them, otherwise a
    seeded sample without replacement.

    Returns:
        np.ndarray: P x 2 integer pairs.
    """
    if pair_budget < 1:
        raise DomainError(f"pair budget must be positive, got {pair_budget}")
    first, second = np.triu_indices(dim, k=1)
    total = first.shape[0]
    if total > pair_budget:
        pick = np.sort(np.random.default_rng(seed).choice(total, size=pair_budget, replace=False))
        first, second = first[pick], second[pick]
    return np.column_stack([first, second])


def _set_dim(target):
    if isinstance(target, Zonotope):
        return target.dim
    if isinstance(target, IntervalBand):
        return target.lower.shape[0]
    if isinstance(target, EllipsoidSet):
        return target.dim
    raise DomainError(f"cannot measure sets of type {type(target).__name__}")


def _pair_area(target, pair):
    if isinstance(target, Zonotope):
        return projected_area_2d(target, pair)
    if isinstance(target, IntervalBand):
        widths = target.widths
        return float(widths[pair[0]] * widths[pair[1]])
    return target.projected_area_2d(pair)


def efficiency(sets, eps, pair_budget=DEFAULT_PAIR_BUDGET, seed=0, method="zonotope", note=""):
    """
    Mean area of 2D coordinate projections of a prediction set.

    Parameters:
        sets: FunctionalPredictionSet (the entry at eps is used), Zonotope,
            IntervalBand or EllipsoidSet.
        eps (float): miscoverage level.
        pair_budget (int): maximum number of coordinate pairs.
        seed (int): seed for the pair sample.
        method (str): label for the report.
        note (str): free-text flag carried into the report.

    Returns:
        EfficiencyReport: mean projected area.
    """
    target = sets.set_at(eps) if isinstance(sets, FunctionalPredictionSet) else sets
    dim = _set_dim(target)
    if dim < 2:
        logger.warning("%s: set of dimension %d has no 2D projections; efficiency is 0", method, dim)
        return EfficiencyReport(method, float(eps), 0.0, 0, int(seed), note)
    pairs = coordinate_pairs(dim, pair_budget, seed)
    areas = [_pair_area(target, pair) for pair in pairs]
    return EfficiencyReport(method, float(eps), float(np.mean(areas)), len(areas), int(seed), note)


def box_family(family):
    """Nested hyperrectangle family on the interval box of a family's base set, contracting to the box center."""
    low, high = bounds(family.base)
    box = Hyperrectangle((low + high) / 2.0, (high - low) / 2.0)
    return NestedZonotopeFamily(from_hyperrectangle(box), box.center)


def rotated_box_model(model, calibration_errors, grid=None):
    """
    Recalibrated model whose kept-coordinate family is the box around the fitted base set.

    In output space the box is aligned with the error SVD modes.

    Parameters:
        model (FunctionalConformalModel): calibrated model.
        calibration_errors (np.ndarray): errors to recalibrate on.
        grid (AlphaGrid | None): level grid; the model's grid by default.

    Returns:
        FunctionalConformalModel: the comparison model.
    """
    if model.degenerate:
        return model
    kept, _, _ = project_errors(model.svd, calibration_errors)
    family = box_family(model.calibrated.family)
    recalibrated = calibrate(family, kept, grid or model.calibrated.grid, model.tol)
    return FunctionalConformalModel(model.svd, recalibrated, model.trunc_box, model.output_dim,
                                    model.trunc_inflation)


def _report_frame(reports):
    records = []
    for report in reports:
        if not isinstance(report, (CoverageReport, EfficiencyReport, ReportRow)):
            raise DomainError(f"cannot report objects of type {type(report).__name__}")
        records.append({name: getattr(report, name, None) for name in REPORT_COLUMNS})
    return pd.DataFrame(records, columns=list(REPORT_COLUMNS), dtype=object)


def _frame_to_rows(frame):
    rows = []
    for record in frame.to_dict("records"):
        values = {}
        for name in REPORT_COLUMNS:
            value = record[name]
            if name in _INT_COLUMNS:
                values[name] = None if pd.isna(value) else int(value)
            elif name in _FLOAT_COLUMNS:
                values[name] = None if pd.isna(value) else float(value)
            else:
                values[name] = "" if pd.isna(value) else str(value)
        rows.append(ReportRow(**values))
    return rows


def merge_reports(reports):
    """Merge coverage and efficiency reports into rows keyed by (method, eps), stably sorted."""
    frame = _report_frame(reports)
    if frame.empty:
        return []
    frame["eps"] = frame["eps"].astype(float)
    frame["note"] = frame["note"].where(frame["note"] != "")
    # last() keeps the latest non-missing value of every column
    merged = frame.groupby(["method", "eps"], sort=False).last().reset_index()
    merged = merged.sort_values(["method", "eps"], kind="stable")
    return _frame_to_rows(merged)


def report_frame(rows):
    """Typed table of report rows; missing counts stay <NA>."""
    # object first so 64-bit seeds never pass through float64
    frame = pd.DataFrame([asdict(row) for row in rows], columns=list(REPORT_COLUMNS), dtype=object)
    dtypes = {name: "UInt64" for name in _INT_COLUMNS}
    dtypes.update({name: "float64" for name in _FLOAT_COLUMNS})
    return frame.astype(dtypes)


def sci_format(value):
    """Format as X.XXx10^Y."""
    if value is None:
        return "-"
    if value == 0.0 or not np.isfinite(value):
        return f"{value:.2f}"
    exponent = int(math.floor(math.log10(abs(value))))
    mantissa = round(value / 10.0 ** exponent, 2)
    if abs(mantissa) >= 10.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.2f}x10^{exponent}"


def report_rows_to_csv(rows):
    return report_frame(rows).to_csv(index=False, lineterminator="\n")


def report_rows_to_text(rows):
    table = pd.DataFrame({
        "method": [row.method for row in rows],
        "eps": [f"{row.eps:g}" for row in rows],
        "coverage (%)": ["-" if row.coverage is None else f"{100.0 * row.coverage:.2f}" for row in rows],
        "stderr (%)": ["-" if row.mc_stderr is None else f"{100.0 * row.mc_stderr:.2f}" for row in rows],
        "n_test": ["-" if row.n_test is None else str(row.n_test) for row in rows],
        "mean 2D area": [sci_format(row.mean_projected_area) for row in rows],
        "note": [row.note for row in rows],
    })
    if table.empty:
        return "  ".join(table.columns) + "\n"
    return table.to_string(index=False) + "\n"


def compare_report(reports):
    """
    Comparison table of coverage and efficiency reports.

    Parameters:
        reports (list): CoverageReport, EfficiencyReport or ReportRow objects.

    Returns:
        tuple: (text table, CSV text), rows sorted by (method, eps).
    """
    rows = merge_reports(reports)
    return report_rows_to_text(rows), report_rows_to_csv(rows)


def _cell_value(name, cell):
    if name in _INT_COLUMNS:
        return int(cell) if cell else None
    if name in _FLOAT_COLUMNS:
        return float(cell) if cell else None
    return cell


def _read_report_rows(source):
    header_message = f"report CSV must start with the header {','.join(REPORT_COLUMNS)}"
    try:
        # cells are read as text so empty counts and notes survive unchanged
        frame = pd.read_csv(source, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DomainError(header_message) from None
    except pd.errors.ParserError as err:
        raise DomainError(f"report CSV has rows with too many cells: {str(err).strip()}") from None
    if tuple(frame.columns) != REPORT_COLUMNS:
        raise DomainError(header_message)
    short = np.flatnonzero(frame.isna().any(axis=1).to_numpy())
    if short.size:
        raise DomainError(f"report row {int(short[0]) + 2} has missing cells, expected {len(REPORT_COLUMNS)}")
    rows = []
    for line_no, record in enumerate(frame.to_dict("records"), start=2):
        values = {}
        for name in REPORT_COLUMNS:
            try:
                values[name] = _cell_value(name, record[name])
            except ValueError:
                raise DomainError(f"report row {line_no}: invalid {name} value {record[name]!r}") from None
        rows.append(ReportRow(**values))
    return rows


def parse_report_csv(text):
    """Rows of a CSV written by compare_report."""
    return _read_report_rows(io.StringIO(text))


def read_report_csv(path):
    return _read_report_rows(path)


def compute_time(func, trials=10):
    """
    Mean wall-clock time of func() over several trials.

    Parameters:
        func (callable): the call to time.
        trials (int): number of repetitions.

    Returns:
        float: mean elapsed seconds.
    """
    times = []
    for _ in range(trials):
        start_time = time.perf_counter()
        func()
        end_time = time.perf_counter()
        times.append(end_time - start_time)
    return float(np.mean(times))
