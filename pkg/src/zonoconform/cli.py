"""Command-line entry point: fit, calibrate, predict, coverage and compare."""
import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from zonoconform.baselines import (
    elliptical_calibrate,
    elliptical_contains_rows,
    elliptical_output_set,
    modulation_band,
    modulation_calibrate,
    modulation_contains_rows,
)
from zonoconform.calibration import AlphaGrid, CalibratedFamily, calibrate, calibration_coverage, level_alpha, level_set
from zonoconform.config import (
    DEFAULT_PAIR_BUDGET,
    DEFAULT_TOL,
    DEFAULT_TRUNC_INFLATION,
    DEFAULT_VARIANCE_FRACTION,
    ELLIPTICAL_MAX_DIM,
)
from zonoconform.errors import DomainError, ZonoconformError
from zonoconform.eval import (
    box_family,
    compare_report,
    efficiency,
    empirical_coverage,
    merge_reports,
    read_report_csv,
    rotated_box_model,
)
from zonoconform.fitting import DEPTH_METHODS, FIT_METHODS, FitConfig, FitResult, fit
from zonoconform.functional import (
    FunctionalModelBuilder,
    FunctionalPredictionSet,
    compute_errors,
    contains_functions,
    load_fit,
    load_model,
    predict,
    prediction_envelopes,
    project_errors,
    save_fit,
    save_model,
)
from zonoconform.sets import translate
from zonoconform.util import parse_eps_list, read_json, read_matrix_csv, write_json

logger = logging.getLogger(__name__)

# GLOBALS:
COVERAGE_METHODS = ("zonotope", "rotated_box", "modulation", "elliptical")
REPORT_FORMATS = ("json", "csv")
SEED_LIMIT = 2 ** 64
LOG_FORMAT = "%(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class RunConfig:
    """
    Settings of one CLI invocation.

    Reader paths must exist, eps values lie in (0, 1) and the seed is an
    unsigned 64-bit integer.
    """
    command: str
    inputs: tuple = ()
    truths: str = None
    predictions: str = None
    cal_truths: str = None
    cal_predictions: str = None
    cal_input: str = None
    fit_path: str = None
    model_path: str = None
    method: str = "rotated_box"
    depth: str = "mahalanobis"
    inflation: float = 0.0
    variance_fraction: float = DEFAULT_VARIANCE_FRACTION
    grid_size: int = None
    trunc_inflation: float = DEFAULT_TRUNC_INFLATION
    eps: tuple = (0.1,)
    seed: int = 0
    tol: float = DEFAULT_TOL
    out: str = None
    envelope_out: str = None
    report_format: str = "csv"
    methods: tuple = COVERAGE_METHODS
    pair_budget: int = DEFAULT_PAIR_BUDGET
    header: bool = False
    finite_sample: bool = False

    def __post_init__(self):
        for path in (*self.inputs, self.truths, self.predictions, self.cal_truths, self.cal_predictions,
                     self.cal_input, self.fit_path, self.model_path):
            if path is not None and not os.path.isfile(path):
                raise DomainError(f"input file {path} does not exist")
        if not self.eps:
            raise DomainError("no eps values given")
        for eps in self.eps:
            if not 0.0 < eps < 1.0:
                raise DomainError(f"eps must lie in (0, 1), got {eps}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not self.tol >= 0.0:
            raise DomainError(f"tolerance must be nonnegative, got {self.tol}")
        if not 0.0 < self.variance_fraction <= 1.0:
            raise DomainError(f"variance fraction must lie in (0, 1], got {self.variance_fraction}")
        if self.grid_size is not None and self.grid_size < 2:
            raise DomainError(f"grid size must be at least 2, got {self.grid_size}")
        if self.pair_budget < 1:
            raise DomainError(f"pair budget must be positive, got {self.pair_budget}")
        if self.report_format not in REPORT_FORMATS:
            raise DomainError(f"unknown format {self.report_format!r}")
        unknown = [m for m in self.methods if m not in COVERAGE_METHODS]
        if unknown:
            raise DomainError(f"unknown methods {', '.join(unknown)}; choose from {', '.join(COVERAGE_METHODS)}")
        if (self.truths is None) != (self.predictions is None):
            raise DomainError("--truths and --predictions must be given together")
        if (self.cal_truths is None) != (self.cal_predictions is None):
            raise DomainError("--cal-truths and --cal-predictions must be given together")

    @classmethod
    def from_args(cls, args):
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip()) if args.methods else COVERAGE_METHODS
        return cls(
            command=args.command,
            inputs=tuple(args.input or ()),
            truths=args.truths,
            predictions=args.predictions,
            cal_truths=args.cal_truths,
            cal_predictions=args.cal_predictions,
            cal_input=args.cal_input,
            fit_path=args.fit,
            model_path=args.model,
            method=args.method,
            depth=args.depth,
            inflation=args.inflation,
            variance_fraction=args.variance_fraction,
            grid_size=args.grid_size,
            trunc_inflation=args.trunc_inflation,
            eps=tuple(parse_eps_list(args.eps)),
            seed=args.seed,
            tol=args.tol,
            out=args.out,
            envelope_out=args.envelope_out,
            report_format=args.format,
            methods=methods,
            pair_budget=args.pair_budget,
            header=args.header,
            finite_sample=args.finite_sample,
        )

    @property
    def grid(self):
        return None if self.grid_size is None else AlphaGrid.uniform(self.grid_size)

    @property
    def fit_config(self):
        return FitConfig(self.method, self.depth, self.inflation, self.tol)

    def read(self, path):
        return read_matrix_csv(path, header=self.header)

    def single_input(self):
        if len(self.inputs) != 1:
            raise DomainError(f"{self.command} takes exactly one --input file, got {len(self.inputs)}")
        return self.read(self.inputs[0])

    def errors(self, calibration=False):
        truths, predictions = (self.cal_truths, self.cal_predictions) if calibration else (self.truths, self.predictions)
        return compute_errors(self.read(truths), self.read(predictions))


def _require_out(cfg):
    if cfg.out is None:
        raise DomainError(f"{cfg.command} needs --out")


def cmd_fit(cfg):
    """Fit a nested family to samples, or an SVD basis and family to functional errors."""
    _require_out(cfg)
    if cfg.inputs:
        data = cfg.single_input()
        result = fit(data, cfg.fit_config)
        write_json(cfg.out, {"kind": "samples_fit", **result.to_dict()})
        family = result.family
        print(f"Fitted {cfg.method} to {data.shape[0]} samples in {data.shape[1]} dimensions.")
        print(f"Generators: {family.base.num_generators}, core depth: {result.depth.core_depth:.6g}")
    elif cfg.truths is not None:
        errors = cfg.errors()
        builder = FunctionalModelBuilder(cfg.variance_fraction, cfg.tol).reduce(errors).fit(cfg.fit_config)
        save_fit(builder, cfg.out)
        print(f"Reduced {errors.shape[0]} error functions of length {errors.shape[1]}.")
        if builder.degenerate:
            print("All errors are zero; the model is degenerate.")
        else:
            print(f"Rank {builder.svd.r}, kept modes {builder.svd.k}, "
                  f"generators {builder.fit_result.family.base.num_generators}, "
                  f"core depth: {builder.fit_result.depth.core_depth:.6g}")
    else:
        raise DomainError("fit needs --input, or --truths and --predictions")
    print(f"Wrote {cfg.out}")


def _load_samples_fit(payload):
    if payload.get("kind") != "samples_fit":
        raise DomainError("not a samples fit file")
    return FitResult.from_dict(payload)


def cmd_calibrate(cfg):
    """Score calibration data against a fitted family and write the calibrated model."""
    _require_out(cfg)
    if cfg.fit_path is None:
        raise DomainError("calibrate needs --fit")
    payload = read_json(cfg.fit_path)
    if payload.get("kind") == "functional_fit":
        if cfg.truths is None:
            raise DomainError("calibrating a functional fit needs --truths and --predictions")
        errors = cfg.errors()
        builder = load_fit(cfg.fit_path)
        builder.tol = cfg.tol
        model = builder.calibrate(errors, cfg.grid, cfg.trunc_inflation).build()
        save_model(model, cfg.out)
        print(f"Calibrated on {errors.shape[0]} error functions.")
        if model.degenerate:
            print("Degenerate model: every prediction set is the prediction itself.")
            return
        print(f"Kept modes: {model.kept_dim}, truncated modes: {model.trunc_dim}, "
              f"outside base set: {model.calibrated.outside_count}")
        cf = model.calibrated
    else:
        result = _load_samples_fit(payload)
        data = cfg.single_input()
        cf = calibrate(result.family, data, cfg.grid, cfg.tol)
        write_json(cfg.out, {"kind": "samples", **cf.to_dict()})
        print(f"Calibrated on {cf.n} samples, {cf.outside_count} outside the base set.")
    for eps in cfg.eps:
        level = level_alpha(cf, eps, cfg.finite_sample)
        print(f"eps={eps:g}: alpha={level.alpha:.6g}, "
              f"calibration coverage {calibration_coverage(cf, eps, cfg.finite_sample):.4f}")
    print(f"Wrote {cfg.out}")


def _load_any_model(path):
    payload = read_json(path)
    kind = payload.get("kind")
    if kind == "functional":
        return load_model(path)
    if kind == "samples":
        return CalibratedFamily.from_dict(payload)
    raise DomainError(f"{path} is not a calibrated model file")


def _samples_predictions(cf, cfg):
    sets = [level_set(cf, eps, cfg.finite_sample) for eps in cfg.eps]
    if not cfg.inputs:
        return [FunctionalPredictionSet(cfg.eps, tuple(sets), cf.family.core)]
    bases = cfg.single_input()
    if bases.shape[1] != cf.family.dim:
        raise DomainError(f"base points have {bases.shape[1]} columns, the model has dimension {cf.family.dim}")
    return [FunctionalPredictionSet(cfg.eps, tuple(translate(z, base) for z in sets), base) for base in bases]


def _write_envelopes(path, psets):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        width = psets[0].base_point.shape[0]
        writer.writerow(["row", "eps", "bound"] + [f"y{j}" for j in range(width)])
        for row, pset in enumerate(psets):
            lower, upper = prediction_envelopes(pset)
            for eps, low, high in zip(pset.eps_levels, lower, upper):
                writer.writerow([row, repr(eps), "lower"] + [repr(float(v)) for v in low])
                writer.writerow([row, repr(eps), "upper"] + [repr(float(v)) for v in high])


def cmd_predict(cfg):
    """Prediction sets around base points, with optional per-output envelopes."""
    _require_out(cfg)
    if cfg.model_path is None:
        raise DomainError("predict needs --model")
    model = _load_any_model(cfg.model_path)
    if isinstance(model, CalibratedFamily):
        psets = _samples_predictions(model, cfg)
    else:
        bases = cfg.single_input()
        psets = [predict(model, base, cfg.eps, cfg.finite_sample) for base in bases]
    write_json(cfg.out, {"eps": list(cfg.eps), "predictions": [pset.to_dict() for pset in psets]})
    print(f"Predicted {len(psets)} sets at eps {', '.join(f'{e:g}' for e in cfg.eps)}.")
    print(f"Wrote {cfg.out}")
    if cfg.envelope_out:
        _write_envelopes(cfg.envelope_out, psets)
        print(f"Wrote {cfg.envelope_out}")


def _skip(method, reason):
    logger.warning("skipping %s: %s", method, reason)
    print(f"Skipping {method}: {reason}")


def _functional_reports(model, cfg):
    F = cfg.read(cfg.truths)
    P = cfg.read(cfg.predictions)
    test_errors = compute_errors(F, P)
    cal_errors = cfg.errors(calibration=True) if cfg.cal_truths else None
    reports = []
    for method in cfg.methods:
        if method != "zonotope" and cal_errors is None:
            _skip(method, "needs --cal-truths and --cal-predictions")
            continue
        try:
            reports.extend(_method_reports(method, model, cfg, F, P, test_errors, cal_errors))
        except ZonoconformError as err:
            _skip(method, str(err))
    return reports


def _method_reports(method, model, cfg, F, P, test_errors, cal_errors):
    reports = []
    if method in ("zonotope", "rotated_box"):
        target = model if method == "zonotope" else rotated_box_model(model, cal_errors, cfg.grid)
        for eps in cfg.eps:
            contains = lambda truths, bases, eps=eps: contains_functions(target, eps, bases, truths,
                                                                          finite_sample=cfg.finite_sample)
            reports.append(empirical_coverage(contains, F, P, eps, method, vectorized=True))
            pset = predict(target, P[0], [eps], cfg.finite_sample)
            reports.append(efficiency(pset, eps, cfg.pair_budget, cfg.seed, method))
    elif method == "modulation":
        mm = modulation_calibrate(cal_errors)
        for eps in cfg.eps:
            contains = lambda truths, bases, eps=eps: modulation_contains_rows(mm, bases, truths, eps)
            reports.append(empirical_coverage(contains, F, P, eps, method, vectorized=True))
            reports.append(efficiency(modulation_band(mm, P[0], eps), eps, cfg.pair_budget, cfg.seed, method))
    else:
        if model.degenerate:
            raise DomainError("the model is degenerate and has no SVD coordinates")
        if model.kept_dim > ELLIPTICAL_MAX_DIM:
            raise DomainError(f"{model.kept_dim} kept SVD modes exceed the elliptical limit of {ELLIPTICAL_MAX_DIM}")
        note = "svd-coordinates"
        kept_cal, _, _ = project_errors(model.svd, cal_errors)
        kept_test, _, _ = project_errors(model.svd, test_errors)
        em = elliptical_calibrate(kept_cal)
        back_map = model.back_map[:, :model.kept_dim]
        origin = np.zeros_like(kept_test)
        for eps in cfg.eps:
            contains = lambda coords, bases, eps=eps: elliptical_contains_rows(em, bases, coords, eps)
            reports.append(empirical_coverage(contains, kept_test, origin, eps, method, vectorized=True, note=note))
            ellipsoid = elliptical_output_set(em, P[0], eps, back_map)
            reports.append(efficiency(ellipsoid, eps, cfg.pair_budget, cfg.seed, method, note=note))
    return reports


def _samples_reports(cf, cfg):
    data = cfg.single_input()
    reports = []
    for method in cfg.methods:
        if method == "zonotope":
            target = cf
        elif method == "rotated_box":
            # coordinate box around the fitted base, recalibrated on separate samples
            if cfg.cal_input is None:
                _skip(method, "samples models need --cal-input to recalibrate the box")
                continue
            target = calibrate(box_family(cf.family), cfg.read(cfg.cal_input), cf.grid, cf.tol)
        else:
            _skip(method, "only available for functional models")
            continue
        for eps in cfg.eps:
            alpha = level_alpha(target, eps, cfg.finite_sample).alpha
            contains = lambda points, _bases, target=target, alpha=alpha: target.family.contains(alpha, points,
                                                                                                 target.tol)
            reports.append(empirical_coverage(contains, data, data, eps, method, vectorized=True))
            reports.append(efficiency(level_set(target, eps, cfg.finite_sample), eps, cfg.pair_budget, cfg.seed,
                                      method))
    return reports


def _write_reports(cfg, rows, csv_text):
    if cfg.report_format == "csv":
        with open(cfg.out, "w", newline="") as handle:
            handle.write(csv_text)
    else:
        write_json(cfg.out, [asdict(row) for row in rows])
    print(f"Wrote {cfg.out}")


def cmd_coverage(cfg):
    """Empirical coverage and efficiency of the calibrated model and the comparison methods."""
    if cfg.model_path is None:
        raise DomainError("coverage needs --model")
    model = _load_any_model(cfg.model_path)
    if isinstance(model, CalibratedFamily):
        reports = _samples_reports(model, cfg)
    else:
        if cfg.truths is None:
            raise DomainError("coverage of a functional model needs --truths and --predictions")
        reports = _functional_reports(model, cfg)
    text, csv_text = compare_report(reports)
    print(text, end="")
    if cfg.out:
        _write_reports(cfg, merge_reports(reports), csv_text)


def cmd_compare(cfg):
    """Merge report CSV files into one table."""
    if not cfg.inputs:
        raise DomainError("compare needs at least one --input report")
    rows = [row for path in cfg.inputs for row in read_report_csv(path)]
    text, csv_text = compare_report(rows)
    print(text, end="")
    if cfg.out:
        _write_reports(cfg, merge_reports(rows), csv_text)


COMMANDS = {
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "coverage": cmd_coverage,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="zonoconform",
                                     description="Conformal prediction sets from nested zonotope families.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", help="CSV of samples or base points (repeat for compare).")
    common.add_argument("--truths", help="CSV of true outputs, one row per sample.")
    common.add_argument("--predictions", help="CSV of model predictions aligned with --truths.")
    common.add_argument("--cal-truths", help="Calibration truths for the comparison methods.")
    common.add_argument("--cal-predictions", help="Calibration predictions for the comparison methods.")
    common.add_argument("--cal-input", help="Calibration samples for the rotated_box comparison of a samples model.")
    common.add_argument("--fit", help="Fit file written by the fit command.")
    common.add_argument("--model", help="Model file written by the calibrate command.")
    common.add_argument("--method", choices=FIT_METHODS, default="rotated_box", help="Enclosing set fit.")
    common.add_argument("--depth", choices=DEPTH_METHODS, default="mahalanobis", help="Core point selection.")
    common.add_argument("--inflation", type=float, default=0.0, help="Relative margin on the fitted generators.")
    common.add_argument("--variance-fraction", type=float, default=DEFAULT_VARIANCE_FRACTION,
                        help="Energy fraction of kept SVD modes.")
    common.add_argument("--grid-size", type=int, default=None, help="Number of alpha levels.")
    common.add_argument("--trunc-inflation", type=float, default=DEFAULT_TRUNC_INFLATION,
                        help="Relative margin on the truncation box.")
    common.add_argument("--eps", default="0.1", help="Comma separated miscoverage levels.")
    common.add_argument("--finite-sample", action="store_true", help="Use the floor(eps(n+1)) quantile index.")
    common.add_argument("--seed", type=int, default=0, help="Seed for coordinate pair sampling.")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="Membership tolerance.")
    common.add_argument("--out", help="Output file.")
    common.add_argument("--envelope-out", help="CSV of per-output lower/upper envelopes (predict).")
    common.add_argument("--format", choices=REPORT_FORMATS, default="csv", help="Report format.")
    common.add_argument("--methods", default=None, help="Comma separated methods for coverage.")
    common.add_argument("--pair-budget", type=int, default=DEFAULT_PAIR_BUDGET,
                        help="Maximum coordinate pairs for projected areas.")
    common.add_argument("--header", action="store_true", help="Input CSV files start with a header line.")
    common.add_argument("--verbose", action="store_true", help="Log debug messages.")

    for name, func in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=func.__doc__.splitlines()[0])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format=LOG_FORMAT)
    start_time = time.perf_counter()
    try:
        cfg = RunConfig.from_args(args)
        COMMANDS[cfg.command](cfg)
    except (ZonoconformError, OSError) as err:
        message = " ".join(str(err).split())
        print(f"error: {message}", file=sys.stderr)
        return 2
    print(f"Total Time Elapsed: {time.perf_counter() - start_time:.6f} seconds.")
    return 0
