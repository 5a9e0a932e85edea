import logging

import numpy as np
import pytest

from zonoconform.baselines import EllipsoidSet, IntervalBand
from zonoconform.calibration import calibrate, level_set
from zonoconform.errors import DomainError
from zonoconform.eval import (
    REPORT_COLUMNS,
    CoverageReport,
    EfficiencyReport,
    box_family,
    compare_report,
    compute_time,
    coordinate_pairs,
    efficiency,
    empirical_coverage,
    merge_reports,
    parse_report_csv,
    read_report_csv,
    rotated_box_model,
    sci_format,
)
from zonoconform.functional import FunctionalModelBuilder, build_model, contains_functions, predict
from zonoconform.sets import NestedZonotopeFamily, Zonotope, members


class TestCoverage:
    def test_always_and_never(self):
        F = np.zeros((20, 3))
        full = empirical_coverage(lambda f, b: True, F, F, 0.1)
        empty = empirical_coverage(lambda f, b: False, F, F, 0.1, method="modulation")
        assert (full.coverage, full.covered, full.mc_stderr) == (1.0, 20, 0.0)
        assert (empty.coverage, empty.method) == (0.0, "modulation")

    def test_unbiased_estimate(self, rng):
        F = np.zeros((100000, 1))
        report = empirical_coverage(lambda f, b: rng.random(f.shape[0]) < 0.3, F, F, 0.7, vectorized=True)
        assert abs(report.coverage - 0.3) < 4.0 * report.mc_stderr
        assert report.mc_stderr == pytest.approx(np.sqrt(0.21 / 100000), rel=0.01)

    def test_rejects_empty_and_mismatched_rows(self):
        with pytest.raises(DomainError, match="at least one"):
            empirical_coverage(lambda f, b: True, np.zeros((0, 3)), np.zeros((0, 3)), 0.1)
        with pytest.raises(DomainError, match="differ"):
            empirical_coverage(lambda f, b: True, np.zeros((4, 3)), np.zeros((5, 3)), 0.1)

    def test_note_is_carried(self):
        F = np.zeros((3, 2))
        assert empirical_coverage(lambda f, b: True, F, F, 0.1, note="svd-coordinates").note == "svd-coordinates"


class TestEfficiency:
    WIDTHS = np.array([1.0, 2.0, 3.0, 4.0])

    def test_singleton_has_zero_area(self):
        report = efficiency(Zonotope(np.zeros(3), np.zeros((3, 0))), 0.1)
        assert report.mean_projected_area == 0.0
        assert report.pairs_sampled == 3

    def test_box_and_band_agree(self):
        band = IntervalBand(np.zeros(4), self.WIDTHS, 0.1)
        box = Zonotope(self.WIDTHS / 2.0, np.diag(self.WIDTHS / 2.0))
        assert efficiency(band, 0.1, method="modulation").mean_projected_area == pytest.approx(35.0 / 6.0)
        assert efficiency(box, 0.1).mean_projected_area == pytest.approx(35.0 / 6.0)

    def test_one_dimensional_set(self, caplog):
        with caplog.at_level(logging.WARNING, logger="zonoconform.eval"):
            report = efficiency(Zonotope([0.0], [[1.0]]), 0.1)
        assert report.mean_projected_area == 0.0 and report.pairs_sampled == 0
        assert "no 2D projections" in caplog.text

    def test_area_shrinks_with_eps(self, square_family, rng):
        cf = calibrate(square_family, rng.uniform(-1.0, 1.0, size=(400, 2)))
        areas = [efficiency(level_set(cf, eps), eps).mean_projected_area for eps in (0.05, 0.2, 0.5, 0.9)]
        assert areas == sorted(areas, reverse=True)
        assert areas[0] > areas[-1]

    def test_prediction_set_and_ellipsoid(self, small_errors):
        train, cal, _ = small_errors
        model = build_model(cal, training_errors=train)
        pset = predict(model, np.zeros(32), [0.1, 0.3])
        wide = efficiency(pset, 0.1, pair_budget=50, seed=2)
        narrow = efficiency(pset, 0.3, pair_budget=50, seed=2)
        assert wide.pairs_sampled == 50
        assert wide.mean_projected_area >= narrow.mean_projected_area
        ellipse = efficiency(EllipsoidSet(np.zeros(2), np.eye(2), 1.0), 0.1, method="elliptical")
        assert ellipse.mean_projected_area == pytest.approx(np.pi)

    def test_unknown_set_type(self):
        with pytest.raises(DomainError, match="cannot measure"):
            efficiency(np.zeros(3), 0.1)


class TestPairs:
    def test_all_pairs_within_budget(self):
        pairs = coordinate_pairs(4)
        assert pairs.shape == (6, 2)
        assert np.all(pairs[:, 0] < pairs[:, 1])

    def test_seeded_sample(self):
        pairs = coordinate_pairs(100, pair_budget=50, seed=1)
        assert pairs.shape == (50, 2)
        assert len({tuple(p) for p in pairs}) == 50
        np.testing.assert_array_equal(pairs, coordinate_pairs(100, pair_budget=50, seed=1))

    def test_budget_must_be_positive(self):
        with pytest.raises(DomainError, match="budget"):
            coordinate_pairs(4, pair_budget=0)


def sample_reports():
    return [
        CoverageReport("zonotope", 0.2, 100, 81, 0.81, 0.039),
        CoverageReport("modulation", 0.1, 100, 92, 0.92, 0.027),
        EfficiencyReport("zonotope", 0.1, 1.25e-3, 512, 0),
        CoverageReport("zonotope", 0.1, 100, 90, 0.9, 0.03, note="svd-coordinates"),
    ]


class TestReports:
    def test_empty_report(self):
        text, csv_text = compare_report([])
        assert csv_text == ",".join(REPORT_COLUMNS) + "\n"
        assert text.splitlines()[0].startswith("method")

    def test_rows_are_merged_and_sorted(self):
        rows = merge_reports(sample_reports())
        assert [(row.method, row.eps) for row in rows] == [("modulation", 0.1), ("zonotope", 0.1), ("zonotope", 0.2)]
        merged = rows[1]
        assert merged.coverage == 0.9 and merged.mean_projected_area == 1.25e-3
        assert merged.note == "svd-coordinates"
        assert rows[0].mean_projected_area is None

    def test_csv_round_trip(self, tmp_path):
        _, csv_text = compare_report(sample_reports())
        assert parse_report_csv(csv_text) == merge_reports(sample_reports())
        path = tmp_path / "report.csv"
        path.write_text(csv_text)
        assert read_report_csv(str(path)) == merge_reports(sample_reports())
        assert merge_reports(parse_report_csv(csv_text)) == merge_reports(sample_reports())

    def test_text_table(self):
        text, _ = compare_report(sample_reports())
        lines = text.splitlines()
        assert "coverage (%)" in lines[0]
        assert "90.00" in lines[2]
        assert "1.25x10^-3" in lines[2]
        assert "-" in lines[1]

    def test_counts_are_written_as_integers(self):
        _, csv_text = compare_report(sample_reports())
        zonotope_row = csv_text.splitlines()[2]
        assert zonotope_row.startswith("zonotope,0.1,100,90,")
        assert zonotope_row.endswith(",512,0,svd-coordinates")
        assert csv_text.splitlines()[1].startswith("modulation,0.1,100,92,")

    def test_json_rows_hold_plain_numbers(self):
        row = merge_reports(sample_reports())[1]
        assert type(row.n_test) is int and type(row.coverage) is float and type(row.eps) is float

    def test_large_seed_is_kept_exactly(self):
        seed = 2 ** 64 - 1
        reports = [CoverageReport("zonotope", 0.1, 100, 90, 0.9, 0.03),
                   EfficiencyReport("zonotope", 0.1, 1.25e-3, 512, seed)]
        assert merge_reports(reports)[0].seed == seed
        _, csv_text = compare_report(reports)
        assert parse_report_csv(csv_text)[0].seed == seed

    def test_malformed_csv(self):
        with pytest.raises(DomainError, match="header"):
            parse_report_csv("a,b\n")
        header = ",".join(REPORT_COLUMNS)
        with pytest.raises(DomainError, match="cells"):
            parse_report_csv(header + "\nzonotope,0.1\n")
        with pytest.raises(DomainError, match="n_test"):
            parse_report_csv(header + "\nzonotope,0.1,many,,,,,,,\n")

    def test_unknown_report_type(self):
        with pytest.raises(DomainError, match="cannot report"):
            merge_reports([object()])


@pytest.mark.parametrize(
    "value, expected",
    [(12345.6, "1.23x10^4"), (0.000999999, "1.00x10^-3"), (1.0, "1.00x10^0"), (-250.0, "-2.50x10^2"),
     (0.0, "0.00"), (None, "-")],
)
def test_sci_format(value, expected):
    assert sci_format(value) == expected


def test_compute_time():
    calls = []
    elapsed = compute_time(lambda: calls.append(1), trials=7)
    assert len(calls) == 7
    assert elapsed >= 0.0


class TestRotatedBox:
    def test_box_family_encloses_the_base(self, hexagon, rng):
        family = NestedZonotopeFamily(hexagon, hexagon.center)
        box = box_family(family)
        generators = box.base.generators
        np.testing.assert_array_equal(generators, np.diag(np.diag(generators)))
        assert members(box.base, hexagon.sample(500, rng)).all()

    def test_recalibrated_model(self, small_errors):
        train, cal, test = small_errors
        model = build_model(cal, training_errors=train)
        boxed = rotated_box_model(model, cal)
        assert boxed.svd is model.svd
        assert boxed.calibrated.n == model.calibrated.n
        generators = boxed.calibrated.family.base.generators
        np.testing.assert_array_equal(generators, np.diag(np.diag(generators)))
        covered = contains_functions(boxed, 0.1, np.zeros_like(test), test)
        assert covered.dtype == bool and covered.shape == (test.shape[0],)

    def test_degenerate_model_is_unchanged(self):
        model = FunctionalModelBuilder().reduce(np.zeros((3, 4))).build()
        assert rotated_box_model(model, np.zeros((3, 4))) is model
