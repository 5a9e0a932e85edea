import csv
import json

import numpy as np
import pytest

from zonoconform.calibration import CalibratedFamily, level_alpha
from zonoconform.cli import main
from zonoconform.eval import read_report_csv
from zonoconform.synthetic import correlated_gaussian, functional_surrogate
from zonoconform.util import write_matrix_csv


@pytest.fixture
def gaussian_csv(tmp_path):
    path = tmp_path / "gaussian.csv"
    write_matrix_csv(str(path), correlated_gaussian(500, seed=31))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_json_file(path):
    with open(path) as handle:
        return json.load(handle)


def fit_functional(capsys, tmp_path, paths, *extra):
    fit_path = str(tmp_path / "fit.json")
    model_path = str(tmp_path / "model.json")
    code, _, err = run(capsys, "fit", "--truths", paths["train"][0], "--predictions", paths["train"][1],
                       "--out", fit_path, *extra)
    assert code == 0, err
    code, out, err = run(capsys, "calibrate", "--fit", fit_path, "--truths", paths["cal"][0],
                         "--predictions", paths["cal"][1], "--out", model_path)
    assert code == 0, err
    return model_path, out


class TestSamples:
    def test_fit_gaussian(self, capsys, tmp_path, gaussian_csv):
        out_path = str(tmp_path / "fit.json")
        code, out, _ = run(capsys, "fit", "--input", gaussian_csv, "--out", out_path)
        assert code == 0
        assert "Generators: 2" in out
        assert "Total Time Elapsed" in out
        payload = read_json_file(out_path)
        assert payload["kind"] == "samples_fit"
        assert len(payload["family"]["base"]["generators"]) == 2

    def test_fit_is_deterministic(self, capsys, tmp_path, gaussian_csv):
        first, second = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        for path in (first, second):
            assert run(capsys, "fit", "--input", gaussian_csv, "--method", "convex_hull", "--out", path)[0] == 0
        with open(first) as a, open(second) as b:
            assert a.read() == b.read()

    def test_convex_hull_in_seven_dimensions(self, capsys, tmp_path, rng):
        path = tmp_path / "wide.csv"
        write_matrix_csv(str(path), rng.normal(size=(60, 7)))
        code, _, err = run(capsys, "fit", "--input", str(path), "--method", "convex_hull",
                           "--out", str(tmp_path / "fit.json"))
        assert code == 2
        assert "error:" in err
        assert "rotated_box" in err

    def test_calibrate_and_predict(self, capsys, tmp_path, gaussian_csv):
        fit_path, model_path, pred_path = (str(tmp_path / name) for name in ("fit.json", "model.json", "pred.json"))
        assert run(capsys, "fit", "--input", gaussian_csv, "--out", fit_path)[0] == 0
        code, out, _ = run(capsys, "calibrate", "--fit", fit_path, "--input", gaussian_csv,
                           "--eps", "0.1,0.2", "--out", model_path)
        assert code == 0
        assert "eps=0.2" in out
        model = read_json_file(model_path)
        assert model["kind"] == "samples" and model["n"] == 500 and len(model["scores"]) == 500

        assert run(capsys, "predict", "--model", model_path, "--eps", "0.1,0.2", "--out", pred_path)[0] == 0
        predictions = read_json_file(pred_path)["predictions"]
        assert len(predictions) == 1
        assert predictions[0]["base_point"] == model["family"]["core"]
        assert predictions[0]["eps"] == [0.1, 0.2]

    def test_coarser_grid_gives_larger_sets(self, capsys, tmp_path, gaussian_csv):
        fit_path = str(tmp_path / "fit.json")
        assert run(capsys, "fit", "--input", gaussian_csv, "--out", fit_path)[0] == 0
        alphas = []
        for size in (11, 1001):
            model_path = str(tmp_path / f"model{size}.json")
            assert run(capsys, "calibrate", "--fit", fit_path, "--input", gaussian_csv,
                       "--grid-size", str(size), "--out", model_path)[0] == 0
            cf = CalibratedFamily.from_dict(read_json_file(model_path))
            assert cf.grid.size == size
            alphas.append(level_alpha(cf, 0.1).alpha)
        assert alphas[0] <= alphas[1]

    def test_samples_coverage_skips_functional_methods(self, capsys, tmp_path, gaussian_csv):
        fit_path, model_path = str(tmp_path / "fit.json"), str(tmp_path / "model.json")
        assert run(capsys, "fit", "--input", gaussian_csv, "--out", fit_path)[0] == 0
        assert run(capsys, "calibrate", "--fit", fit_path, "--input", gaussian_csv, "--out", model_path)[0] == 0
        code, out, _ = run(capsys, "coverage", "--model", model_path, "--input", gaussian_csv)
        assert code == 0
        assert "Skipping modulation" in out
        assert "zonotope" in out

    def test_samples_coverage_recalibrates_the_box(self, capsys, tmp_path, gaussian_csv):
        fit_path, model_path = str(tmp_path / "fit.json"), str(tmp_path / "model.json")
        cal_path, report_path = str(tmp_path / "cal.csv"), str(tmp_path / "report.csv")
        write_matrix_csv(cal_path, correlated_gaussian(400, seed=32))
        assert run(capsys, "fit", "--input", gaussian_csv, "--out", fit_path)[0] == 0
        assert run(capsys, "calibrate", "--fit", fit_path, "--input", gaussian_csv, "--out", model_path)[0] == 0
        code, out, err = run(capsys, "coverage", "--model", model_path, "--input", gaussian_csv,
                             "--cal-input", cal_path, "--methods", "zonotope,rotated_box", "--eps", "0.1,0.2",
                             "--out", report_path)
        assert code == 0, err
        assert "Skipping rotated_box" not in out
        rows = read_report_csv(report_path)
        assert [(row.method, row.eps) for row in rows] == [
            ("rotated_box", 0.1), ("rotated_box", 0.2), ("zonotope", 0.1), ("zonotope", 0.2)]
        assert all(row.n_test == 500 for row in rows)

    def test_samples_coverage_without_calibration_input(self, capsys, tmp_path, gaussian_csv):
        fit_path, model_path = str(tmp_path / "fit.json"), str(tmp_path / "model.json")
        assert run(capsys, "fit", "--input", gaussian_csv, "--out", fit_path)[0] == 0
        assert run(capsys, "calibrate", "--fit", fit_path, "--input", gaussian_csv, "--out", model_path)[0] == 0
        code, out, _ = run(capsys, "coverage", "--model", model_path, "--input", gaussian_csv,
                           "--methods", "zonotope,rotated_box")
        assert code == 0
        assert "Skipping rotated_box: samples models need --cal-input" in out

    def test_fit_with_constant_column(self, capsys, tmp_path):
        data = correlated_gaussian(200, seed=33)
        data = np.column_stack([data, np.full(200, 4.0)])
        path, fit_path = str(tmp_path / "flat.csv"), str(tmp_path / "fit.json")
        write_matrix_csv(path, data)
        code, _, err = run(capsys, "fit", "--input", path, "--out", fit_path)
        assert code == 0, err
        assert read_json_file(fit_path)["family"]["core"][2] == 4.0


class TestFunctional:
    def test_full_variance_has_empty_truncation_box(self, capsys, tmp_path, surrogate_csvs):
        model_path, out = fit_functional(capsys, tmp_path, surrogate_csvs, "--variance-fraction", "1.0")
        assert "truncated modes: 0" in out
        model = read_json_file(model_path)
        assert model["trunc_box"] == {"center": [], "radius": []}
        assert (tmp_path / "model.V.csv").exists()

    def test_predict_with_envelopes(self, capsys, tmp_path, surrogate_csvs):
        model_path, _ = fit_functional(capsys, tmp_path, surrogate_csvs)
        pred_path, env_path = str(tmp_path / "pred.json"), str(tmp_path / "env.csv")
        code, _, err = run(capsys, "predict", "--model", model_path, "--input", surrogate_csvs["test"][1],
                           "--eps", "0.1,0.2", "--out", pred_path, "--envelope-out", env_path)
        assert code == 0, err
        assert len(read_json_file(pred_path)["predictions"]) == 80
        with open(env_path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0][:4] == ["row", "eps", "bound", "y0"]
        assert len(rows) == 1 + 80 * 2 * 2
        lower = np.array(rows[1][3:], dtype=float)
        upper = np.array(rows[2][3:], dtype=float)
        assert rows[1][2] == "lower" and rows[2][2] == "upper"
        assert np.all(lower <= upper)

    def test_degenerate_errors(self, capsys, tmp_path):
        predictions = functional_surrogate(30, seed=41, length=8)[1]
        path = str(tmp_path / "same.csv")
        write_matrix_csv(path, predictions)
        fit_path, model_path, pred_path = (str(tmp_path / name) for name in ("fit.json", "model.json", "pred.json"))
        code, out, _ = run(capsys, "fit", "--truths", path, "--predictions", path, "--out", fit_path)
        assert code == 0 and "degenerate" in out
        code, out, _ = run(capsys, "calibrate", "--fit", fit_path, "--truths", path, "--predictions", path,
                           "--out", model_path)
        assert code == 0 and "Degenerate model" in out
        assert run(capsys, "predict", "--model", model_path, "--input", path, "--out", pred_path)[0] == 0
        first = read_json_file(pred_path)["predictions"][0]
        assert first["sets"][0]["generators"] == []
        assert first["sets"][0]["center"] == first["base_point"]

    def test_coverage_report(self, capsys, tmp_path, surrogate_csvs):
        model_path, _ = fit_functional(capsys, tmp_path, surrogate_csvs)
        report_path = str(tmp_path / "report.csv")
        code, out, err = run(capsys, "coverage", "--model", model_path, "--truths", surrogate_csvs["test"][0],
                             "--predictions", surrogate_csvs["test"][1], "--cal-truths", surrogate_csvs["cal"][0],
                             "--cal-predictions", surrogate_csvs["cal"][1], "--eps", "0.1,0.2",
                             "--out", report_path)
        assert code == 0, err
        assert "coverage (%)" in out
        rows = read_report_csv(report_path)
        assert {row.method for row in rows} == {"zonotope", "rotated_box", "modulation", "elliptical"}
        assert all(row.n_test == 80 and row.pairs_sampled == 120 for row in rows)
        assert all(row.note == "svd-coordinates" for row in rows if row.method == "elliptical")

    def test_coverage_without_calibration_files(self, capsys, tmp_path, surrogate_csvs):
        model_path, _ = fit_functional(capsys, tmp_path, surrogate_csvs)
        code, out, _ = run(capsys, "coverage", "--model", model_path, "--truths", surrogate_csvs["test"][0],
                           "--predictions", surrogate_csvs["test"][1], "--format", "json",
                           "--out", str(tmp_path / "report.json"))
        assert code == 0
        assert "Skipping rotated_box" in out and "Skipping elliptical" in out
        payload = read_json_file(str(tmp_path / "report.json"))
        assert [row["method"] for row in payload] == ["zonotope"]

    def test_elliptical_is_skipped_above_its_dimension_limit(self, capsys, tmp_path):
        paths = {}
        for name, n, seed in (("train", 150, 51), ("cal", 120, 52), ("test", 40, 53)):
            truths, predictions = functional_surrogate(n, seed=seed, length=40, modes=3)
            paths[name] = (str(tmp_path / f"{name}_t.csv"), str(tmp_path / f"{name}_p.csv"))
            write_matrix_csv(paths[name][0], truths)
            write_matrix_csv(paths[name][1], predictions)
        model_path, _ = fit_functional(capsys, tmp_path, paths, "--variance-fraction", "1.0")
        code, out, _ = run(capsys, "coverage", "--model", model_path, "--truths", paths["test"][0],
                           "--predictions", paths["test"][1], "--cal-truths", paths["cal"][0],
                           "--cal-predictions", paths["cal"][1], "--methods", "zonotope,elliptical")
        assert code == 0
        assert "Skipping elliptical" in out
        assert "exceed the elliptical limit" in out

    def test_compare_merges_reports(self, capsys, tmp_path, surrogate_csvs):
        model_path, _ = fit_functional(capsys, tmp_path, surrogate_csvs)
        reports = []
        for method in ("zonotope", "modulation"):
            path = str(tmp_path / f"{method}.csv")
            code, _, err = run(capsys, "coverage", "--model", model_path, "--methods", method,
                               "--truths", surrogate_csvs["test"][0], "--predictions", surrogate_csvs["test"][1],
                               "--cal-truths", surrogate_csvs["cal"][0],
                               "--cal-predictions", surrogate_csvs["cal"][1], "--out", path)
            assert code == 0, err
            reports.append(path)
        merged_path = str(tmp_path / "merged.csv")
        code, out, _ = run(capsys, "compare", "--input", reports[1], "--input", reports[0], "--out", merged_path)
        assert code == 0
        assert [row.method for row in read_report_csv(merged_path)] == ["modulation", "zonotope"]


class TestErrors:
    @pytest.mark.parametrize("seed", ["-1", str(2 ** 64)])
    def test_seed_range(self, capsys, tmp_path, gaussian_csv, seed):
        code, _, err = run(capsys, "fit", "--input", gaussian_csv, "--seed", seed, "--out", str(tmp_path / "f.json"))
        assert code == 2
        assert "unsigned 64-bit" in err

    def test_malformed_csv(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,x\n")
        code, _, err = run(capsys, "fit", "--input", str(path), "--out", str(tmp_path / "f.json"))
        assert code == 2
        assert "row 2, column 2" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "fit", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "f.json"))
        assert code == 2
        assert "does not exist" in err

    def test_bad_eps(self, capsys, gaussian_csv):
        code, _, err = run(capsys, "fit", "--input", gaussian_csv, "--eps", "1.5", "--out", "unused.json")
        assert code == 2
        assert "eps" in err

    def test_unpaired_truths(self, capsys, gaussian_csv):
        code, _, err = run(capsys, "fit", "--truths", gaussian_csv, "--out", "unused.json")
        assert code == 2
        assert "together" in err

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            main([])
