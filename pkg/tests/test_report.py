import json
import math

import numpy as np
import pytest
from scipy.special import ndtri

from factorlab.errors import DataError
from factorlab.ols import DesignSpec, cooks_distance, ols_fit
from factorlab.report import (
    PLOT_KINDS,
    PlotData,
    compare_models,
    heatmap_data,
    normal_quantile,
    parse_plot_csv,
    qq_plot_data,
    render_plot_csv,
    report_schema,
    residual_diagnostic_data,
    scatter_matrix_data,
    validate_report_json,
)
from factorlab.report import _fmt
from factorlab.series import ReturnSeries, correlation_matrix
from tests.conftest import random_panel


class TestNormalQuantile:
    def test_against_scipy_grid(self):
        for p in np.linspace(1e-6, 1 - 1e-6, 501):
            assert normal_quantile(float(p)) == pytest.approx(float(ndtri(p)), abs=1e-9)

    def test_extreme_tails_finite(self):
        for p in (1e-15, 1e-12, 1 - 1e-12):
            v = normal_quantile(p)
            assert np.isfinite(v)
            assert v == pytest.approx(float(ndtri(p)), abs=1e-8)

    def test_median_exact(self):
        assert normal_quantile(0.5) == 0.0

    def test_antisymmetry(self):
        for p in (0.01, 0.1, 0.25, 0.4):
            assert normal_quantile(p) == pytest.approx(-normal_quantile(1.0 - p), abs=1e-12)

    def test_domain_guard(self):
        for bad in (0.0, 1.0, -0.1, 1.3):
            with pytest.raises(DataError):
                normal_quantile(bad)


class TestQqPlot:
    def test_three_point_theoretical_quantiles(self):
        data = qq_plot_data(np.array([1.0, 5.0, 2.0]))
        theo = data.blocks["points"]["theoretical"]
        # plotting positions 1/6, 3/6, 5/6
        assert theo[1] == 0.0
        assert theo[2] == pytest.approx(0.9674215661017335, abs=1e-10)
        assert theo[0] == pytest.approx(-theo[2], abs=1e-12)

    def test_sample_standardized_and_sorted(self):
        rng = np.random.default_rng(1)
        e = rng.normal(3.0, 7.0, 200)
        data = qq_plot_data(e)
        z = data.blocks["points"]["sample"]
        assert np.all(np.diff(z) >= 0)
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std(ddof=1) == pytest.approx(1.0, rel=1e-12)

    def test_reference_line_through_quartile_pair(self):
        rng = np.random.default_rng(2)
        e = rng.normal(size=101)
        data = qq_plot_data(e)
        (slope, intercept), = data.reference_lines
        z = np.sort((e - e.mean()) / e.std(ddof=1))
        q1s, q3s = np.percentile(z, [25, 75])
        q1t, q3t = normal_quantile(0.25), normal_quantile(0.75)
        assert slope == pytest.approx((q3s - q1s) / (q3t - q1t), rel=1e-12)
        assert q1s == pytest.approx(slope * q1t + intercept, rel=1e-12)

    def test_guards(self):
        with pytest.raises(DataError):
            qq_plot_data(np.array([1.0, 2.0]))
        with pytest.raises(DataError, match="zero variance"):
            qq_plot_data(np.full(10, 3.3))


class TestResidualDiagnostics:
    @pytest.fixture()
    def fit(self):
        return ols_fit(random_panel(50), DesignSpec("Y", ["A", "B", "C"]))

    def test_kinds_and_order(self, fit):
        kinds = [d.kind for d in residual_diagnostic_data(fit)]
        assert kinds == ["residuals-vs-fitted", "scale-location",
                        "residuals-vs-leverage", "cooks-bar"]

    def test_residuals_vs_fitted_zero_line(self, fit):
        rvf = residual_diagnostic_data(fit)[0]
        assert rvf.reference_lines == [(0.0, 0.0)]
        np.testing.assert_array_equal(rvf.blocks["points"]["fitted"], fit.fitted)
        np.testing.assert_array_equal(rvf.blocks["points"]["residual"], fit.residuals)

    def test_scale_location_values(self, fit):
        scale = residual_diagnostic_data(fit)[1]
        std = fit.residuals / (fit.resid_se * np.sqrt(1.0 - fit.leverage))
        np.testing.assert_allclose(scale.blocks["points"]["sqrtAbsStdResid"],
                                   np.sqrt(np.abs(std)), rtol=1e-12)

    def test_cooks_contours_satisfy_equation(self, fit):
        rvl = residual_diagnostic_data(fit)[2]
        p = fit.n_params
        for level in (0.5, 1.0):
            block = rvl.blocks[f"cooks-{level}-upper"]
            h, r = block["leverage"], block["stdResid"]
            # r^2 h / (p (1 - h)) = D along the contour
            np.testing.assert_allclose(r * r * h / (p * (1.0 - h)), level, rtol=1e-10)
            lower = rvl.blocks[f"cooks-{level}-lower"]
            np.testing.assert_array_equal(lower["stdResid"], -r)

    def test_flagged_match_threshold(self, fit):
        plots = residual_diagnostic_data(fit)
        bars = plots[3]
        d = cooks_distance(fit)
        expected = [int(i) for i in np.flatnonzero(d > 4.0 / fit.n)]
        assert bars.flagged == expected
        assert plots[2].flagged == expected
        (slope, thresh), = bars.reference_lines
        assert slope == 0.0 and thresh == pytest.approx(4.0 / fit.n, rel=1e-12)
        assert bars.meta["threshold"] == repr(4.0 / fit.n)


class TestScatterMatrix:
    def test_blocks_and_histograms(self):
        rng = np.random.default_rng(3)
        series = {"A": rng.normal(size=120), "B": rng.normal(size=120),
                  "C": rng.normal(size=120)}
        data = scatter_matrix_data(series)
        assert set(data.blocks) == {
            "pair:A|B", "pair:A|C", "pair:B|C", "hist:A", "hist:B", "hist:C"}
        np.testing.assert_array_equal(data.blocks["pair:A|B"]["x"], series["A"])
        np.testing.assert_array_equal(data.blocks["pair:A|B"]["y"], series["B"])
        for label in "ABC":
            h = data.blocks[f"hist:{label}"]
            assert h["count"].sum() == 120
            assert np.all(h["binRight"] > h["binLeft"])
        assert data.meta["labels"] == "A,B,C"

    def test_constant_series_range_widened(self):
        data = scatter_matrix_data({"A": np.full(40, 2.0), "B": np.arange(40.0)})
        h = data.blocks["hist:A"]
        assert h["binLeft"][0] == pytest.approx(1.5)
        assert h["binRight"][-1] == pytest.approx(2.5)
        assert h["count"].sum() == 40

    def test_needs_two_series(self):
        with pytest.raises(DataError, match="at least 2"):
            scatter_matrix_data({"A": np.arange(10.0)})


class TestHeatmap:
    def test_cells_equal_matrix(self):
        rng = np.random.default_rng(4)
        series = [ReturnSeries(lab, rng.normal(size=60)) for lab in ("X", "Y", "Z")]
        corr = correlation_matrix(series)
        data = heatmap_data(corr)
        cells = data.blocks["cells"]
        assert cells["value"].size == 9
        for r, c, v in zip(cells["row"], cells["col"], cells["value"]):
            assert v == corr.values[int(r), int(c)]
        assert data.meta["labels"] == "X,Y,Z"


class TestPlotCsvRoundTrip:
    def _all_plot_data(self):
        fit = ols_fit(random_panel(60), DesignSpec("Y", ["A", "B"]))
        rng = np.random.default_rng(5)
        series = {"P": rng.normal(size=60), "Q": rng.normal(size=60)}
        corr = correlation_matrix([ReturnSeries(k, v) for k, v in series.items()])
        plots = [qq_plot_data(fit.residuals)]
        plots += residual_diagnostic_data(fit)
        plots.append(scatter_matrix_data(series))
        plots.append(heatmap_data(corr))
        return plots

    def test_exact_round_trip_every_kind(self):
        for data in self._all_plot_data():
            back = parse_plot_csv(render_plot_csv(data))
            assert back.equals(data), f"round trip broke for kind {data.kind}"
        assert {d.kind for d in self._all_plot_data()} == set(PLOT_KINDS)

    def test_json_round_trip(self):
        for data in self._all_plot_data():
            back = PlotData.from_json_dict(data.to_json_dict())
            assert back.equals(data)

    def test_negative_and_tiny_floats_survive(self):
        data = PlotData(kind="qq", blocks={"points": {
            "theoretical": np.array([-1e-300, 0.0, 5e-324]),
            "sample": np.array([0.1 + 0.2, -0.0, 1e17]),
        }})
        back = parse_plot_csv(render_plot_csv(data))
        assert back.equals(data)

    def test_unknown_kind_rejected(self):
        with pytest.raises(DataError, match="unknown plot kind"):
            PlotData(kind="pie", blocks={"points": {"x": np.arange(3.0)}})

    def test_nan_rejected(self):
        with pytest.raises(DataError, match="NaN"):
            PlotData(kind="qq", blocks={"points": {"x": np.array([1.0, float("nan")])}})

    def test_ragged_block_rejected(self):
        with pytest.raises(DataError, match="differ in length"):
            PlotData(kind="qq", blocks={"points": {
                "x": np.arange(3.0), "y": np.arange(4.0)}})

    def test_malformed_csv_rejected(self):
        with pytest.raises(DataError, match="missing its kind"):
            parse_plot_csv("# block=points\nx\n1.0\n")
        with pytest.raises(DataError, match="outside any block"):
            parse_plot_csv("# kind=qq\n1.0,2.0\n")


class TestCompareModels:
    def _fits(self):
        data_a = random_panel(31, n=80, labels=("Y", "A", "B"))
        fit_a = ols_fit(data_a, DesignSpec("Y", ["A", "B"]))
        data_b = random_panel(32, n=80, labels=("Y", "A", "B"))
        fit_b = ols_fit(data_b, DesignSpec("Y", ["A", "B"]))
        return fit_a, fit_b

    def test_structure_and_values(self):
        fit_a, fit_b = self._fits()
        doc = compare_models(fit_a, fit_b, factor_vif={"A": 1.1, "B": 1.2})
        assert doc["terms"] == fit_a.terms
        assert doc["rSquared"]["delta"] == pytest.approx(
            fit_b.r_squared - fit_a.r_squared, rel=1e-12)
        assert doc["vif"]["factors"] == {"A": 1.1, "B": 1.2}
        assert doc["vif"]["innovations"] is None
        assert isinstance(doc["heavyTailAdvisory"], bool)

    def test_heavy_tail_advisory_fires(self):
        rng = np.random.default_rng(33)
        n = 200
        a = rng.normal(size=n)
        fat = rng.standard_t(2, size=n) * 3.0
        y = a + fat
        data = {"Y": y, "A": a}
        fit_fat = ols_fit(data, DesignSpec("Y", ["A"]))
        doc = compare_models(fit_fat, fit_fat)
        assert doc["heavyTailAdvisory"] is True

    def test_term_mismatch_rejected(self):
        data = random_panel(34, n=50, labels=("Y", "A", "B"))
        fit1 = ols_fit(data, DesignSpec("Y", ["A", "B"]))
        fit2 = ols_fit(data, DesignSpec("Y", ["A"]))
        with pytest.raises(DataError, match="terms differ"):
            compare_models(fit1, fit2)


class TestFormatting:
    def test_round_half_behavior(self):
        assert _fmt(0.5043, 3) == "0.504"
        assert _fmt(0.50449, 3) == "0.504"
        assert _fmt(1.2345678, 4) == "1.2346"

    def test_negative_zero_normalized(self):
        assert _fmt(-0.0001, 3) == "0.000"
        assert _fmt(-0.0, 3) == "0.000"
        assert _fmt(-0.001, 3) == "-0.001"


class TestReportDocument:
    def test_schema_loads(self):
        schema = report_schema()
        assert schema["$schema"].startswith("https://json-schema.org")
        assert set(schema["required"]) == {
            "meta", "summaryStats", "correlations", "garchFits", "factorModel",
            "innovationModel", "tests", "backward", "comparison", "plots"}

    def test_pipeline_report_validates(self, pipeline_dir):
        doc = json.loads((pipeline_dir / "report.json").read_text())
        validate_report_json(doc)  # must not raise

    def test_missing_section_rejected(self, pipeline_dir):
        doc = json.loads((pipeline_dir / "report.json").read_text())
        del doc["comparison"]
        with pytest.raises(DataError, match="schema"):
            validate_report_json(doc)

    def test_unknown_top_level_key_rejected(self, pipeline_dir):
        doc = json.loads((pipeline_dir / "report.json").read_text())
        doc["extras"] = {}
        with pytest.raises(DataError, match="schema"):
            validate_report_json(doc)


class TestRenderedTables:
    def test_files_written(self, pipeline_dir):
        for i in range(1, 8):
            assert (pipeline_dir / "tables" / f"table{i}.csv").exists()
        assert (pipeline_dir / "report.json").exists()

    def test_coefficient_table_header(self, pipeline_dir):
        lines = (pipeline_dir / "tables" / "table3.csv").read_text().splitlines()
        assert lines[0] == "term,Coefficients,Standard Error,t Stat,P-value"
        assert lines[1].startswith("Intercept,")
        assert len(lines) == 5  # intercept + three factors

    def test_stats_table_rows(self, pipeline_dir):
        lines = (pipeline_dir / "tables" / "table4.csv").read_text().splitlines()
        assert lines[0] == "Regression Statistics,"
        assert [ln.split(",")[0] for ln in lines[1:]] == [
            "Multiple R", "R Square", "Adjusted R Square", "Standard Error"]

    def test_summary_table_four_decimals(self, pipeline_dir):
        lines = (pipeline_dir / "tables" / "table1.csv").read_text().splitlines()
        assert lines[1].startswith("Mean,")
        for cell in lines[1].split(",")[1:]:
            assert len(cell.split(".")[1]) == 4

    def test_correlation_tables_three_decimals(self, pipeline_dir):
        for name in ("table2.csv", "table5.csv"):
            lines = (pipeline_dir / "tables" / name).read_text().splitlines()
            labels = lines[0].split(",")[1:]
            assert lines[1].split(",")[1] == "1.000"
            assert len(lines) == len(labels) + 1

    def test_innovation_tables_four_decimals(self, pipeline_dir):
        lines = (pipeline_dir / "tables" / "table6.csv").read_text().splitlines()
        cell = lines[1].split(",")[1]
        assert len(cell.split(".")[1]) == 4
