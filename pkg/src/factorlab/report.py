"""Report assembly: plot-data sets, paper-layout tables, report.json.

Plot data is never rendered to images here. Each PlotData carries named
numeric blocks (points, histogram bins, contour curves), optional
slope/intercept reference lines and flagged observation indices, and
round-trips exactly through its CSV form: comment lines for kind,
metadata, reference lines and flags, then one header+rows section per
block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import jsonschema
import numpy as np

from .errors import DataError
from .diagnostics import durbin_watson, jarque_bera
from .ingest import FactorPanel
from .ols import OlsFit, cooks_distance, standardized_residuals
from .series import ArrayLike, CorrelationMatrix, _values

PLOT_KINDS = (
    "qq",
    "residuals-vs-fitted",
    "scale-location",
    "residuals-vs-leverage",
    "cooks-bar",
    "scatter-matrix",
    "heatmap",
)

_HIST_BINS = 20
_CONTOUR_LEVELS = (0.5, 1.0)
_CONTOUR_POINTS = 64


@dataclass
class PlotData:
    """One figure's worth of numbers, ready for any plotting frontend."""

    kind: str
    blocks: dict[str, dict[str, np.ndarray]]
    reference_lines: list[tuple[float, float]] = field(default_factory=list)
    flagged: list[int] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PLOT_KINDS:
            raise DataError(f"unknown plot kind {self.kind!r} (know {PLOT_KINDS})")
        if not self.blocks:
            raise DataError("plot data needs at least one block")
        for name, cols in self.blocks.items():
            if not cols:
                raise DataError(f"block {name!r} has no columns")
            sizes = set()
            for col, values in cols.items():
                arr = np.asarray(values, dtype=float)
                if np.any(np.isnan(arr)):
                    raise DataError(f"block {name!r} column {col!r} contains NaN")
                cols[col] = arr
                sizes.add(arr.size)
            if len(sizes) != 1:
                raise DataError(f"block {name!r} columns differ in length")
        self.flagged = [int(i) for i in self.flagged]

    def equals(self, other: "PlotData") -> bool:
        if (self.kind != other.kind or self.meta != other.meta
                or self.flagged != other.flagged
                or len(self.reference_lines) != len(other.reference_lines)
                or list(self.blocks) != list(other.blocks)):
            return False
        for (s0, i0), (s1, i1) in zip(self.reference_lines, other.reference_lines):
            if s0 != s1 or i0 != i1:
                return False
        for name in self.blocks:
            a, b = self.blocks[name], other.blocks[name]
            if list(a) != list(b):
                return False
            for col in a:
                if not np.array_equal(a[col], b[col]):
                    return False
        return True

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "meta": dict(self.meta),
            "blocks": {
                name: {col: [float(v) for v in values] for col, values in cols.items()}
                for name, cols in self.blocks.items()
            },
            "referenceLines": [[float(s), float(i)] for s, i in self.reference_lines],
            "flagged": list(self.flagged),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PlotData":
        return cls(
            kind=doc["kind"],
            blocks={
                name: {col: np.array(vals, dtype=float) for col, vals in cols.items()}
                for name, cols in doc["blocks"].items()
            },
            reference_lines=[(float(s), float(i)) for s, i in doc["referenceLines"]],
            flagged=[int(i) for i in doc["flagged"]],
            meta=dict(doc.get("meta", {})),
        )


def render_plot_csv(data: PlotData) -> str:
    """Serialize PlotData to CSV text; parse_plot_csv inverts it exactly."""
    lines = [f"# kind={data.kind}"]
    for key, value in data.meta.items():
        lines.append(f"# meta:{key}={value}")
    for slope, intercept in data.reference_lines:
        lines.append(f"# refline={slope!r},{intercept!r}")
    if data.flagged:
        lines.append("# flagged=" + ",".join(str(i) for i in data.flagged))
    for name, cols in data.blocks.items():
        lines.append(f"# block={name}")
        lines.append(",".join(cols))
        arrays = list(cols.values())
        for row in range(arrays[0].size):
            lines.append(",".join(repr(float(a[row])) for a in arrays))
    return "\n".join(lines) + "\n"


def parse_plot_csv(text: str) -> PlotData:
    kind = None
    meta: dict[str, str] = {}
    reference_lines: list[tuple[float, float]] = []
    flagged: list[int] = []
    blocks: dict[str, dict[str, np.ndarray]] = {}
    block_name = None
    header: list[str] | None = None
    rows: list[list[float]] = []

    def close_block() -> None:
        nonlocal header, rows
        if block_name is not None:
            if header is None:
                raise DataError(f"block {block_name!r} has no header")
            cols = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
            blocks[block_name] = {h: cols[:, i].copy() for i, h in enumerate(header)}
        header, rows = None, []

    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("kind="):
                kind = body[len("kind="):]
            elif body.startswith("meta:"):
                key, _, value = body[len("meta:"):].partition("=")
                meta[key] = value
            elif body.startswith("refline="):
                s, _, i = body[len("refline="):].partition(",")
                reference_lines.append((float(s), float(i)))
            elif body.startswith("flagged="):
                flagged = [int(i) for i in body[len("flagged="):].split(",") if i]
            elif body.startswith("block="):
                close_block()
                block_name = body[len("block="):]
            else:
                raise DataError(f"unrecognized comment line {line!r}")
            continue
        if block_name is None:
            raise DataError("data row outside any block")
        if header is None:
            header = [cell.strip() for cell in line.split(",")]
        else:
            rows.append([float(cell) for cell in line.split(",")])
    close_block()
    if kind is None:
        raise DataError("plot CSV is missing its kind line")
    return PlotData(kind=kind, blocks=blocks, reference_lines=reference_lines,
                    flagged=flagged, meta=meta)


# AS241 (PPND16) rational approximations for the standard normal inverse CDF
_A = (3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs: tuple, x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, absolute error below 1e-9."""
    if not 0.0 < p < 1.0:
        raise DataError(f"normal_quantile needs p in (0, 1) (got {p})")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = math.sqrt(-math.log(min(p, 1.0 - p)))
    if r <= 5.0:
        r -= 1.6
        value = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        value = _poly(_E, r) / _poly(_F, r)
    return value if q > 0 else -value


def qq_plot_data(residuals: ArrayLike) -> PlotData:
    """Normal QQ data for a residual series.

    Residuals are standardized to zero mean and unit sample sd, sorted,
    and paired with standard normal quantiles at plotting positions
    (i - 0.5) / n. The reference line passes through the quartile pair.
    """
    e = _values(residuals)
    if e.size < 3:
        raise DataError("qq_plot_data needs at least 3 residuals")
    if not np.all(np.isfinite(e)):
        raise DataError("qq_plot_data input contains non-finite values")
    sd = float(np.std(e, ddof=1))
    if sd == 0.0:
        raise DataError("qq_plot_data input has zero variance")
    z = np.sort((e - np.mean(e)) / sd)
    n = z.size
    theo = np.array([normal_quantile((i - 0.5) / n) for i in range(1, n + 1)])
    q1s, q3s = np.percentile(z, [25.0, 75.0])
    q1t, q3t = normal_quantile(0.25), normal_quantile(0.75)
    slope = (q3s - q1s) / (q3t - q1t)
    intercept = q1s - slope * q1t
    return PlotData(
        kind="qq",
        blocks={"points": {"theoretical": theo, "sample": z}},
        reference_lines=[(float(slope), float(intercept))],
    )


def residual_diagnostic_data(fit: OlsFit) -> list[PlotData]:
    """The four classic residual diagnostics as plot data.

    Residuals vs fitted, scale-location, residuals vs leverage with
    Cook's distance contours at 0.5 and 1.0, and a Cook's distance bar
    set. Observations with D_t > 4/n are flagged in the leverage and bar
    sets.
    """
    std_resid = standardized_residuals(fit)
    cooks = cooks_distance(fit)
    threshold = 4.0 / fit.n
    flagged = [int(i) for i in np.flatnonzero(cooks > threshold)]
    index = np.arange(fit.n, dtype=float)

    rvf = PlotData(
        kind="residuals-vs-fitted",
        blocks={"points": {"fitted": fit.fitted.copy(),
                           "residual": fit.residuals.copy(),
                           "index": index.copy()}},
        reference_lines=[(0.0, 0.0)],
    )
    scale = PlotData(
        kind="scale-location",
        blocks={"points": {"fitted": fit.fitted.copy(),
                           "sqrtAbsStdResid": np.sqrt(np.abs(std_resid)),
                           "index": index.copy()}},
    )

    h = fit.leverage
    p = fit.n_params
    h_lo = max(1e-3, 0.5 * float(np.min(h)))
    h_hi = min(0.999, 1.05 * float(np.max(h)))
    if h_hi <= h_lo:
        h_hi = min(0.999, h_lo + 1e-3)
    grid = np.linspace(h_lo, h_hi, _CONTOUR_POINTS)
    blocks = {"points": {"leverage": h.copy(), "stdResid": std_resid,
                         "index": index.copy()}}
    for level in _CONTOUR_LEVELS:
        r = np.sqrt(level * p * (1.0 - grid) / grid)
        blocks[f"cooks-{level}-upper"] = {"leverage": grid.copy(), "stdResid": r}
        blocks[f"cooks-{level}-lower"] = {"leverage": grid.copy(), "stdResid": -r}
    rvl = PlotData(kind="residuals-vs-leverage", blocks=blocks, flagged=list(flagged))

    bars = PlotData(
        kind="cooks-bar",
        blocks={"points": {"index": index.copy(), "cooks": cooks}},
        reference_lines=[(0.0, threshold)],
        flagged=list(flagged),
        meta={"threshold": repr(threshold)},
    )
    return [rvf, scale, rvl, bars]


def scatter_matrix_data(panel: FactorPanel | Mapping[str, np.ndarray]) -> PlotData:
    """All pairwise point sets plus 20-bin histogram counts per series."""
    cols = panel.series if isinstance(panel, FactorPanel) else dict(panel)
    labels = list(cols)
    if len(labels) < 2:
        raise DataError("scatter_matrix_data needs at least 2 series")
    blocks: dict[str, dict[str, np.ndarray]] = {}
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            blocks[f"pair:{a}|{b}"] = {
                "x": np.asarray(cols[a], dtype=float).copy(),
                "y": np.asarray(cols[b], dtype=float).copy(),
            }
    for label in labels:
        x = np.asarray(cols[label], dtype=float)
        lo, hi = float(np.min(x)), float(np.max(x))
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(x, bins=_HIST_BINS, range=(lo, hi))
        blocks[f"hist:{label}"] = {
            "binLeft": edges[:-1].copy(),
            "binRight": edges[1:].copy(),
            "count": counts.astype(float),
        }
    return PlotData(kind="scatter-matrix", blocks=blocks,
                    meta={"labels": ",".join(labels)})


def heatmap_data(corr: CorrelationMatrix) -> PlotData:
    """Correlation heatmap cells; values equal the matrix entries."""
    k = len(corr.labels)
    row, col, value = [], [], []
    for i in range(k):
        for j in range(k):
            row.append(float(i))
            col.append(float(j))
            value.append(float(corr.values[i, j]))
    return PlotData(
        kind="heatmap",
        blocks={"cells": {"row": np.array(row), "col": np.array(col),
                          "value": np.array(value)}},
        meta={"labels": ",".join(corr.labels)},
    )


def compare_models(
    factor_fit: OlsFit,
    innovation_fit: OlsFit,
    factor_vif: Mapping[str, float] | None = None,
    innovation_vif: Mapping[str, float] | None = None,
) -> dict:
    """Side-by-side record for the raw-factor and innovation regressions.

    Durbin-Watson and Jarque-Bera pairs are recomputed from the fits'
    residuals; VIF maps are passed in because a fit does not retain its
    design matrix. The heavy-tail advisory flag is set when either JB
    test rejects normality at the 1% level.
    """
    if factor_fit.terms != innovation_fit.terms:
        raise DataError(
            f"model terms differ: {factor_fit.terms} vs {innovation_fit.terms}")
    dw_f = durbin_watson(factor_fit.residuals)
    dw_i = durbin_watson(innovation_fit.residuals)
    jb_f = jarque_bera(factor_fit.residuals)
    jb_i = jarque_bera(innovation_fit.residuals)
    heavy = bool((jb_f.p_value is not None and jb_f.p_value < 0.01)
                 or (jb_i.p_value is not None and jb_i.p_value < 0.01))

    def _vif_doc(v: Mapping[str, float] | None) -> dict | None:
        if v is None:
            return None
        return {k: float(val) for k, val in v.items()}

    return {
        "terms": list(factor_fit.terms),
        "coefficients": {
            "factors": [float(v) for v in factor_fit.coefficients],
            "innovations": [float(v) for v in innovation_fit.coefficients],
        },
        "pValues": {
            "factors": [float(v) for v in factor_fit.p_values],
            "innovations": [float(v) for v in innovation_fit.p_values],
        },
        "rSquared": {
            "factors": float(factor_fit.r_squared),
            "innovations": float(innovation_fit.r_squared),
            "delta": float(innovation_fit.r_squared - factor_fit.r_squared),
        },
        "durbinWatson": {"factors": float(dw_f.statistic),
                         "innovations": float(dw_i.statistic)},
        "jarqueBera": {
            "factors": {"statistic": float(jb_f.statistic), "pValue": float(jb_f.p_value)},
            "innovations": {"statistic": float(jb_i.statistic), "pValue": float(jb_i.p_value)},
        },
        "vif": {"factors": _vif_doc(factor_vif), "innovations": _vif_doc(innovation_vif)},
        "heavyTailAdvisory": heavy,
    }


@dataclass
class AnalysisReport:
    """Everything the report stage writes, in JSON-ready sections."""

    meta: dict
    summary_stats: dict
    correlations: dict
    garch_fits: dict
    factor_model: dict
    innovation_model: dict
    tests: dict
    backward: dict
    comparison: dict
    plots: dict

    def to_json_dict(self) -> dict:
        return {
            "meta": self.meta,
            "summaryStats": self.summary_stats,
            "correlations": self.correlations,
            "garchFits": self.garch_fits,
            "factorModel": self.factor_model,
            "innovationModel": self.innovation_model,
            "tests": self.tests,
            "backward": self.backward,
            "comparison": self.comparison,
            "plots": self.plots,
        }


def report_schema() -> dict:
    text = resources.files("factorlab").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report_json(doc: dict) -> None:
    """Raise DataError if the document does not satisfy the shipped schema."""
    try:
        jsonschema.validate(doc, report_schema())
    except jsonschema.ValidationError as exc:
        raise DataError(f"report.json fails schema validation: {exc.message}") from None


def _fmt(value: float, decimals: int) -> str:
    s = f"{float(value):.{decimals}f}"
    if float(s) == 0.0:
        s = s.lstrip("-")
    return s


def _matrix_csv(labels: list[str], matrix: list[list[float]], decimals: int) -> str:
    lines = ["," + ",".join(labels)]
    for label, row in zip(labels, matrix):
        lines.append(label + "," + ",".join(_fmt(v, decimals) for v in row))
    return "\n".join(lines) + "\n"


def _coefficient_csv(model: dict, decimals: int) -> str:
    lines = ["term,Coefficients,Standard Error,t Stat,P-value"]
    for i, term in enumerate(model["terms"]):
        lines.append(",".join([
            term,
            _fmt(model["coefficients"][i], decimals),
            _fmt(model["standardErrors"][i], decimals),
            _fmt(model["tStats"][i], decimals),
            _fmt(model["pValues"][i], decimals),
        ]))
    return "\n".join(lines) + "\n"


def _stats_csv(model: dict, decimals: int) -> str:
    rows = [
        ("Multiple R", model["multipleR"]),
        ("R Square", model["rSquared"]),
        ("Adjusted R Square", model["adjRSquared"]),
        ("Standard Error", model["residualStdError"]),
    ]
    lines = ["Regression Statistics,"]
    for label, value in rows:
        lines.append(f"{label},{_fmt(value, decimals)}")
    return "\n".join(lines) + "\n"


def _summary_csv(section: dict, labels: list[str], decimals: int) -> str:
    lines = ["," + ",".join(labels)]
    means = [_fmt(section[label]["mean"], decimals) for label in labels]
    sds = [_fmt(section[label]["sd"], decimals) for label in labels]
    lines.append("Mean," + ",".join(means))
    lines.append("Standard deviation," + ",".join(sds))
    return "\n".join(lines) + "\n"


def render_tables(report: AnalysisReport, outdir: Path) -> list[Path]:
    """Write table1.csv .. table7.csv plus report.json under ``outdir``.

    Rounding follows the source layout: summary stats at 4 decimals,
    correlation matrices at 3, the raw-factor coefficient and statistic
    tables at 3, and the innovation-model tables at 4. report.json keeps
    full precision and must validate against the shipped schema.
    """
    outdir = Path(outdir)
    tables_dir = outdir / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    doc = report.to_json_dict()
    validate_report_json(doc)

    corr_f = report.correlations["factors"]
    corr_i = report.correlations["innovations"]
    files = {
        "table1.csv": _summary_csv(report.summary_stats["factors"],
                                   report.meta["panelLabels"], 4),
        "table2.csv": _matrix_csv(corr_f["labels"], corr_f["matrix"], 3),
        "table3.csv": _coefficient_csv(report.factor_model, 3),
        "table4.csv": _stats_csv(report.factor_model, 3),
        "table5.csv": _matrix_csv(corr_i["labels"], corr_i["matrix"], 3),
        "table6.csv": _coefficient_csv(report.innovation_model, 4),
        "table7.csv": _stats_csv(report.innovation_model, 4),
    }
    written = []
    for name, text in files.items():
        path = tables_dir / name
        _atomic_write(path, text)
        written.append(path)
    report_path = outdir / "report.json"
    _atomic_write(report_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(report_path)
    return written


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
