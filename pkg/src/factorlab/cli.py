"""Command-line pipeline: ingest -> summarize -> fit-garch -> regress ->
diagnose -> report, plus ``all`` to run the whole chain.

Every stage writes its artifacts under the output directory and records
their content hashes in manifest.json. A stage that resumes from earlier
artifacts recomputes those hashes first and aborts on any mismatch, so a
run can never silently mix data vintages. Writes go through a temporary
file and an atomic rename; a failing stage leaves earlier artifacts
untouched.

Logging (stage and timing lines) goes to standard error only; standard
output carries just the artifact paths, so the command is scriptable.
Exit codes: 1 data/parse errors, 2 numerical failures, 3 I/O errors.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import sys
import time
from pathlib import Path

import click

from . import diagnostics, garch, ols, report as report_mod
from .errors import DataError, NumericalError
from .ingest import (
    DatasetConfig,
    FactorPanel,
    align_monthly,
    build_panel,
    parse_config,
    parse_factor_csv,
    parse_price_csv,
    parse_yield_csv,
    previous_month,
)
from .series import ReturnSeries, correlation_matrix, summary_stats

log = logging.getLogger("factorlab")

MANIFEST = "manifest.json"
PANEL = "panel.json"
SUMMARY = "summary.json"
INNOVATIONS = "innovations.json"
FACTOR_MODEL = "factor_model.json"
INNOVATION_MODEL = "innovation_model.json"
TESTS = "tests.json"

_PLOT_KEYS = {
    "qq": "qq",
    "residualsVsFitted": "residuals_vs_fitted",
    "scaleLocation": "scale_location",
    "residualsVsLeverage": "residuals_vs_leverage",
    "cooksBar": "cooks_bar",
    "scatterMatrix": "scatter_matrix",
    "heatmap": "heatmap",
}

_DEFAULT_FACTORS = "MRP,SMB,HML"


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _load_manifest(outdir: Path) -> dict:
    path = outdir / MANIFEST
    if not path.exists():
        return {
            "configPath": None,
            "inputPaths": {},
            "inputHashes": {},
            "seed": None,
            "stages": {},
            "artifacts": {},
        }
    return json.loads(path.read_text())


def _save_manifest(outdir: Path, manifest: dict) -> None:
    _atomic_write(outdir / MANIFEST, _dumps(manifest))


def _verify_inputs(manifest: dict) -> None:
    """Recompute recorded input hashes; any drift aborts the resume."""
    for name, path_str in manifest.get("inputPaths", {}).items():
        recorded = manifest["inputHashes"].get(name)
        if path_str is None or recorded is None:
            continue
        actual = _sha256(Path(path_str).read_text())
        if actual != recorded:
            raise DataError(
                f"input file {path_str!r} changed since ingest "
                f"(hash {actual[:12]} != recorded {recorded[:12]}); rerun ingest"
            )


def _write_artifact(outdir: Path, rel: str, text: str, manifest: dict, stage: str) -> Path:
    path = outdir / rel
    _atomic_write(path, text)
    manifest["artifacts"][rel] = {"stage": stage, "sha256": _sha256(text)}
    return path


def _read_artifact(outdir: Path, rel: str, manifest: dict, *, needed_by: str, producer: str) -> str:
    record = manifest.get("artifacts", {}).get(rel)
    if record is None or not manifest.get("stages", {}).get(producer):
        raise DataError(f"stage {needed_by!r} needs {rel}; run {producer!r} first")
    path = outdir / rel
    if not path.exists():
        raise DataError(f"artifact {rel} is missing from {outdir}; rerun {producer!r}")
    text = path.read_text()
    if _sha256(text) != record["sha256"]:
        raise DataError(
            f"artifact {rel} does not match the hash recorded by stage "
            f"{record['stage']!r}; rerun {producer!r}"
        )
    return text


def _finish_stage(outdir: Path, manifest: dict, stage: str, started: float,
                  paths: list[Path]) -> None:
    manifest["stages"][stage] = True
    _save_manifest(outdir, manifest)
    log.info("stage %s done in %.2fs", stage, time.perf_counter() - started)
    for path in paths:
        click.echo(str(path))


def _load_panel(outdir: Path, manifest: dict, needed_by: str) -> tuple[FactorPanel, dict]:
    doc = json.loads(_read_artifact(outdir, PANEL, manifest,
                                    needed_by=needed_by, producer="ingest"))
    return FactorPanel.from_json_dict(doc["panel"]), doc


def _parse_factor_list(factors: str, panel: FactorPanel) -> list[str]:
    labels = [f.strip() for f in factors.split(",") if f.strip()]
    if not labels:
        raise DataError("empty factor list")
    for label in labels:
        if label not in panel.series:
            raise DataError(f"factor {label!r} not in panel (have {panel.labels})")
    return labels


# ---------------------------------------------------------------- stages


def run_ingest(outdir: Path, config_path: Path, factors_csv: Path,
               prices_csv: Path, yields_csv: Path) -> None:
    started = time.perf_counter()
    texts = {
        "config": config_path.read_text(),
        "factors": factors_csv.read_text(),
        "prices": prices_csv.read_text(),
        "yields": yields_csv.read_text(),
    }
    cfg = parse_config(texts["config"])
    factors_raw = parse_factor_csv(texts["factors"], scale=cfg.factor_scale)
    prices_raw = parse_price_csv(texts["prices"])
    yields_raw = parse_yield_csv(texts["yields"])
    log.info("parsed %d factor months, %d price months, %d yield months",
             factors_raw.n, prices_raw.n, yields_raw.n)

    # joint alignment over the window plus one leading month; the return
    # transform consumes the leading row of each table
    window = (previous_month(cfg.start), cfg.end)
    factors_al, yields_al, prices_al = align_monthly(
        [factors_raw, yields_raw, prices_raw], window)
    panel = build_panel(prices_al, yields_al, factors_al, cfg)
    log.info("panel covers %d..%d with %d months and series %s",
             panel.dates[0], panel.dates[-1], panel.n, panel.labels)

    manifest = _load_manifest(outdir)
    manifest["configPath"] = str(config_path)
    manifest["inputPaths"] = {
        "config": str(config_path), "factors": str(factors_csv),
        "prices": str(prices_csv), "yields": str(yields_csv),
    }
    manifest["inputHashes"] = {name: _sha256(text) for name, text in texts.items()}
    doc = {
        "asset": cfg.asset,
        "window": [cfg.start, cfg.end],
        "factorColumns": [[lab, src] for lab, src in cfg.factors],
        "riskfreeDivisor": cfg.riskfree_divisor,
        "factorScale": cfg.factor_scale,
        "panel": panel.to_json_dict(),
    }
    path = _write_artifact(outdir, PANEL, _dumps(doc), manifest, "ingest")
    _finish_stage(outdir, manifest, "ingest", started, [path])


def run_summarize(outdir: Path, factors: str) -> None:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    _verify_inputs(manifest)
    panel, _ = _load_panel(outdir, manifest, "summarize")
    reg_factors = _parse_factor_list(factors, panel)

    stats = {label: summary_stats(values).__dict__
             for label, values in panel.series.items()}
    corr_labels = ["EXR"] + reg_factors
    corr = correlation_matrix(
        [ReturnSeries(label, panel.series[label]) for label in corr_labels])
    doc = {
        "labels": panel.labels,
        "regressionFactors": reg_factors,
        "stats": stats,
        "correlations": {
            "labels": corr.labels,
            "matrix": [[float(v) for v in row] for row in corr.values],
        },
    }
    path = _write_artifact(outdir, SUMMARY, _dumps(doc), manifest, "summarize")
    _finish_stage(outdir, manifest, "summarize", started, [path])


def run_fit_garch(outdir: Path, seed: int, allow_unconverged: bool) -> None:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    _verify_inputs(manifest)
    panel, _ = _load_panel(outdir, manifest, "fit-garch")

    paths = []
    innovation_series: dict[str, list] = {}
    for offset, label in enumerate(panel.labels):
        t0 = time.perf_counter()
        fit = garch.fit(panel.series[label], seed=seed + offset, label=label)
        log.info("fitted %s in %.2fs: logLik=%.4f converged=%s",
                 label, time.perf_counter() - t0, fit.log_likelihood, fit.converged)
        if not fit.converged and not allow_unconverged:
            raise NumericalError(
                f"ARMA-GARCH fit for series {label!r} did not converge"
                + (f" ({fit.reason})" if fit.reason else "")
                + "; pass --allow-unconverged to continue"
            )
        doc = {"label": label, "seed": seed + offset, "fit": fit.to_json_dict()}
        rel = f"garch/{label}.json"
        paths.append(_write_artifact(outdir, rel, _dumps(doc), manifest, "fit-garch"))
        out_label = "EXRN" if label == "EXR" else label
        innovation_series[out_label] = fit.innovations

    innovation_panel = build_innovation_panel(panel.dates, innovation_series)
    doc = {"renames": {"EXR": "EXRN"}, "panel": innovation_panel.to_json_dict()}
    paths.append(_write_artifact(outdir, INNOVATIONS, _dumps(doc), manifest, "fit-garch"))
    manifest["seed"] = seed
    _finish_stage(outdir, manifest, "fit-garch", started, paths)


def build_innovation_panel(dates, series: dict, standardize: bool = False) -> FactorPanel:
    """Panel of filtered innovations on the same date grid.

    With ``standardize`` each series is rescaled to unit sample standard
    deviation (a sensitivity knob; the default keeps raw innovations).
    """
    import numpy as np

    out = {}
    for label, values in series.items():
        arr = np.asarray(values, dtype=float)
        if standardize:
            sd = float(np.std(arr, ddof=1))
            if sd == 0.0:
                raise DataError(f"innovation series {label!r} has zero variance")
            arr = arr / sd
        out[label] = arr
    return FactorPanel(dates=dates, series=out)


def _load_innovation_panel(outdir: Path, manifest: dict, needed_by: str) -> FactorPanel:
    doc = json.loads(_read_artifact(outdir, INNOVATIONS, manifest,
                                    needed_by=needed_by, producer="fit-garch"))
    return FactorPanel.from_json_dict(doc["panel"])


def _backward_steps(panel: FactorPanel, spec: ols.DesignSpec, alpha_out: float) -> list[dict]:
    trail = ols.backward_eliminate(panel, spec, alpha_out=alpha_out)
    steps = []
    for i, fit in enumerate(trail):
        nxt = trail[i + 1].terms if i + 1 < len(trail) else None
        removed = None
        if nxt is not None:
            removed = next(t for t in fit.terms if t not in nxt)
        steps.append({
            "terms": list(fit.terms),
            "coefficients": [float(v) for v in fit.coefficients],
            "pValues": [float(v) for v in fit.p_values],
            "rSquared": float(fit.r_squared),
            "removed": removed,
        })
    return steps


def run_regress(outdir: Path, factors: str, use_innovations: bool, alpha_out: float) -> None:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    _verify_inputs(manifest)
    panel, _ = _load_panel(outdir, manifest, "regress")
    reg_factors = _parse_factor_list(factors, panel)

    spec = ols.DesignSpec("EXR", reg_factors)
    fit = ols.ols_fit(panel, spec)
    log.info("factor model: R^2=%.4f adj=%.4f", fit.r_squared, fit.adj_r_squared)
    doc = {
        "model": fit.to_json_dict(),
        "alphaOut": alpha_out,
        "backward": _backward_steps(panel, spec, alpha_out),
    }
    paths = [_write_artifact(outdir, FACTOR_MODEL, _dumps(doc), manifest, "regress")]

    if use_innovations:
        ipanel = _load_innovation_panel(outdir, manifest, "regress")
        ispec = ols.DesignSpec("EXRN", reg_factors)
        ifit = ols.ols_fit(ipanel, ispec)
        log.info("innovation model: R^2=%.4f adj=%.4f", ifit.r_squared, ifit.adj_r_squared)
        idoc = {
            "model": ifit.to_json_dict(),
            "alphaOut": alpha_out,
            "backward": _backward_steps(ipanel, ispec, alpha_out),
        }
        paths.append(_write_artifact(outdir, INNOVATION_MODEL, _dumps(idoc),
                                     manifest, "regress"))
    _finish_stage(outdir, manifest, "regress", started, paths)


def _model_tests(fit: ols.OlsFit, panel: FactorPanel) -> dict:
    regressors = [t for t in fit.terms if t != ols.INTERCEPT]
    return {
        "durbinWatson": diagnostics.durbin_watson(fit.residuals).to_json_dict(),
        "jarqueBera": diagnostics.jarque_bera(fit.residuals).to_json_dict(),
        "vif": {k: float(v) for k, v in diagnostics.vif(panel, regressors).items()},
    }


def run_diagnose(outdir: Path, lb_lags: int, adf_maxlag: int | None) -> None:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    _verify_inputs(manifest)
    panel, _ = _load_panel(outdir, manifest, "diagnose")
    ipanel = _load_innovation_panel(outdir, manifest, "diagnose")
    fdoc = json.loads(_read_artifact(outdir, FACTOR_MODEL, manifest,
                                     needed_by="diagnose", producer="regress"))
    idoc = json.loads(_read_artifact(outdir, INNOVATION_MODEL, manifest,
                                     needed_by="diagnose", producer="regress"))
    ffit = ols.OlsFit.from_json_dict(fdoc["model"])
    ifit = ols.OlsFit.from_json_dict(idoc["model"])

    series_tests = {}
    for label in panel.labels:
        series_tests[label] = {
            "adf": diagnostics.adf_test(panel.series[label], max_lag=adf_maxlag).to_json_dict(),
            "ljungBox": diagnostics.ljung_box(panel.series[label], lags=lb_lags).to_json_dict(),
        }
    innovation_tests = {}
    for label in ipanel.labels:
        eps = ipanel.series[label]
        innovation_tests[label] = {
            "ljungBox": diagnostics.ljung_box(eps, lags=lb_lags,
                                              fitted_params=2).to_json_dict(),
            "ljungBoxSquared": diagnostics.ljung_box(eps * eps, lags=lb_lags).to_json_dict(),
        }
    eg = []
    for a, b in itertools.combinations(panel.labels, 2):
        result = diagnostics.engle_granger(panel.series[a], panel.series[b],
                                           max_lag=adf_maxlag)
        eg.append({"pair": [a, b], "result": result.to_json_dict()})

    tests_doc = {
        "series": series_tests,
        "innovationSeries": innovation_tests,
        "engleGranger": eg,
        "factorModel": _model_tests(ffit, panel),
        "innovationModel": _model_tests(ifit, ipanel),
    }
    paths = [_write_artifact(outdir, TESTS, _dumps(tests_doc), manifest, "diagnose")]

    for prefix, fit, source in (("factors", ffit, panel), ("innovations", ifit, ipanel)):
        reg = [t for t in fit.terms if t != ols.INTERCEPT]
        plot_labels = [fit.dependent] + reg
        sub = {label: source.series[label] for label in plot_labels}
        corr = correlation_matrix([ReturnSeries(lab, sub[lab]) for lab in plot_labels])
        rvf, scale, rvl, bars = report_mod.residual_diagnostic_data(fit)
        plots = {
            "qq": report_mod.qq_plot_data(fit.residuals),
            "residualsVsFitted": rvf,
            "scaleLocation": scale,
            "residualsVsLeverage": rvl,
            "cooksBar": bars,
            "scatterMatrix": report_mod.scatter_matrix_data(sub),
            "heatmap": report_mod.heatmap_data(corr),
        }
        for key, data in plots.items():
            rel = f"plots/{prefix}_{_PLOT_KEYS[key]}.csv"
            paths.append(_write_artifact(outdir, rel, report_mod.render_plot_csv(data),
                                         manifest, "diagnose"))
    _finish_stage(outdir, manifest, "diagnose", started, paths)


def run_report(outdir: Path) -> None:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    _verify_inputs(manifest)
    panel, panel_doc = _load_panel(outdir, manifest, "report")
    ipanel = _load_innovation_panel(outdir, manifest, "report")
    summary = json.loads(_read_artifact(outdir, SUMMARY, manifest,
                                        needed_by="report", producer="summarize"))
    fdoc = json.loads(_read_artifact(outdir, FACTOR_MODEL, manifest,
                                     needed_by="report", producer="regress"))
    idoc = json.loads(_read_artifact(outdir, INNOVATION_MODEL, manifest,
                                     needed_by="report", producer="regress"))
    tests = json.loads(_read_artifact(outdir, TESTS, manifest,
                                      needed_by="report", producer="diagnose"))

    garch_fits = {}
    for label in panel.labels:
        doc = json.loads(_read_artifact(outdir, f"garch/{label}.json", manifest,
                                        needed_by="report", producer="fit-garch"))
        fit = garch.ArmaGarchFit.from_json_dict(doc["fit"])
        garch_fits[label] = fit.to_json_dict(include_series=False)

    innovation_stats = {label: summary_stats(values).__dict__
                        for label, values in ipanel.series.items()}
    icorr = correlation_matrix(
        [ReturnSeries(label, ipanel.series[label]) for label in ipanel.labels])

    plots = {"factors": {}, "innovations": {}}
    for prefix in plots:
        for key, stem in _PLOT_KEYS.items():
            rel = f"plots/{prefix}_{stem}.csv"
            text = _read_artifact(outdir, rel, manifest,
                                  needed_by="report", producer="diagnose")
            plots[prefix][key] = report_mod.parse_plot_csv(text).to_json_dict()

    ffit = ols.OlsFit.from_json_dict(fdoc["model"])
    ifit = ols.OlsFit.from_json_dict(idoc["model"])
    comparison = report_mod.compare_models(
        ffit, ifit,
        factor_vif=tests["factorModel"]["vif"],
        innovation_vif=tests["innovationModel"]["vif"],
    )

    analysis = report_mod.AnalysisReport(
        meta={
            "asset": panel_doc["asset"],
            "window": [int(v) for v in panel_doc["window"]],
            "nObs": panel.n,
            "panelLabels": panel.labels,
            "regressionFactors": summary["regressionFactors"],
            "seed": int(manifest["seed"]) if manifest.get("seed") is not None else 0,
        },
        summary_stats={"factors": summary["stats"], "innovations": innovation_stats},
        correlations={
            "factors": summary["correlations"],
            "innovations": {
                "labels": icorr.labels,
                "matrix": [[float(v) for v in row] for row in icorr.values],
            },
        },
        garch_fits=garch_fits,
        factor_model=fdoc["model"],
        innovation_model=idoc["model"],
        tests=tests,
        backward={
            "factors": {"alphaOut": fdoc["alphaOut"], "steps": fdoc["backward"]},
            "innovations": {"alphaOut": idoc["alphaOut"], "steps": idoc["backward"]},
        },
        comparison=comparison,
        plots=plots,
    )
    written = report_mod.render_tables(analysis, outdir)
    for path in written:
        rel = str(path.relative_to(outdir))
        manifest["artifacts"][rel] = {"stage": "report", "sha256": _sha256(path.read_text())}
    _finish_stage(outdir, manifest, "report", started, written)


# ---------------------------------------------------------------- commands

_out_option = click.option(
    "--out", "outdir", type=click.Path(file_okay=False, path_type=Path),
    envvar="FACTORLAB_OUT", required=True,
    help="output directory (or set FACTORLAB_OUT)",
)
_factors_option = click.option(
    "--factors", default=_DEFAULT_FACTORS, show_default=True,
    help="comma-separated regression factor labels",
)


@click.group()
def cli() -> None:
    """Factor-model regression laboratory."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--factors-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--prices-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--yields-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@_out_option
def ingest(config_path: Path, factors_csv: Path, prices_csv: Path,
           yields_csv: Path, outdir: Path) -> None:
    """Parse and align the input files into the regression panel."""
    run_ingest(outdir, config_path, factors_csv, prices_csv, yields_csv)


@cli.command()
@_out_option
@_factors_option
def summarize(outdir: Path, factors: str) -> None:
    """Summary statistics and factor correlations."""
    run_summarize(outdir, factors)


@cli.command("fit-garch")
@_out_option
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--allow-unconverged", is_flag=True, default=False,
              help="keep going when a fit does not converge")
def fit_garch(outdir: Path, seed: int, allow_unconverged: bool) -> None:
    """Fit ARMA-GARCH per series and extract standardized innovations."""
    run_fit_garch(outdir, seed, allow_unconverged)


@cli.command()
@_out_option
@_factors_option
@click.option("--use-innovations", is_flag=True, default=False,
              help="also regress the filtered innovation panel")
@click.option("--alpha-out", type=float, default=0.05, show_default=True,
              help="backward-elimination removal threshold")
def regress(outdir: Path, factors: str, use_innovations: bool, alpha_out: float) -> None:
    """Run the excess-return regression (and optionally the innovation one)."""
    run_regress(outdir, factors, use_innovations, alpha_out)


@cli.command()
@_out_option
@click.option("--lb-lags", type=int, default=12, show_default=True)
@click.option("--adf-maxlag", type=int, default=None)
def diagnose(outdir: Path, lb_lags: int, adf_maxlag: int | None) -> None:
    """Hypothesis tests and diagnostic plot data for both models."""
    run_diagnose(outdir, lb_lags, adf_maxlag)


@cli.command("report")
@_out_option
def report_cmd(outdir: Path) -> None:
    """Assemble report.json and the rendered tables."""
    run_report(outdir)


@cli.command("all")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--factors-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--prices-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@click.option("--yields-csv", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True)
@_out_option
@_factors_option
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha-out", type=float, default=0.05, show_default=True)
@click.option("--lb-lags", type=int, default=12, show_default=True)
@click.option("--adf-maxlag", type=int, default=None)
@click.option("--allow-unconverged", is_flag=True, default=False)
def run_all(config_path: Path, factors_csv: Path, prices_csv: Path, yields_csv: Path,
            outdir: Path, factors: str, seed: int, alpha_out: float, lb_lags: int,
            adf_maxlag: int | None, allow_unconverged: bool) -> None:
    """Run every stage in order."""
    run_ingest(outdir, config_path, factors_csv, prices_csv, yields_csv)
    run_summarize(outdir, factors)
    run_fit_garch(outdir, seed, allow_unconverged)
    run_regress(outdir, factors, use_innovations=True, alpha_out=alpha_out)
    run_diagnose(outdir, lb_lags, adf_maxlag)
    run_report(outdir)


def main() -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 64
    except click.Abort:
        click.echo("aborted", err=True)
        return 64
    except DataError as exc:
        log.error("data error: %s", exc)
        return 1
    except NumericalError as exc:
        log.error("numerical error: %s", exc)
        return 2
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
