"""Factor-model regression laboratory.

Monthly excess stock returns regressed on pricing factors, once on the
raw series and once on ARMA(1,1)-GARCH(1,1) standardized innovations,
with a battery of specification tests and diagnostic plot data.
"""

from .diagnostics import (
    TestResult,
    adf_test,
    durbin_watson,
    engle_granger,
    jarque_bera,
    ljung_box,
    vif,
)
from .errors import DataError, FactorLabError, NumericalError
from .garch import ArmaGarchFit, ArmaGarchParams, filter_series, fit, simulate
from .ingest import DatasetConfig, FactorPanel, build_panel, parse_config, parse_factor_csv
from .ols import DesignSpec, OlsFit, backward_eliminate, cooks_distance, ols_fit
from .report import AnalysisReport, PlotData, compare_models, qq_plot_data, render_tables
from .series import ReturnSeries, correlation_matrix, log_returns, summary_stats

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "ArmaGarchFit",
    "ArmaGarchParams",
    "DataError",
    "DatasetConfig",
    "DesignSpec",
    "FactorLabError",
    "FactorPanel",
    "NumericalError",
    "OlsFit",
    "PlotData",
    "ReturnSeries",
    "TestResult",
    "adf_test",
    "backward_eliminate",
    "build_panel",
    "compare_models",
    "cooks_distance",
    "correlation_matrix",
    "durbin_watson",
    "engle_granger",
    "filter_series",
    "fit",
    "jarque_bera",
    "ljung_box",
    "log_returns",
    "ols_fit",
    "parse_config",
    "parse_factor_csv",
    "qq_plot_data",
    "render_tables",
    "simulate",
    "summary_stats",
    "vif",
    "__version__",
]
