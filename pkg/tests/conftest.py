import numpy as np
import pytest

from factorlab.synthetic import write_synthetic_dataset


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Bundled deterministic dataset, generated once per test session."""
    outdir = tmp_path_factory.mktemp("dataset")
    write_synthetic_dataset(outdir, seed=7)
    return outdir


def run_full_pipeline(outdir, dataset_dir, seed=11, factors="MRP,SMB,HML"):
    """Every stage in order against an ingest-ready dataset directory."""
    from factorlab import cli

    cli.run_ingest(outdir, dataset_dir / "config.txt", dataset_dir / "factors.csv",
                   dataset_dir / "prices.csv", dataset_dir / "yields.csv")
    cli.run_summarize(outdir, factors)
    cli.run_fit_garch(outdir, seed=seed, allow_unconverged=False)
    cli.run_regress(outdir, factors, use_innovations=True, alpha_out=0.05)
    cli.run_diagnose(outdir, lb_lags=12, adf_maxlag=None)
    cli.run_report(outdir)
    return outdir


@pytest.fixture(scope="session")
def pipeline_dir(dataset_dir, tmp_path_factory):
    """One complete pipeline run over the bundled dataset."""
    return run_full_pipeline(tmp_path_factory.mktemp("pipeline"), dataset_dir)


def random_panel(seed, n=60, labels=("Y", "A", "B", "C")):
    """Plain dict panel with one dependent and independent regressors."""
    rng = np.random.default_rng(seed)
    data = {lab: rng.normal(0.0, 1.0, n) for lab in labels[1:]}
    noise = rng.normal(0.0, 0.5, n)
    data[labels[0]] = 0.4 + sum((i + 1) * 0.3 * data[lab]
                                for i, lab in enumerate(labels[1:])) + noise
    return data
