"""Deterministic synthetic dataset for demos and end-to-end tests.

Factor series are ARMA-GARCH simulations scaled to monthly-return
magnitudes; the excess return loads on them with fixed coefficients, so
the downstream regression has a known structure. The emitted files
exercise the parser quirks on purpose: French-style preamble and annual
trailer in the factor file, mid-month extra rows in the price file.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .garch import ArmaGarchParams, simulate
from .ingest import previous_month, range_months

_BETAS = {"MRP": 0.5, "SMB": -0.15, "HML": -0.35}
_ALPHA = 0.003


def _factor_params(mu: float, sd: float, alpha: float, beta: float) -> ArmaGarchParams:
    var = sd * sd
    return ArmaGarchParams(mu=mu, phi=0.06, theta=-0.03,
                           omega=var * (1.0 - alpha - beta), alpha=alpha, beta=beta)


def synthetic_dataset(seed: int = 7, start: int = 198603, end: int = 202002):
    """Return (factors_csv, prices_csv, yields_csv, config_text)."""
    lead = previous_month(start)
    # a little margin on both sides so window clipping is exercised
    months = range_months(previous_month(previous_month(lead)), end)
    n = len(months)

    # component ARCH has to be strong enough to survive aggregation,
    # otherwise the excess-return fit sits on the alpha = 0 ridge where
    # (omega, beta) are not identified
    mrp = simulate(_factor_params(0.0065, 0.044, 0.16, 0.78), n, seed=seed)
    smb = simulate(_factor_params(0.0003, 0.031, 0.14, 0.80), n, seed=seed + 1)
    hml = simulate(_factor_params(0.0013, 0.029, 0.15, 0.79), n, seed=seed + 2)
    idio = simulate(_factor_params(0.0, 0.030, 0.16, 0.78), n, seed=seed + 3)
    exr = _ALPHA + _BETAS["MRP"] * mrp + _BETAS["SMB"] * smb + _BETAS["HML"] * hml + idio

    rng = np.random.default_rng(seed + 4)
    t = np.arange(n)
    yields_pct = 4.0 + 1.5 * np.sin(t / 40.0) + np.cumsum(rng.normal(0.0, 0.02, n))
    yields_pct = np.clip(yields_pct, 0.2, 12.0)

    prices = np.empty(n)
    prices[0] = 50.0
    for i in range(1, n):
        prices[i] = prices[i - 1] * np.exp(exr[i] + yields_pct[i] / 1200.0)

    rf_filler = np.full(n, 0.30)

    lines = [
        "Synthetic monthly research factors for pipeline testing.",
        "Values are in percent. Built for demonstration only.",
        "",
        ",Mkt-RF,SMB,HML,RF",
    ]
    for i, m in enumerate(months):
        lines.append(
            f"{m},{100 * mrp[i]:.6f},{100 * smb[i]:.6f},{100 * hml[i]:.6f},{rf_filler[i]:.2f}"
        )
    lines += [
        "",
        "Annual Factors: January-December",
        ",Mkt-RF,SMB,HML,RF",
        "1986,10.22,3.10,4.55,6.16",
        "1987,1.69,-9.42,-3.31,5.47",
        "",
        "Copyright: synthetic data, no rights reserved.",
    ]
    factors_csv = "\n".join(lines) + "\n"

    price_lines = ["date,price"]
    for i, m in enumerate(months):
        y, mo = divmod(m, 100)
        if i % 7 == 3:
            # an extra mid-month row; the month-end observation must win
            price_lines.append(f"{y:04d}-{mo:02d}-14,{prices[i] * 0.97:.6f}")
        price_lines.append(f"{y:04d}-{mo:02d}-28,{prices[i]:.6f}")
    prices_csv = "\n".join(price_lines) + "\n"

    yield_lines = ["date,yield"]
    for i, m in enumerate(months):
        yield_lines.append(f"{m},{yields_pct[i]:.6f}")
    yields_csv = "\n".join(yield_lines) + "\n"

    config_text = (
        f"start = {start}\n"
        f"end = {end}\n"
        "factors = MRP:Mkt-RF, SMB, HML\n"
        "factor_scale = 100\n"
        "riskfree_divisor = 1200\n"
        "asset = SYNTH\n"
    )
    return factors_csv, prices_csv, yields_csv, config_text


def write_synthetic_dataset(outdir: Path, seed: int = 7,
                            start: int = 198603, end: int = 202002) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    factors, prices, yields, config = synthetic_dataset(seed=seed, start=start, end=end)
    paths = {
        "factors": outdir / "factors.csv",
        "prices": outdir / "prices.csv",
        "yields": outdir / "yields.csv",
        "config": outdir / "config.txt",
    }
    paths["factors"].write_text(factors)
    paths["prices"].write_text(prices)
    paths["yields"].write_text(yields)
    paths["config"].write_text(config)
    return paths


def main() -> None:
    parser = argparse.ArgumentParser(description="write a synthetic demo dataset")
    parser.add_argument("outdir", type=Path)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    paths = write_synthetic_dataset(args.outdir, seed=args.seed)
    for name, path in paths.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
