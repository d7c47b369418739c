"""Input parsing and monthly alignment.

Three file shapes are understood:

* factor research files in the style of the Kenneth French data library:
  free-text preamble, an optional header row whose first cell is empty,
  a block of YYYYMM-keyed monthly rows in percent, then trailer blocks
  (annual summaries, copyright notes) that are ignored;
* price files with a ``date,price`` header, ISO-8601 or YYYYMM dates,
  possibly several observations per month (the last one of the month wins);
* yield files with a ``date,yield`` header holding annual percent rates.

All dates are plain YYYYMM integers throughout. Alignment is by
intersection of date grids; nothing is ever interpolated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

_YYYYMM = re.compile(r"^\d{6}$")
_ISO_DAY = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_ISO_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def _valid_month(yyyymm: int) -> bool:
    return 190001 <= yyyymm <= 299912 and 1 <= yyyymm % 100 <= 12


def previous_month(yyyymm: int) -> int:
    """The calendar month before ``yyyymm`` in YYYYMM form."""
    if not _valid_month(yyyymm):
        raise DataError(f"not a YYYYMM month: {yyyymm}")
    y, m = divmod(yyyymm, 100)
    return (y - 1) * 100 + 12 if m == 1 else yyyymm - 1


@dataclass
class RawTable:
    """A date-keyed numeric table straight out of one input file."""

    columns: list[str]
    dates: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.dates = np.asarray(self.dates, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape != (self.dates.size, len(self.columns)):
            raise DataError("raw table shape does not match columns and dates")
        if len(set(self.columns)) != len(self.columns):
            raise DataError(f"duplicate column names: {self.columns}")
        if self.dates.size == 0:
            raise DataError("raw table has no rows")
        for d in self.dates:
            if not _valid_month(int(d)):
                raise DataError(f"not a YYYYMM month: {d}")
        if np.any(np.diff(self.dates) <= 0):
            raise DataError("raw table dates must be strictly increasing")

    @property
    def n(self) -> int:
        return int(self.dates.size)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"column {name!r} not present (have {self.columns})")
        return self.values[:, self.columns.index(name)]


def serialize_raw_table(table: RawTable) -> str:
    """CSV text for a RawTable; parse_factor_csv(text, scale=1) inverts it."""
    lines = ["," + ",".join(table.columns)]
    for d, row in zip(table.dates, table.values):
        lines.append(str(int(d)) + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _split(line: str) -> list[str]:
    return [cell.strip() for cell in line.split(",")]


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


# identifier-shaped header cells; prose preamble lines contain spaces and
# never match, so "Copyright 2020, Kenneth R. French" is not a header
_NAME_CELL = re.compile(r"^[A-Za-z][A-Za-z0-9_.%-]*$")


def parse_factor_csv(text: str, scale: float = 100.0) -> RawTable:
    """Parse a French-style monthly factor file.

    Preamble lines are skipped until either a header row (first cell empty
    or a non-numeric word, remaining cells non-numeric labels) or a
    YYYYMM-keyed data row appears. The monthly block ends at the first
    blank line or non-YYYYMM key; anything after it (annual summary
    blocks, copyright trailers) is ignored. Values are divided by
    ``scale`` (percent files use the default 100).
    """
    if scale <= 0:
        raise DataError("scale must be positive")
    names: list[str] | None = None
    dates: list[int] = []
    rows: list[list[float]] = []
    in_block = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        cells = _split(line)
        blank = all(c == "" for c in cells)
        if not in_block:
            if blank:
                continue
            first = cells[0]
            if _YYYYMM.match(first) and _valid_month(int(first)):
                in_block = True
                # fall through to the data-row handling below
            elif (
                len(cells) >= 2
                and (first == "" or _NAME_CELL.match(first))
                and all(_NAME_CELL.match(c) for c in cells[1:])
            ):
                # a named leading date column ("date", "month", ...) is dropped
                names = cells[1:]
                if len(set(names)) != len(names):
                    raise DataError(f"line {lineno}: duplicate factor column names")
                in_block = True
                continue
            else:
                continue
        else:
            if blank or not (_YYYYMM.match(cells[0]) and _valid_month(int(cells[0]))):
                break
        date = int(cells[0])
        if names is None:
            names = [f"col{i}" for i in range(1, len(cells))]
        if len(cells) - 1 != len(names):
            raise DataError(
                f"line {lineno}: expected {len(names)} values, found {len(cells) - 1}"
            )
        if date in dates:
            raise DataError(f"line {lineno}: duplicate date key {date}")
        row = []
        for col, cell in enumerate(cells[1:]):
            if not _is_float(cell):
                raise DataError(
                    f"line {lineno}, column {names[col]}: malformed numeric cell {cell!r}")
            row.append(float(cell) / scale)
        dates.append(date)
        rows.append(row)
    if not rows:
        raise DataError("no monthly rows found")
    assert names is not None
    return RawTable(columns=names, dates=np.array(dates), values=np.array(rows))


def _parse_date_cell(cell: str, lineno: int) -> tuple[int, int]:
    """Return (yyyymm, day); day 0 for month-resolution dates."""
    m = _ISO_DAY.match(cell)
    if m:
        y, mo, day = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if not (1 <= mo <= 12 and 1 <= day <= 31):
            raise DataError(f"line {lineno}: unparsable date {cell!r}")
        return y * 100 + mo, day
    m = _ISO_MONTH.match(cell)
    if m:
        y, mo = int(m.group(1)), int(m.group(2))
        if not 1 <= mo <= 12:
            raise DataError(f"line {lineno}: unparsable date {cell!r}")
        return y * 100 + mo, 0
    if _YYYYMM.match(cell) and _valid_month(int(cell)):
        return int(cell), 0
    raise DataError(f"line {lineno}: unparsable date {cell!r}")


def _parse_dated_csv(text: str, default_name: str, require_positive: bool) -> RawTable:
    best: dict[int, tuple[int, float]] = {}
    name = default_name
    seen_any = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        cells = _split(line)
        if all(c == "" for c in cells):
            continue
        looks_like_date = bool(
            _ISO_DAY.match(cells[0]) or _ISO_MONTH.match(cells[0]) or _YYYYMM.match(cells[0])
        )
        if not seen_any and not looks_like_date:
            # header row like "date,price"
            if len(cells) >= 2 and cells[1]:
                name = cells[1]
            seen_any = True
            continue
        seen_any = True
        if len(cells) != 2:
            raise DataError(f"line {lineno}: expected 'date,value', found {len(cells)} cells")
        month, day = _parse_date_cell(cells[0], lineno)
        if not _is_float(cells[1]):
            raise DataError(f"line {lineno}: malformed numeric cell {cells[1]!r}")
        value = float(cells[1])
        if not np.isfinite(value):
            raise DataError(f"line {lineno}: non-finite value")
        if require_positive and value <= 0.0:
            raise DataError(f"line {lineno}: non-positive price {value}")
        prior = best.get(month)
        # the last available observation of the month wins; ties go to
        # the later row in the file
        if prior is None or day >= prior[0]:
            best[month] = (day, value)
    if not best:
        raise DataError("no data rows found")
    months = sorted(best)
    values = np.array([[best[m][1]] for m in months])
    return RawTable(columns=[name], dates=np.array(months), values=values)


def parse_price_csv(text: str) -> RawTable:
    """Parse a ``date,price`` file into one month-end observation per month."""
    return _parse_dated_csv(text, "price", require_positive=True)


def parse_yield_csv(text: str) -> RawTable:
    """Parse a ``date,yield`` file of annual percent rates, one row per month."""
    return _parse_dated_csv(text, "yield", require_positive=False)


def align_monthly(tables: list[RawTable], window: tuple[int, int]) -> list[RawTable]:
    """Restrict every table to the common date grid inside ``window``.

    The grid is the intersection of all date sets with the inclusive
    YYYYMM window. Alignment is idempotent; an empty intersection is an
    error naming the window.
    """
    start, end = window
    if not (_valid_month(start) and _valid_month(end)):
        raise DataError(f"window bounds must be YYYYMM months: {window}")
    if start > end:
        raise DataError(f"window start {start} after end {end}")
    if not tables:
        raise DataError("align_monthly needs at least one table")
    common = set(range_months(start, end))
    for t in tables:
        common &= {int(d) for d in t.dates}
    if not common:
        raise DataError(f"no common months inside window {start}..{end}")
    grid = np.array(sorted(common), dtype=np.int64)
    out = []
    for t in tables:
        index = {int(d): i for i, d in enumerate(t.dates)}
        rows = np.array([index[int(d)] for d in grid])
        out.append(RawTable(columns=list(t.columns), dates=grid.copy(), values=t.values[rows]))
    return out


def range_months(start: int, end: int) -> list[int]:
    """All YYYYMM months from start to end inclusive."""
    if not (_valid_month(start) and _valid_month(end)):
        raise DataError(f"not a YYYYMM range: {start}..{end}")
    months = []
    y, m = divmod(start, 100)
    while y * 100 + m <= end:
        months.append(y * 100 + m)
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return months


@dataclass
class DatasetConfig:
    """Run configuration mirrored by the flat key=value config file.

    ``factors`` maps panel labels to factor-file column names, so the
    French library's "Mkt-RF" can appear in the panel as "MRP".
    """

    start: int
    end: int
    factors: list[tuple[str, str]]
    factor_scale: float = 100.0
    riskfree_divisor: float = 1200.0
    asset: str = "ASSET"

    def __post_init__(self) -> None:
        if not (_valid_month(self.start) and _valid_month(self.end)):
            raise DataError(f"config window must be YYYYMM months: {self.start}..{self.end}")
        if self.start > self.end:
            raise DataError(f"config start {self.start} after end {self.end}")
        if self.factor_scale <= 0 or self.riskfree_divisor <= 0:
            raise DataError("factor_scale and riskfree_divisor must be positive")
        labels = [lab for lab, _ in self.factors]
        if not labels:
            raise DataError("config needs at least one factor")
        if len(set(labels)) != len(labels):
            raise DataError(f"duplicate factor labels: {labels}")
        if "EXR" in labels:
            raise DataError("factor label 'EXR' is reserved for the excess-return series")

    @property
    def factor_labels(self) -> list[str]:
        return [lab for lab, _ in self.factors]


_CONFIG_KEYS = {"start", "end", "factors", "factor_scale", "riskfree_divisor", "asset"}


def parse_config(text: str) -> DatasetConfig:
    """Parse the flat ``key = value`` config format (# starts a comment)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        if key in raw:
            raise DataError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for required in ("start", "end", "factors"):
        if required not in raw:
            raise DataError(f"config is missing required key {required!r}")
    try:
        start, end = int(raw["start"]), int(raw["end"])
    except ValueError as exc:
        raise DataError(f"config window must be YYYYMM integers: {exc}") from None
    factors = []
    for entry in raw["factors"].split(","):
        entry = entry.strip()
        if not entry:
            continue
        label, _, source = entry.partition(":")
        factors.append((label.strip(), (source or label).strip()))
    kwargs = {}
    for key in ("factor_scale", "riskfree_divisor"):
        if key in raw:
            try:
                kwargs[key] = float(raw[key])
            except ValueError:
                raise DataError(f"config {key} must be numeric") from None
    if "asset" in raw:
        kwargs["asset"] = raw["asset"]
    return DatasetConfig(start=start, end=end, factors=factors, **kwargs)


def serialize_config(config: DatasetConfig) -> str:
    factors = ", ".join(
        lab if lab == src else f"{lab}:{src}" for lab, src in config.factors
    )
    return (
        f"start = {config.start}\n"
        f"end = {config.end}\n"
        f"factors = {factors}\n"
        f"factor_scale = {config.factor_scale:g}\n"
        f"riskfree_divisor = {config.riskfree_divisor:g}\n"
        f"asset = {config.asset}\n"
    )


@dataclass
class FactorPanel:
    """Aligned monthly panel: excess returns plus factor series."""

    dates: np.ndarray
    series: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.dates = np.asarray(self.dates, dtype=np.int64)
        if not self.series:
            raise DataError("panel has no series")
        n = self.dates.size
        if n < 30:
            raise DataError(f"panel has {n} months; at least 30 are required")
        if np.any(np.diff(self.dates) <= 0):
            raise DataError("panel dates must be strictly increasing")
        for label, values in self.series.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise DataError(f"panel series {label!r} length {arr.size} != {n}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"panel series {label!r} contains non-finite values")
            self.series[label] = arr

    @property
    def n(self) -> int:
        return int(self.dates.size)

    @property
    def labels(self) -> list[str]:
        return list(self.series)

    def to_json_dict(self) -> dict:
        return {
            "dates": [int(d) for d in self.dates],
            "series": {k: [float(v) for v in arr] for k, arr in self.series.items()},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FactorPanel":
        return cls(
            dates=np.array(doc["dates"], dtype=np.int64),
            series={k: np.array(v, dtype=float) for k, v in doc["series"].items()},
        )


def _match_return_grid(table: RawTable, price_dates: np.ndarray, what: str) -> np.ndarray:
    """Values of a one-column table on the return grid price_dates[1:].

    The table may share the full price grid (its first row is consumed by
    the return transform) or already sit on the return grid.
    """
    if len(table.columns) != 1:
        raise DataError(f"{what} table must have exactly one column (has {table.columns})")
    return_dates = price_dates[1:]
    if table.n == price_dates.size and np.array_equal(table.dates, price_dates):
        return table.values[1:, 0]
    if table.n == return_dates.size and np.array_equal(table.dates, return_dates):
        return table.values[:, 0]
    raise DataError(f"{what} dates do not line up with returns: length mismatch after return transform")


def build_panel(
    prices: RawTable,
    riskfree: RawTable,
    factors: RawTable,
    config: DatasetConfig,
) -> FactorPanel:
    """Assemble the regression panel.

    Excess return for month t is ln(S_t / S_{t-1}) minus the annual
    percent yield of month t divided by ``riskfree_divisor``. The price
    table may carry one extra leading month, which the return transform
    consumes; the risk-free and factor tables must then sit on the return
    grid (or share the full price grid, in which case their first row is
    dropped).
    """
    if len(prices.columns) != 1:
        raise DataError(f"price table must have exactly one column (has {prices.columns})")
    p = prices.values[:, 0]
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise DataError("prices must be finite and strictly positive")
    if prices.n < 2:
        raise DataError("need at least two price months to form a return")
    log_ret = np.diff(np.log(p))
    dates = prices.dates[1:]

    rf_annual_pct = _match_return_grid(riskfree, prices.dates, "risk-free")
    exr = log_ret - rf_annual_pct / config.riskfree_divisor

    return_dates = prices.dates[1:]
    if factors.n == prices.dates.size and np.array_equal(factors.dates, prices.dates):
        factor_rows = slice(1, None)
    elif factors.n == return_dates.size and np.array_equal(factors.dates, return_dates):
        factor_rows = slice(None)
    else:
        raise DataError("factor dates do not line up with returns: length mismatch after return transform")

    series: dict[str, np.ndarray] = {"EXR": exr}
    for label, source in config.factors:
        if source not in factors.columns:
            raise DataError(f"requested factor column {source!r} absent (have {factors.columns})")
        series[label] = factors.column(source)[factor_rows].copy()
    return FactorPanel(dates=dates, series=series)
