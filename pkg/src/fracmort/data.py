"""
Mortality tables in the Human Mortality Database ``Mx_1x1`` text layout,
plus synthetic fixtures generated from the hazard model.

The layout is whitespace delimited::

    Italy, Death rates (period 1x1)

      Year   Age   Female   Male   Total
      1950     0   0.060063 0.070104 0.065193
      ...
      1950  110+   .        0.5      0.5

``110+`` is stored as age 110 and ``.`` marks a missing value.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Mapping, TextIO

import numpy as np

from .errors import DataFormatError, GapError, NotFoundError
from .fou import FouParams, simulate_fou_paths
from .mortality import CohortSeries, Sex

__all__ = [
    "MortalityTable",
    "ParseReport",
    "CohortParams",
    "parse_hmd",
    "read_hmd",
    "extract_cohort",
    "synthesize_fixture",
    "italian_style_params",
    "load_bundled_fixture",
    "BUNDLED_FIXTURE",
    "MODEL_MAX_AGE",
]

SEXES = (Sex.FEMALE, Sex.MALE, Sex.TOTAL)
OPEN_AGE = 110
MODEL_MAX_AGE = 90
BUNDLED_FIXTURE = "italy_like_mx_1x1.txt"


@dataclass(eq=False)
class MortalityTable:
    """
    Rectangular year x age grid of central death rates for the three sex channels.

    ``rates[i, j, s]`` is the rate for ``years[i]``, ``ages[j]`` and
    ``SEXES[s]``; NaN marks a missing cell.
    """

    country_label: str
    years: np.ndarray
    ages: np.ndarray
    rates: np.ndarray = field(repr=False)
    open_age: int | None = OPEN_AGE

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        self.ages = np.asarray(self.ages, dtype=int)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.shape != (len(self.years), len(self.ages), len(SEXES)):
            raise ValueError("rates must have shape (years, ages, 3)")
        if np.any(np.diff(self.years) <= 0) or np.any(np.diff(self.ages) <= 0):
            raise ValueError("years and ages must be strictly increasing")
        if self.open_age is not None and self.open_age not in self.ages:
            self.open_age = None
        present = self.rates[~np.isnan(self.rates)]
        if np.any(present <= 0):
            raise ValueError("present rates must be positive")

    def __eq__(self, other):
        if not isinstance(other, MortalityTable):
            return NotImplemented
        return (
            self.country_label == other.country_label
            and self.open_age == other.open_age
            and np.array_equal(self.years, other.years)
            and np.array_equal(self.ages, other.ages)
            and np.array_equal(self.rates, other.rates, equal_nan=True)
        )

    def rate(self, year: int, age: int, sex) -> float | None:
        """Rate of one cell, or None if missing."""
        i = _index(self.years, year, "year")
        j = _index(self.ages, age, "age")
        v = self.rates[i, j, SEXES.index(Sex.parse(sex))]
        return None if math.isnan(v) else float(v)

    def _age_token(self, age: int) -> str:
        return f"{age}+" if self.open_age is not None and age == self.open_age else str(age)

    def to_hmd(self) -> str:
        """Serialize to the ``Mx_1x1`` text layout; values are written losslessly."""
        lines = [f"{self.country_label}, Death rates (period 1x1)", ""]
        lines.append(f"{'Year':>6}{'Age':>8}{'Female':>24}{'Male':>24}{'Total':>24}")
        for i, year in enumerate(self.years):
            for j, age in enumerate(self.ages):
                vals = [_fmt(v) for v in self.rates[i, j]]
                lines.append(f"{year:>6}{self._age_token(age):>8}" + "".join(f"{v:>24}" for v in vals))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Long format ``year,age,sex,rate``; missing cells are omitted."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["year", "age", "sex", "rate"])
        for i, year in enumerate(self.years):
            for j, age in enumerate(self.ages):
                for s, sex in enumerate(SEXES):
                    v = self.rates[i, j, s]
                    if not math.isnan(v):
                        writer.writerow([int(year), int(age), sex.value, repr(float(v))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "country_label": self.country_label,
                "open_age": self.open_age,
                "years": self.years.tolist(),
                "ages": self.ages.tolist(),
                "sexes": [s.value for s in SEXES],
                "rates": [
                    [[None if math.isnan(v) else float(v) for v in cell] for cell in row]
                    for row in self.rates
                ],
            }
        )


def _fmt(v: float) -> str:
    return "." if math.isnan(v) else repr(float(v))


def _index(values: np.ndarray, key: int, what: str) -> int:
    hits = np.flatnonzero(values == key)
    if len(hits) == 0:
        raise NotFoundError(f"{what} {key} not in table")
    return int(hits[0])


@dataclass
class ParseReport:
    """Row accounting for one parse: ``ingested + len(skipped) == n_rows``."""

    n_rows: int = 0
    ingested: int = 0
    skipped: list[tuple[int, str, str]] = field(default_factory=list)
    nonpositive_cells: int = 0


def _parse_value(token: str) -> float:
    if token == ".":
        return math.nan
    # float() accepts things like "nan", "inf" and "1_0"; only plain decimals are data
    if not all(c in "0123456789.eE+-" for c in token):
        raise ValueError(f"bad numeric token {token!r}")
    v = float(token)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {token!r}")
    return v


def parse_hmd(stream: TextIO | str) -> tuple[MortalityTable, ParseReport]:
    """
    Parse an ``Mx_1x1`` table.

    Lines before the ``Year Age Female Male Total`` header are preamble;
    the first of them supplies the country label. Every nonblank line after
    the header is a data row. Malformed rows are skipped and reported;
    nonpositive rates are stored as missing and counted.

    Returns
    -------
    table : MortalityTable
    report : ParseReport

    Raises
    ------
    DataFormatError
        If the stream is empty, lacks the header, or has no valid rows.
    """
    text = stream if isinstance(stream, str) else stream.read()
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise DataFormatError("empty input")

    header_at = None
    for i, line in enumerate(lines):
        tokens = line.split()
        if len(tokens) >= 2 and tokens[0].lower() == "year" and tokens[1].lower() == "age":
            header_at = i
            break
    if header_at is None:
        raise DataFormatError("column header 'Year Age Female Male Total' not found")
    preamble = [line.strip() for line in lines[:header_at] if line.strip()]
    label = preamble[0].split(",")[0].strip() if preamble else ""

    report = ParseReport()
    cells: dict[tuple[int, int], list[float]] = {}
    open_age = None
    for lineno, line in enumerate(lines[header_at + 1 :], start=header_at + 2):
        if not line.strip():
            continue
        report.n_rows += 1
        tokens = line.split()
        try:
            if len(tokens) != 5:
                raise ValueError(f"expected 5 columns, got {len(tokens)}")
            year = int(tokens[0])
            age_tok = tokens[1]
            if age_tok.endswith("+"):
                age = int(age_tok[:-1])
                open_age = age
            else:
                age = int(age_tok)
            if age < 0:
                raise ValueError(f"negative age {age}")
            vals = [_parse_value(t) for t in tokens[2:]]
            if (year, age) in cells:
                raise ValueError(f"duplicate row for year {year}, age {age}")
        except ValueError as exc:
            report.skipped.append((lineno, line, str(exc)))
            continue
        for k, v in enumerate(vals):
            if not math.isnan(v) and v <= 0:
                vals[k] = math.nan
                report.nonpositive_cells += 1
        cells[(year, age)] = vals
        report.ingested += 1

    if not cells:
        raise DataFormatError("no valid data rows")
    years = np.array(sorted({y for y, _ in cells}))
    ages = np.array(sorted({a for _, a in cells}))
    rates = np.full((len(years), len(ages), len(SEXES)), np.nan)
    yi = {y: i for i, y in enumerate(years)}
    ai = {a: j for j, a in enumerate(ages)}
    for (y, a), vals in cells.items():
        rates[yi[y], ai[a]] = vals
    return MortalityTable(label, years, ages, rates, open_age), report


def read_hmd(path) -> tuple[MortalityTable, ParseReport]:
    with open(path, encoding="utf-8") as fh:
        return parse_hmd(fh)


def extract_cohort(
    table: MortalityTable, age: int, sex, year_start: int, year_end: int
) -> CohortSeries:
    """
    Period series of one age and sex over ``year_start .. year_end`` inclusive.

    Raises
    ------
    NotFoundError
        If the age is not in the table.
    GapError
        If any year in the window is absent or missing; lists those years.
    """
    if year_end < year_start:
        raise ValueError("year_end must not precede year_start")
    sex = Sex.parse(sex)
    j = _index(table.ages, age, "age")
    s = SEXES.index(sex)
    window = np.arange(year_start, year_end + 1)
    rates = np.full(len(window), np.nan)
    pos = np.searchsorted(table.years, window)
    found = (pos < len(table.years)) & (table.years[np.minimum(pos, len(table.years) - 1)] == window)
    rates[found] = table.rates[pos[found], j, s]
    missing = window[np.isnan(rates)]
    if len(missing):
        raise GapError(
            f"age {age} {sex.value}: missing years {missing.tolist()}",
            missing_years=missing.tolist(),
        )
    return CohortSeries(age=age, sex=sex, years=window, rates=rates)


@dataclass(frozen=True)
class CohortParams:
    """
    Generating parameters for one cohort.

    ``ln h(t) = ln h0 + alpha0 t + alpha1 Y_t``; the default ``alpha1 = 1`` is
    the scale on which the fitting stage works. ``sigma = 0`` gives an exactly
    log-linear cohort.
    """

    h0: float
    alpha0: float
    hurst: float
    sigma: float
    lam: float
    alpha1: float = 1.0


def synthesize_fixture(
    params: Mapping[tuple[int, Sex], CohortParams] | Callable[[int, Sex], CohortParams],
    ages: Iterable[int],
    years: Iterable[int],
    seed: int,
    label: str = "Synthetic",
    open_age: int | None = OPEN_AGE,
) -> MortalityTable:
    """
    Generate a table from the hazard model with simulated fOU residuals.

    Cohort ``(age, sex)`` is driven by fGN seeded with
    ``seed + 3 * age_index + sex_index``.
    """
    ages = np.asarray(list(ages), dtype=int)
    years = np.asarray(list(years), dtype=int)
    if len(years) > 1 and not np.all(np.diff(years) == 1):
        raise ValueError("years must be contiguous")
    get = params if callable(params) else (lambda a, s: params[(a, s)])
    t = (years - years[0]).astype(float)
    rates = np.empty((len(years), len(ages), len(SEXES)))
    for j, age in enumerate(ages):
        for s, sex in enumerate(SEXES):
            p = get(int(age), sex)
            if p.sigma == 0 or len(years) < 2:
                y = np.zeros(len(years))
            else:
                fou = FouParams(lam=p.lam, sigma=p.sigma, hurst=p.hurst, mesh=1.0)
                y = simulate_fou_paths(fou, len(years) - 1, [seed + 3 * j + s])[0]
            rates[:, j, s] = p.h0 * np.exp(p.alpha0 * t + p.alpha1 * y)
    return MortalityTable(label, years, ages, rates, open_age)


def italian_style_params(age: int, sex) -> CohortParams:
    """
    Smooth per-age parameters loosely shaped like post-war Italian mortality.

    Baseline rates follow an infant term, an accident hump and a Gompertz
    term; improvement is fastest in childhood. The planted Hurst index
    ``0.69 + 0.09 sin(age / 9)`` stays within [0.6, 0.78].
    """
    sex = Sex.parse(sex)
    x = float(age)
    male = {Sex.FEMALE: 0.0, Sex.MALE: 1.0, Sex.TOTAL: 0.5}[sex]
    base = (
        0.06 * math.exp(-1.3 * x)
        + (0.0004 + 0.0006 * male) * math.exp(-(((x - 22.0) / 9.0) ** 2))
        + 0.00004 * (1.0 + 0.45 * male) * math.exp(0.097 * x)
    )
    return CohortParams(
        h0=min(base * (1.0 + 0.15 * male), 0.9),
        alpha0=-(0.008 + 0.05 * math.exp(-x / 15.0)) * (1.0 - 0.1 * male),
        hurst=0.69 + 0.09 * math.sin(x / 9.0),
        sigma=0.04 + 0.05 * math.exp(-x / 25.0),
        lam=2.0 + 0.5 * math.cos(x / 13.0),
    )


def load_bundled_fixture() -> MortalityTable:
    """The packaged synthetic table (ages 0-110+, years 1950-2004)."""
    text = resources.files("fracmort").joinpath("data", BUNDLED_FIXTURE).read_text("utf-8")
    return parse_hmd(text)[0]


def make_bundled_fixture(seed: int = 1950) -> MortalityTable:
    """Regenerate the packaged fixture."""
    return synthesize_fixture(
        italian_style_params,
        ages=range(0, OPEN_AGE + 1),
        years=range(1950, 2005),
        seed=seed,
        label="Italy-like synthetic",
    )
