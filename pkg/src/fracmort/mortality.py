"""
Mortality hazard model ``h(t) = h0 * exp(alpha0 * t + alpha1 * Y_t)`` with an
fOU driver ``Y``.

Fitting runs in two stages. With ``alpha1 = 1`` the trend ``alpha0`` is
fitted by least squares through the first observation, the residuals give H
(by one of the :mod:`fracmort.hurst` estimators) and ``(sigma, lam)`` (by
generalized quadratic variations). Then ``alpha1`` is set to ``T^-H`` for
simulation, which keeps ``Var(alpha1 * Y_t) <= sigma^2`` on ``[0, T]``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from . import hurst as hurst_mod
from .errors import InsufficientVariationError
from .fou import FouParams, simulate_fou_paths
from .qgv import LAMBDA_VALID_H, Filter, classical_filter, estimate_h_sigma, estimate_lambda

__all__ = [
    "Sex",
    "CohortSeries",
    "MortalityModel",
    "ForecastBand",
    "fit_alpha0",
    "residuals",
    "fit_model",
    "simulate_hazard_paths",
    "forecast",
    "survival_probability",
    "survival_curve",
    "HURST_CLAMP",
]

log = logging.getLogger(__name__)

# the model requires 1/2 <= H < 1
HURST_CLAMP = (0.5, 0.99)
SURVIVAL_MESH = 1.0 / 12.0


class Sex(str, enum.Enum):
    FEMALE = "Female"
    MALE = "Male"
    TOTAL = "Total"

    @classmethod
    def parse(cls, value) -> "Sex":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for sex in cls:
            if key in (sex.value.lower(), sex.value[0].lower()):
                return sex
        raise ValueError(f"unknown sex {value!r}; use F, M or T")


@dataclass(frozen=True)
class CohortSeries:
    """Observed central death rates of one age and sex over contiguous years."""

    age: int
    sex: Sex
    years: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        rates = np.asarray(self.rates, dtype=float)
        if years.shape != rates.shape or years.ndim != 1:
            raise ValueError("years and rates must be 1-d sequences of equal length")
        if len(years) > 1 and not np.all(np.diff(years) == 1):
            raise ValueError("years must be strictly increasing and contiguous")
        if not np.all(rates > 0):
            raise ValueError("all rates must be positive")
        object.__setattr__(self, "sex", Sex.parse(self.sex))
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "rates", rates)

    def __len__(self):
        return len(self.years)

    @property
    def times(self) -> np.ndarray:
        """Time since the first observation, in years."""
        return (self.years - self.years[0]).astype(float)


@dataclass(frozen=True)
class MortalityModel:
    """
    Fitted hazard model for one cohort.

    ``sigma`` and ``lam`` are on the residual scale (``alpha1 = 1``);
    ``alpha1 = horizon_T ** -hurst`` is applied only when simulating.
    """

    h0: float
    alpha0: float
    alpha1: float
    hurst: float
    sigma: float
    lam: float
    horizon_T: float
    fit_window: tuple[int, int]
    age: int | None = None
    sex: str | None = None
    hurst_method: str | None = None
    qgv_hurst: float | None = None
    raw_hurst: float | None = None
    outside_validity: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not (self.sigma > 0 and self.lam > 0 and self.horizon_T > 0):
            raise ValueError("sigma, lam and horizon_T must be positive")
        lo, hi = HURST_CLAMP
        if not lo <= self.hurst <= hi:
            raise ValueError(f"model Hurst index must lie in [{lo}, {hi}], got {self.hurst}")
        expected = self.horizon_T ** (-self.hurst)
        if not math.isclose(self.alpha1, expected, rel_tol=1e-12):
            raise ValueError(f"alpha1 must equal horizon_T**-hurst = {expected}")

    @classmethod
    def from_params(cls, h0, alpha0, hurst, sigma, lam, horizon_T, fit_window=None, **extra):
        if fit_window is None:
            fit_window = (0, int(round(horizon_T)) - 1)
        return cls(
            h0=float(h0),
            alpha0=float(alpha0),
            alpha1=float(horizon_T) ** (-float(hurst)),
            hurst=float(hurst),
            sigma=float(sigma),
            lam=float(lam),
            horizon_T=float(horizon_T),
            fit_window=tuple(int(y) for y in fit_window),
            **extra,
        )

    def fou_params(self, mesh: float = 1.0) -> FouParams:
        return FouParams(lam=self.lam, sigma=self.sigma, hurst=self.hurst, mesh=mesh)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        d["warnings"] = list(self.warnings)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MortalityModel":
        d = dict(d)
        d["fit_window"] = tuple(d["fit_window"])
        d["warnings"] = tuple(d.get("warnings", ()))
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "MortalityModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ForecastBand:
    years: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_paths: int
    coverage: float = 0.955
    band: str = "sd"

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["year", "mean", "lower", "upper"])
        for row in zip(self.years, self.mean, self.lower, self.upper):
            writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def fit_alpha0(series: CohortSeries) -> tuple[float, float]:
    """
    Least-squares trend through the first observation.

    ``h0`` is the first observed rate and::

        alpha0 = (sum_t t ln h(t) - ln h(0) sum_t t) / sum_t t^2

    with ``t = 0 .. T`` counted from the first year.
    """
    if len(series) < 2:
        raise ValueError("fitting alpha0 needs at least two observations")
    t = series.times
    log_h = np.log(series.rates)
    alpha0 = (np.sum(t * log_h) - log_h[0] * np.sum(t)) / np.sum(t * t)
    return float(series.rates[0]), float(alpha0)


def residuals(series: CohortSeries, h0: float, alpha0: float) -> np.ndarray:
    """``ln h(t) - ln h0 - alpha0 t``; zero at t = 0 when ``h0`` is the first rate."""
    return np.log(series.rates) - math.log(h0) - alpha0 * series.times


def fit_model(
    series: CohortSeries,
    hurst_method: hurst_mod.HurstMethod | str = hurst_mod.HurstMethod.RESCALED_RANGE,
    filter: Filter | None = None,
) -> MortalityModel:
    """
    Fit ``(h0, alpha0, H, sigma, lam)`` to one cohort and set ``alpha1 = T^-H``.

    H comes from ``hurst_method`` applied to the residuals; estimates below
    0.5 (or at/above 1) are clamped into ``[0.5, 0.99]`` with a warning.
    ``sigma`` and ``lam`` come from generalized quadratic variations of the
    residuals at unit mesh, using the variation-based H (reported as
    ``qgv_hurst``). ``outside_validity`` flags a variation-based H outside
    the range where the drift estimate is consistent. ``horizon_T`` is the
    number of observations.

    Raises
    ------
    InsufficientVariationError
        For residuals without variation (e.g. exactly log-linear data).
    """
    if len(series) < hurst_mod.MIN_LENGTH:
        raise ValueError(f"fitting needs at least {hurst_mod.MIN_LENGTH} observations")
    f = classical_filter(2) if filter is None else filter
    method = hurst_mod.HurstMethod(hurst_method)
    notes = []

    h0, alpha0 = fit_alpha0(series)
    res = residuals(series, h0, alpha0)
    # exactly log-linear data leaves only rounding noise in the residuals
    log_scale = float(np.max(np.abs(np.log(series.rates))))
    if float(np.max(np.abs(res))) <= 1e-10 * max(1.0, log_scale):
        raise InsufficientVariationError("residuals have no variation (log-linear data)")

    # sigma/lambda first: zero-variation residuals fail here with the clearer error
    h_q, sigma = estimate_h_sigma(res, f, mesh=1.0)
    lo_v, hi_v = LAMBDA_VALID_H
    outside = not lo_v < h_q < hi_v
    if outside:
        notes.append(f"variation-based H {h_q:.4f} outside ({lo_v}, {hi_v}); drift estimate forced")
    if not 0 < h_q < 1:
        raise ValueError(f"variation-based H {h_q:.4f} outside (0, 1); cannot estimate drift")
    lam, _ = estimate_lambda(res, h_q, sigma)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        raw_h = hurst_mod.estimate_hurst(res, method).value
    lo, hi = HURST_CLAMP
    h = min(max(raw_h, lo), hi)
    if h != raw_h:
        notes.append(f"{method.value} H {raw_h:.4f} clamped to {h}")
    for note in notes:
        log.warning(note)
        warnings.warn(note, stacklevel=2)

    return MortalityModel.from_params(
        h0=h0,
        alpha0=alpha0,
        hurst=h,
        sigma=sigma,
        lam=lam,
        horizon_T=float(len(series)),
        fit_window=(int(series.years[0]), int(series.years[-1])),
        age=int(series.age),
        sex=series.sex.value,
        hurst_method=method.value,
        qgv_hurst=h_q,
        raw_hurst=raw_h,
        outside_validity=outside,
        warnings=tuple(notes),
    )


def _path_seeds(seed: int, n_paths: int) -> range:
    return range(int(seed), int(seed) + int(n_paths))


def simulate_hazard_paths(
    model: MortalityModel,
    n_steps: int,
    n_paths: int,
    seed: int,
    mesh: float = 1.0,
    y0: float = 0.0,
    t0: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Simulate hazard paths on ``t = t0 + k * mesh``, ``k = 0 .. n_steps``.

    Path ``i`` is driven by fGN seeded with ``seed + i``; the fOU starts from
    ``y0`` at ``t0``.

    Returns
    -------
    times : ndarray, shape (n_steps + 1,)
    hazard : ndarray, shape (n_paths, n_steps + 1)
    """
    y = simulate_fou_paths(model.fou_params(mesh), n_steps, _path_seeds(seed, n_paths), y0)
    times = t0 + mesh * np.arange(n_steps + 1)
    hazard = model.h0 * np.exp(model.alpha0 * times + model.alpha1 * y)
    return times, hazard


def forecast(
    model: MortalityModel,
    n_years: int,
    n_paths: int = 10_000,
    seed: int = 0,
    coverage: float = 0.955,
    band: str = "auto",
) -> ForecastBand:
    """
    Monte Carlo hazard band for years ``t = 0 .. n_years - 1`` of the model clock.

    Year ``t`` is labelled ``fit_window[0] + t``. The band is
    ``mean +/- 2 sd`` for the default coverage 0.955 (``band="sd"`` with
    another coverage uses the matching normal quantile); ``band="quantile"``
    uses empirical quantiles at ``(1 -/+ coverage) / 2``. ``"auto"`` picks
    ``"sd"`` for coverage 0.955 and ``"quantile"`` otherwise.
    """
    if n_years < 1 or n_paths < 1:
        raise ValueError("n_years and n_paths must be >= 1")
    if not 0 < coverage < 1:
        raise ValueError("coverage must lie in (0, 1)")
    if band == "auto":
        band = "sd" if math.isclose(coverage, 0.955) else "quantile"
    if band not in ("sd", "quantile"):
        raise ValueError(f"unknown band {band!r}")

    _, hazard = simulate_hazard_paths(model, max(n_years - 1, 1), n_paths, seed)
    hazard = hazard[:, :n_years]
    mean = hazard.mean(axis=0)
    # years where every path coincides (t = 0 at least) get the exact common value
    flat = hazard.min(axis=0) == hazard.max(axis=0)
    mean[flat] = hazard[0, flat]
    if band == "sd":
        z = 2.0 if math.isclose(coverage, 0.955) else float(ndtri(0.5 + coverage / 2))
        sd = hazard.std(axis=0, ddof=1) if n_paths > 1 else np.zeros(n_years)
        sd[flat] = 0.0
        lower, upper = mean - z * sd, mean + z * sd
        if np.any(lower <= 0):
            log.warning("sd band reaches zero; lower limit floored at the smallest simulated hazard")
            lower = np.maximum(lower, hazard.min(axis=0))
    else:
        lower, upper = np.quantile(hazard, [0.5 - coverage / 2, 0.5 + coverage / 2], axis=0)
        lower = np.minimum(lower, mean)
        upper = np.maximum(upper, mean)
    years = model.fit_window[0] + np.arange(n_years)
    return ForecastBand(years, mean, lower, upper, int(n_paths), float(coverage), band)


def _trapezoid_integrals(hazard: np.ndarray, mesh: float) -> np.ndarray:
    # cumulative trapezoid rule along time, starting at 0
    steps = 0.5 * mesh * (hazard[:, 1:] + hazard[:, :-1])
    return np.concatenate([np.zeros((len(hazard), 1)), np.cumsum(steps, axis=1)], axis=1)


def survival_curve(
    model: MortalityModel,
    t: float,
    n_months: int,
    n_paths: int,
    seed: int,
    y_t: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Survival probabilities from ``t`` to ``t + k/12`` for ``k = 0 .. n_months``.

    All horizons share the same simulated paths, so the curve is monotone.

    Returns
    -------
    horizons, estimate, std_error : ndarray
    """
    if n_months < 1 or n_paths < 1:
        raise ValueError("n_months and n_paths must be >= 1")
    times, hazard = simulate_hazard_paths(
        model, n_months, n_paths, seed, mesh=SURVIVAL_MESH, y0=y_t, t0=t
    )
    surv = np.exp(-_trapezoid_integrals(hazard, SURVIVAL_MESH))
    se = surv.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros(len(times))
    return times, surv.mean(axis=0), se


def survival_probability(
    model: MortalityModel,
    t: float,
    horizon: float,
    n_paths: int = 10_000,
    seed: int = 0,
    y_t: float = 0.0,
    return_paths: bool = False,
):
    """
    Monte Carlo estimate of ``E[exp(-int_t^horizon h(u) du)]``.

    The fOU is restarted at time ``t`` from ``y_t`` (0 for the unconditional
    case at ``t = 0``; the fitted residual at ``t`` otherwise), ignoring the
    dependence on the path before ``t``. The integral uses the trapezoid
    rule on a mesh of about one month that ends exactly at ``horizon``.

    Returns
    -------
    estimate, std_error : float
        Plus the per-path integrals when ``return_paths`` is set.
    """
    if t < 0 or not horizon > t:
        raise ValueError("need 0 <= t < horizon")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_steps = max(1, math.ceil((horizon - t) / SURVIVAL_MESH - 1e-9))
    mesh = (horizon - t) / n_steps
    _, hazard = simulate_hazard_paths(model, n_steps, n_paths, seed, mesh=mesh, y0=y_t, t0=t)
    integral = _trapezoid_integrals(hazard, mesh)[:, -1]
    surv = np.exp(-integral)
    est = float(surv.mean())
    se = float(surv.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    if return_paths:
        return est, se, integral
    return est, se
