"""
Hurst exponent estimators working on a raw series.

Three methods are provided:

* :func:`estimate_rs_analysis` - non-overlapping subseries R/S analysis with a
  log-log regression over window sizes.
* :func:`estimate_rescaled_range` - rescaled adjusted range evaluated from
  block starting points for a set of lags (pox-plot style), averaged per lag.
* :func:`estimate_local_whittle` - semiparametric local Whittle estimator on
  the periodogram with the scale constant profiled out.

Estimates are returned as-is; values outside (0, 1) are flagged, never clamped.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientDataError, NumericalDegeneracyError

__all__ = [
    "HurstMethod",
    "HurstEstimate",
    "default_scales",
    "estimate_rs_analysis",
    "estimate_rescaled_range",
    "periodogram",
    "estimate_local_whittle",
    "estimate_hurst",
    "sliding_window_estimates",
]

MIN_LENGTH = 16
MIN_WINDOW = 8


class HurstMethod(str, enum.Enum):
    RS_ANALYSIS = "rs-analysis"
    RESCALED_RANGE = "rescaled-range"
    LOCAL_WHITTLE = "whittle"


@dataclass(frozen=True)
class HurstEstimate:
    """
    Result of a Hurst estimator.

    ``n_points`` is the number of regression points (R/S methods) or the
    bandwidth ``m`` (local Whittle). ``diagnostics`` holds the
    ``(scale, statistic)`` pairs fed to the regression.
    ``significance`` is the white-noise heuristic ``1 / sqrt(len(series))``.
    """

    method: HurstMethod
    value: float
    n_points: int
    diagnostics: tuple[tuple[float, float], ...] = field(default=(), repr=False)
    significance: float = float("nan")

    @property
    def out_of_range(self) -> bool:
        return not 0.0 < self.value < 1.0

    def diagnostics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scale", "statistic"])
        for scale, stat in self.diagnostics:
            writer.writerow([repr(float(scale)), repr(float(stat))])
        return buf.getvalue()


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x


def _zero_floor(x: np.ndarray) -> float:
    # standard deviations at or below this are rounding noise of constant data
    return 1e-12 * float(np.max(np.abs(x), initial=0.0))


def default_scales(length: int) -> list[int]:
    """Powers of two from 8 up to ``length // 2``."""
    scales = []
    n = MIN_WINDOW
    while n <= length // 2:
        scales.append(n)
        n *= 2
    return scales


def _finish(method, scales, stats, length) -> HurstEstimate:
    if len(scales) < 2:
        raise InsufficientDataError(
            f"{method.value}: fewer than 2 usable scales ({len(scales)})"
        )
    slope = np.polyfit(np.log(scales), np.log(stats), 1)[0]
    est = HurstEstimate(
        method=method,
        value=float(slope),
        n_points=len(scales),
        diagnostics=tuple((float(a), float(b)) for a, b in zip(scales, stats)),
        significance=1.0 / math.sqrt(length),
    )
    if est.out_of_range:
        warnings.warn(f"{method.value} estimate {slope:.4f} outside (0, 1)", stacklevel=3)
    return est


def estimate_rs_analysis(series, window_sizes: Sequence[int] | None = None) -> HurstEstimate:
    """
    R/S analysis over non-overlapping subseries.

    For each window size ``n`` the series is cut into ``d = L // n``
    subseries. Each is demeaned and cumulated; the range of the cumulated
    values is divided by the subseries (population) standard deviation and
    the ratios are averaged. H is the least-squares slope of
    ``log (R/S)_n`` against ``log n``.

    Parameters
    ----------
    series : array_like
        At least 16 observations.
    window_sizes : sequence of int, optional
        Defaults to :func:`default_scales`. Windows with ``n < 8`` or
        ``d < 2`` are ignored.

    Raises
    ------
    InsufficientDataError
        If fewer than two windows survive (e.g. constant input).
    """
    x = _as_series(series)
    length = len(x)
    if length < MIN_LENGTH:
        raise InsufficientDataError(f"R/S analysis needs >= {MIN_LENGTH} points, got {length}")
    if window_sizes is None:
        window_sizes = default_scales(length)

    floor = _zero_floor(x)
    scales, stats = [], []
    for n in sorted(set(int(w) for w in window_sizes)):
        d = length // n
        if n < MIN_WINDOW or d < 2:
            continue
        blocks = x[: d * n].reshape(d, n)
        dev = blocks - blocks.mean(axis=1, keepdims=True)
        cum = np.cumsum(dev, axis=1)
        r = cum.max(axis=1) - cum.min(axis=1)
        s = blocks.std(axis=1)
        ok = s > floor
        if not ok.any():
            continue
        scales.append(n)
        stats.append(np.mean(r[ok] / s[ok]))
    return _finish(HurstMethod.RS_ANALYSIS, scales, stats, length)


def _block_starts(length: int, n_blocks: int | None) -> np.ndarray:
    if n_blocks is None:
        n_blocks = min(length, 512)
    n_blocks = max(1, min(int(n_blocks), length))
    block = length // n_blocks
    return block * np.arange(n_blocks)


def estimate_rescaled_range(
    series,
    lags: Sequence[int] | None = None,
    n_blocks: int | None = None,
) -> HurstEstimate:
    """
    Rescaled adjusted range regression.

    The series is divided into ``K = n_blocks`` blocks of ``M = N // K``
    elements with starting points ``t_i = M (i - 1)``. For each lag ``r`` and
    every start with ``t_i + r <= N``::

        W(t_i, k) = sum_{j<k} X[t_i + j] - k * mean(X[t_i : t_i + r])
        R = max_k W - min_k W          (k = 1..r, W(t_i, r) = 0)
        S^2 = mean(X^2) - mean(X)^2    over the same r values

    The R/S ratios are averaged per lag and H is the slope of
    ``log(mean R/S)`` on ``log r``.

    Parameters
    ----------
    series : array_like
        At least 16 observations.
    lags : sequence of int, optional
        Defaults to :func:`default_scales`.
    n_blocks : int, optional
        Number of blocks K. Defaults to ``min(N, 512)``.
    """
    x = _as_series(series)
    length = len(x)
    if length < MIN_LENGTH:
        raise InsufficientDataError(
            f"rescaled range needs >= {MIN_LENGTH} points, got {length}"
        )
    if lags is None:
        lags = default_scales(length)
    floor = _zero_floor(x)
    x = x - x.mean()
    starts = _block_starts(length, n_blocks)
    # psum[k] = x[0] + ... + x[k-1]
    psum = np.concatenate([[0.0], np.cumsum(x)])

    scales, stats = [], []
    for r in sorted(set(int(v) for v in lags)):
        if r < 2 or r > length:
            continue
        t = starts[starts + r <= length]
        if len(t) == 0:
            continue
        k = np.arange(1, r + 1)
        ratios = []
        # chunk the start points to bound memory
        step = max(1, 2_000_000 // r)
        for lo in range(0, len(t), step):
            tc = t[lo : lo + step]
            s = sliding_window_view(x, r)[tc].std(axis=1)
            cum = sliding_window_view(psum, r + 1)[tc]
            mean = (cum[:, -1] - cum[:, 0]) / r
            w = cum[:, 1:] - cum[:, :1] - k * mean[:, None]
            rng = w.max(axis=1) - w.min(axis=1)
            ok = s > floor
            ratios.append(rng[ok] / s[ok])
        ratios = np.concatenate(ratios)
        if len(ratios) == 0:
            continue
        scales.append(r)
        stats.append(ratios.mean())
    return _finish(HurstMethod.RESCALED_RANGE, scales, stats, length)


def periodogram(series) -> tuple[np.ndarray, np.ndarray]:
    """
    Periodogram at the positive Fourier frequencies.

    Returns
    -------
    freqs : ndarray
        ``2 pi j / N`` for ``j = 1 .. N // 2``.
    power : ndarray
        ``|sum_t X_t exp(i freq t)|^2 / (2 pi N)``.
    """
    x = _as_series(series)
    n = len(x)
    if n < 2:
        raise ValueError("periodogram needs at least 2 points")
    j = np.arange(1, n // 2 + 1)
    dft = np.fft.fft(x)[j]
    power = (dft.real**2 + dft.imag**2) / (2.0 * np.pi * n)
    return 2.0 * np.pi * j / n, power


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def estimate_local_whittle(series, bandwidth_m: int | None = None) -> HurstEstimate:
    """
    Local Whittle estimate of H from the lowest ``m`` Fourier frequencies.

    The spectral model ``c * freq**(1 - 2H)`` is fitted by profiling out
    ``c`` (its optimum is ``mean(I_j * freq_j**(2H - 1))``), which leaves::

        R(H) = log(mean(I_j * freq_j**(2H - 1))) - (2H - 1) * mean(log freq_j)

    minimized over (0.01, 0.99) by golden-section search to 1e-6.

    Parameters
    ----------
    series : array_like
    bandwidth_m : int, optional
        Number of frequencies; defaults to ``floor(N ** 0.65)``.
    """
    x = _as_series(series)
    n = len(x)
    if n < 4:
        raise InsufficientDataError(f"local Whittle needs >= 4 points, got {n}")
    m = int(math.floor(n**0.65)) if bandwidth_m is None else int(bandwidth_m)
    if not 2 <= m <= n // 2:
        raise ValueError(f"bandwidth m must lie in [2, {n // 2}], got {m}")
    freqs, power = periodogram(x)
    freqs, power = freqs[:m], power[:m]
    # rounding leaves powers of order (eps * max|x|)^2 * N on constant input
    if not np.any(power > 1e-24 * n * float(np.max(np.abs(x))) ** 2):
        raise InsufficientDataError("local Whittle: periodogram is identically zero")
    log_f = np.log(freqs)
    mean_log_f = log_f.mean()

    def objective(h):
        g = np.mean(power * np.exp((2.0 * h - 1.0) * log_f))
        val = math.log(g) - (2.0 * h - 1.0) * mean_log_f
        if not math.isfinite(val):
            raise NumericalDegeneracyError(f"local Whittle objective not finite at H={h}")
        return val

    h = _golden_section(objective, 0.01, 0.99, 1e-6)
    return HurstEstimate(
        method=HurstMethod.LOCAL_WHITTLE,
        value=float(h),
        n_points=m,
        diagnostics=(),
        significance=1.0 / math.sqrt(n),
    )


def estimate_hurst(series, method: HurstMethod | str = HurstMethod.RESCALED_RANGE) -> HurstEstimate:
    """Dispatch to one of the estimators by name."""
    method = HurstMethod(method)
    if method is HurstMethod.RS_ANALYSIS:
        return estimate_rs_analysis(series)
    if method is HurstMethod.RESCALED_RANGE:
        return estimate_rescaled_range(series)
    return estimate_local_whittle(series)


def sliding_window_estimates(series, window: int, step: int | None = None) -> dict[str, np.ndarray]:
    """
    Run all three estimators over sliding windows.

    Returns a dict with ``start`` (window start index) and one array per
    method; failed windows are reported as NaN.
    """
    x = _as_series(series)
    step = window if step is None else int(step)
    starts = np.arange(0, len(x) - window + 1, step)
    out = {"start": starts}
    for method in HurstMethod:
        vals = np.full(len(starts), np.nan)
        for i, s in enumerate(starts):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    vals[i] = estimate_hurst(x[s : s + window], method).value
            except (InsufficientDataError, NumericalDegeneracyError):
                pass
        out[method.value] = vals
    return out
