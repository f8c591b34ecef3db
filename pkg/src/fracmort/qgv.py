"""
Generalized quadratic variation estimators for a discretely observed fOU.

Given samples ``X_n = Y_{n * mesh}`` and a discrete filter ``a`` of order
``L >= 2``, the Hurst index and diffusion scale are identified from the
variations of ``a`` and its dilation ``a2``::

    H     = 1/2 * log2(V(a2) / V(a))
    sigma = sqrt(-2 * mean_sq(a) / (sum_{k,l} a_k a_l |k - l|^2H * mesh^2H))

where ``V`` is the sum of squared filter outputs and ``mean_sq`` is that sum
divided by the number of filter positions. The drift follows from the
ergodic second moment ``mu2 = sigma^2 Gamma(2H + 1) / (2 lam^2H)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb

from .errors import FilterInconsistencyError, InsufficientVariationError

__all__ = [
    "Filter",
    "QgvEstimates",
    "classical_filter",
    "daubechies_filter",
    "dilate_filter",
    "get_filter",
    "quadratic_variation",
    "estimate_h_sigma",
    "estimate_lambda",
    "estimate_qgv",
    "LAMBDA_VALID_H",
]

MOMENT_TOL = 1e-10

# drift consistency is only established for H in this open interval
LAMBDA_VALID_H = (0.5, 0.75)

_DAUBECHIES_4 = (0.48296291314453, -0.8365163037378, 0.22414386804201, 0.12940952255126)


def _moment(coefs: np.ndarray, j: int) -> float:
    k = np.arange(len(coefs), dtype=float)
    return float(np.sum(coefs * k**j))


@dataclass(frozen=True)
class Filter:
    """
    A discrete filter ``(a_0, ..., a_K)`` of order at least 1.

    The order is the number of leading vanishing moments
    ``sum_k a_k k^j``, checked to an absolute tolerance of 1e-10.
    """

    coefficients: tuple[float, ...]
    name: str = "custom"
    order: int = field(init=False)

    def __post_init__(self):
        coefs = np.asarray(self.coefficients, dtype=float)
        if coefs.ndim != 1 or len(coefs) < 2:
            raise ValueError("a filter needs at least two coefficients")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in coefs))
        order = 0
        while order < len(coefs) and abs(_moment(coefs, order)) <= MOMENT_TOL:
            order += 1
        if order == 0:
            raise ValueError("filter coefficients must sum to zero (order >= 1)")
        if order >= len(coefs):
            raise ValueError("all filter moments vanish; filter is degenerate")
        object.__setattr__(self, "order", order)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coefficients)

    @property
    def length(self) -> int:
        return len(self.coefficients)

    @property
    def normalization(self) -> float:
        """``sum_k (-1)^(1-k) a_k``."""
        k = np.arange(self.length)
        return float(np.sum((-1.0) ** (1 - k) * self.array))

    def moment(self, j: int) -> float:
        return _moment(self.array, j)


def classical_filter(k_order: int = 2) -> Filter:
    """
    Binomial filter ``a_k = (-1)^(1-k) binom(K, k) / 2^K`` of order K.

    >>> classical_filter(2).coefficients
    (-0.25, 0.5, -0.25)
    """
    k_order = int(k_order)
    if k_order < 2:
        raise ValueError(f"classical filter needs K >= 2, got {k_order}")
    k = np.arange(k_order + 1)
    coefs = (-1.0) ** (1 - k) * comb(k_order, k, exact=False) / 2.0**k_order
    return Filter(tuple(coefs), name=f"classical-k{k_order}")


def daubechies_filter() -> Filter:
    """Four-tap Daubechies filter scaled by ``1/sqrt(2)`` (order 2)."""
    return Filter(tuple(c / math.sqrt(2.0) for c in _DAUBECHIES_4), name="daubechies4")


def dilate_filter(f: Filter) -> Filter:
    """Spread the coefficients onto even indices: ``a2[2k] = a[k]``, zeros elsewhere."""
    coefs = np.zeros(2 * (f.length - 1) + 1)
    coefs[::2] = f.array
    return Filter(tuple(coefs), name=f"{f.name}-dilated")


def get_filter(name: str) -> Filter:
    """Look up a filter by CLI name: ``classical-kN`` or ``daubechies4``."""
    if name == "daubechies4":
        return daubechies_filter()
    if name.startswith("classical-k"):
        return classical_filter(int(name[len("classical-k"):]))
    raise ValueError(f"unknown filter {name!r}")


def _filtered(samples: np.ndarray, f: Filter) -> np.ndarray:
    if len(samples) < f.length:
        raise ValueError(
            f"need at least {f.length} samples for a filter of length {f.length}"
        )
    # output i is sum_k a_k x[i + k]
    return np.correlate(samples, f.array, mode="valid")


def quadratic_variation(samples, f: Filter) -> float:
    """Sum of squared filter outputs over all ``len(samples) - K`` positions."""
    x = np.asarray(samples, dtype=float)
    out = _filtered(x, f)
    return float(np.dot(out, out))


def _kernel_sum(f: Filter, h: float) -> float:
    a = f.array
    k = np.arange(f.length)
    lag = np.abs(k[:, None] - k[None, :]).astype(float)
    # 0^2H = 0 on the diagonal, whatever the sign of H
    kernel = np.zeros_like(lag)
    off = lag > 0
    kernel[off] = lag[off] ** (2 * h)
    return float(a @ kernel @ a)


def estimate_h_sigma(samples, f: Filter | None = None, mesh: float = 1.0) -> tuple[float, float]:
    """
    Estimate ``(H, sigma)`` from regularly spaced samples.

    Parameters
    ----------
    samples : array_like
        Observations on a grid of step ``mesh``; at least ``2 K + 1`` of them.
    f : Filter, optional
        Defaults to ``classical_filter(2)``.
    mesh : float
        Grid step.

    Raises
    ------
    InsufficientVariationError
        If either quadratic variation is zero.
    FilterInconsistencyError
        If the radicand of the scale estimator is not positive.
    """
    f = classical_filter(2) if f is None else f
    if mesh <= 0:
        raise ValueError("mesh must be positive")
    x = np.asarray(samples, dtype=float)
    f2 = dilate_filter(f)
    if len(x) < f2.length:
        raise ValueError(f"need at least {f2.length} samples, got {len(x)}")
    out = _filtered(x, f)
    v1 = float(np.dot(out, out))
    v2 = quadratic_variation(x, f2)
    if v1 <= 0 or v2 <= 0:
        raise InsufficientVariationError("quadratic variation is zero")
    h = 0.5 * math.log2(v2 / v1)
    denom = _kernel_sum(f, h) * mesh ** (2 * h)
    radicand = -2.0 * (v1 / len(out)) / denom
    if not radicand > 0 or not math.isfinite(radicand):
        raise FilterInconsistencyError(
            f"nonpositive radicand {radicand!r} in scale estimate (H={h:.4f})"
        )
    return h, math.sqrt(radicand)


def estimate_lambda(samples, h_hat: float, sigma_hat: float) -> tuple[float, float]:
    """
    Drift estimate from the empirical second moment.

    Returns
    -------
    lambda_hat : float
        ``(2 mu2 / (sigma^2 Gamma(2H + 1)))^(-1 / 2H)``.
    mu2_hat : float
        Mean of the squared samples.
    """
    if not 0 < h_hat < 1:
        raise ValueError(f"h_hat must lie in (0, 1), got {h_hat}")
    if not sigma_hat > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma_hat}")
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    mu2 = float(np.mean(x * x))
    if mu2 <= 0:
        raise InsufficientVariationError("second moment is zero")
    ratio = 2.0 * mu2 / (sigma_hat**2 * math.gamma(2 * h_hat + 1))
    return ratio ** (-1.0 / (2 * h_hat)), mu2


@dataclass(frozen=True)
class QgvEstimates:
    h_hat: float
    sigma_hat: float
    lambda_hat: float | None
    mu2_hat: float | None
    filter_used: Filter
    outside_validity: bool

    def to_dict(self) -> dict:
        return {
            "h_hat": self.h_hat,
            "sigma_hat": self.sigma_hat,
            "lambda_hat": self.lambda_hat,
            "mu2_hat": self.mu2_hat,
            "filter": self.filter_used.name,
            "filter_coefficients": list(self.filter_used.coefficients),
            "outside_validity": self.outside_validity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def estimate_qgv(
    samples,
    f: Filter | None = None,
    mesh: float = 1.0,
    force_lambda: bool = False,
) -> QgvEstimates:
    """
    Run the full ``(H, sigma, lambda)`` estimation.

    The drift is only consistent for ``0.5 < H < 0.75``. Outside that range
    a warning is issued and ``lambda_hat`` is left as ``None`` unless
    ``force_lambda`` is set, in which case it is computed and
    ``outside_validity`` is True.
    """
    f = classical_filter(2) if f is None else f
    h, sigma = estimate_h_sigma(samples, f, mesh)
    lo, hi = LAMBDA_VALID_H
    outside = not lo < h < hi
    lam = mu2 = None
    if outside:
        warnings.warn(
            f"H estimate {h:.4f} outside ({lo}, {hi}); drift estimate is not consistent there",
            stacklevel=2,
        )
    if (not outside or force_lambda) and 0 < h < 1:
        lam, mu2 = estimate_lambda(samples, h, sigma)
    return QgvEstimates(h, sigma, lam, mu2, f, outside)
