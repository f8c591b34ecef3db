"""
Fractional Brownian motion and fractional Gaussian noise.

Exact sampling by circulant embedding (Davies-Harte), with a Cholesky
fallback for the rare case where the embedding is not nonnegative definite.

All samplers take an explicit integer seed and draw from
``numpy.random.default_rng(seed)`` (PCG64), so a path is a pure function of
``(hurst, n, mesh, seed)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Literal

import numpy as np
from scipy import linalg

from .errors import NumericalDegeneracyError

__all__ = [
    "FgnPath",
    "check_hurst",
    "fbm_covariance",
    "fgn_autocovariance",
    "circulant_eigenvalues",
    "generate_fgn",
    "fgn_increments",
]

# eigenvalues in [-EIG_TOL, 0] are rounding noise and clamped to zero
EIG_TOL = 1e-10

Method = Literal["auto", "circulant", "cholesky"]


def check_hurst(h: float) -> float:
    """Return ``h`` as a float, rejecting values outside the open interval (0, 1)."""
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {h}")
    return h


def fbm_covariance(h: float, t, s):
    """
    Covariance ``E[B_t B_s]`` of standard fractional Brownian motion.

    Parameters
    ----------
    h : float
        Hurst index in (0, 1).
    t, s : float or array_like
        Nonnegative times; broadcast against each other.

    Returns
    -------
    float or ndarray
        ``0.5 * (t**2h + s**2h - |t - s|**2h)``.
    """
    h = check_hurst(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("times must be nonnegative")
    two_h = 2.0 * h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return out[()] if out.ndim == 0 else out


def fgn_autocovariance(h: float, n):
    """
    Autocovariance of unit-variance fractional Gaussian noise at lag ``n``.

    Uses the second-difference form ``0.5 * (|n+1|^2h + |n-1|^2h - 2 n^2h)``,
    which gives ``rho(0) = 1`` and decays like ``h (2h - 1) n^(2h - 2)``.
    """
    h = check_hurst(h)
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("lag must be nonnegative")
    two_h = 2.0 * h
    out = 0.5 * (np.abs(n + 1) ** two_h + np.abs(n - 1) ** two_h - 2.0 * n**two_h)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _eigenvalues_cached(h: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(h, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    eig.setflags(write=False)
    return eig


def circulant_eigenvalues(h: float, n: int) -> np.ndarray:
    """
    Eigenvalues of the size ``2n`` circulant embedding of the fGN covariance.

    Returned unclamped so callers can inspect the minimum.
    """
    return _eigenvalues_cached(check_hurst(h), int(n))


@lru_cache(maxsize=16)
def _cholesky_cached(h: float, n: int) -> np.ndarray:
    cov = linalg.toeplitz(fgn_autocovariance(h, np.arange(n)))
    try:
        factor = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(
            f"fGN covariance not positive definite (H={h}, n={n})"
        ) from exc
    factor.setflags(write=False)
    return factor


def _resolve_method(h: float, n: int, method: Method) -> str:
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")
    if method == "cholesky":
        return "cholesky"
    if circulant_eigenvalues(h, n).min() < -EIG_TOL:
        if method == "circulant":
            raise NumericalDegeneracyError(
                f"circulant embedding has negative eigenvalues (H={h}, n={n})"
            )
        return "cholesky"
    return "circulant"


def _draw(h: float, n: int, rngs: list[np.random.Generator], method: str) -> np.ndarray:
    if method == "cholesky":
        z = np.stack([rng.standard_normal(n) for rng in rngs])
        return z @ _cholesky_cached(h, n).T
    eig = np.clip(circulant_eigenvalues(h, n), 0.0, None)
    z = np.stack([rng.standard_normal((2, 2 * n)) for rng in rngs])
    w = np.sqrt(eig / (2 * n)) * (z[:, 0] + 1j * z[:, 1])
    return np.fft.fft(w, axis=-1).real[:, :n]


def fgn_increments(
    h: float,
    n: int,
    mesh: float = 1.0,
    seeds: Iterable[int] = (0,),
    method: Method = "auto",
) -> np.ndarray:
    """
    Raw fGN increments for several independent paths.

    Row ``i`` is drawn from ``default_rng(seeds[i])`` and is identical to
    ``generate_fgn(h, n, mesh, seeds[i]).increments`` up to the final
    cumulative-sum round trip performed by :func:`generate_fgn`.

    Returns
    -------
    ndarray, shape (len(seeds), n)
    """
    h = check_hurst(h)
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if mesh <= 0:
        raise ValueError("mesh must be positive")
    how = _resolve_method(h, n, method)
    rngs = [np.random.default_rng(seed) for seed in seeds]
    if not rngs:
        return np.empty((0, n))
    return _draw(h, n, rngs, how) * mesh**h


@dataclass(frozen=True)
class FgnPath:
    """
    A sampled fGN/fBm trajectory on the grid ``t_k = k * mesh``.

    ``cumulative`` has one more entry than ``increments`` and starts at 0;
    ``increments`` is exactly ``np.diff(cumulative)``.
    """

    hurst: float
    mesh: float
    increments: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.mesh * np.arange(len(self.cumulative))

    def to_csv(self, fh=None) -> str:
        """Write ``t,b_h,x`` rows (``x`` empty on the first row); return the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "b_h", "x"])
        for k, (t, b) in enumerate(zip(self.times, self.cumulative)):
            x = "" if k == 0 else repr(float(self.increments[k - 1]))
            writer.writerow([repr(float(t)), repr(float(b)), x])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def generate_fgn(
    h: float,
    n: int,
    mesh: float = 1.0,
    seed: int = 0,
    method: Method = "auto",
) -> FgnPath:
    """
    Sample ``n`` increments of fractional Gaussian noise and the fBm path.

    Parameters
    ----------
    h : float
        Hurst index in (0, 1).
    n : int
        Number of increments (>= 1).
    mesh : float
        Time step; increments have variance ``mesh**(2h)``.
    seed : int
        Seed for ``numpy.random.default_rng``.
    method : {"auto", "circulant", "cholesky"}
        ``"auto"`` uses circulant embedding and falls back to Cholesky when
        an embedding eigenvalue is below ``-1e-10``.

    Returns
    -------
    FgnPath
    """
    raw = fgn_increments(h, n, mesh, [seed], method)[0]
    cumulative = np.concatenate([[0.0], np.cumsum(raw)])
    increments = np.diff(cumulative)
    cumulative.setflags(write=False)
    increments.setflags(write=False)
    return FgnPath(float(h), float(mesh), increments, cumulative, int(seed))
