"""
Acceptance checks. Each test records a one-line verdict that is repeated in
the terminal summary under "acceptance criteria".
"""

import math
import time
import warnings

import mpmath
import numpy as np
import pytest

from fracmort.data import MODEL_MAX_AGE, extract_cohort, load_bundled_fixture
from fracmort.fgn import fbm_covariance, fgn_autocovariance, fgn_increments
from fracmort.fou import FouParams, fou_variance, scaled_variance_bound, simulate_fou_paths
from fracmort.hurst import (
    estimate_local_whittle,
    estimate_rescaled_range,
    estimate_rs_analysis,
)
from fracmort.mortality import (
    CohortSeries,
    MortalityModel,
    fit_alpha0,
    fit_model,
    forecast,
    residuals,
    simulate_hazard_paths,
    survival_probability,
)
from fracmort.qgv import classical_filter, estimate_h_sigma, estimate_lambda

SEEDS_50 = range(50)


def model(**overrides):
    p = {"h0": 0.01, "alpha0": -0.02, "hurst": 0.7, "sigma": 0.3, "lam": 0.5, "horizon_T": 55.0}
    return MortalityModel.from_params(**(p | overrides))


def sd_band_se(paths):
    """Monte Carlo standard errors of mean, mean - 2 sd and mean + 2 sd per column."""
    n = paths.shape[0]
    sd = paths.std(axis=0, ddof=1)
    se_mean = sd / math.sqrt(n)
    dev2 = (paths - paths.mean(axis=0)) ** 2
    # delta method: se(sd) = se(var) / (2 sd)
    se_sd = dev2.std(axis=0, ddof=1) / math.sqrt(n) / (2 * sd)
    return se_mean, np.sqrt(se_mean**2 + 4 * se_sd**2)


class TestCriterion01CovarianceExactness:
    def test_covariance(self, record_criterion):
        grid = np.linspace(0.0, 10.0, 100)
        t, s = np.meshgrid(grid, grid)
        err_cov = float(np.max(np.abs(fbm_covariance(0.5, t, s) - np.minimum(t, s))))
        err_rho = float(np.max(np.abs(fgn_autocovariance(0.5, np.arange(1, 51)))))
        ok = err_cov < 1e-12 and err_rho < 1e-12
        record_criterion(1, ok, f"max |R - min| = {err_cov:.1e}, max |rho(1..50)| = {err_rho:.1e}")
        assert ok


class TestCriterion02GeneratorFidelity:
    def test_autocovariance(self, record_criterion):
        n, worst = 2**14, 0.0
        for h in (0.55, 0.7, 0.85):
            x = fgn_increments(h, n, seeds=SEEDS_50)
            for lag in range(1, 6):
                # mean known to be zero, so no centering
                per_seed = np.mean(x[:, :-lag] * x[:, lag:], axis=1)
                se = per_seed.std(ddof=1) / math.sqrt(len(per_seed))
                z = abs(per_seed.mean() - fgn_autocovariance(h, lag)) / se
                worst = max(worst, z)
        ok = worst < 3
        record_criterion(2, ok, f"largest |z| over 3 H x 5 lags = {worst:.2f} (limit 3)")
        assert ok


class TestCriterion03HurstRecovery:
    def test_recovery(self, record_criterion):
        tol = {"rs-analysis": 0.05, "whittle": 0.05, "rescaled-range": 0.07}
        fns = {"rs-analysis": estimate_rs_analysis, "whittle": estimate_local_whittle, "rescaled-range": estimate_rescaled_range}
        worst = {k: 0.0 for k in fns}
        means = {k: [] for k in fns}
        for h in (0.55, 0.65, 0.75):
            x = fgn_increments(h, 2**14, seeds=SEEDS_50)
            for name, fn in fns.items():
                mean = float(np.mean([fn(row).value for row in x]))
                means[name].append(mean)
                worst[name] = max(worst[name], abs(mean - h))
        ok = all(worst[k] <= tol[k] for k in fns)
        ok &= all(m[0] < m[1] < m[2] for m in means.values())
        detail = ", ".join(f"{k} max bias {worst[k]:.3f} (tol {tol[k]})" for k in fns)
        record_criterion(3, ok, detail)
        assert ok


class TestCriterion04QgvAnchor:
    def test_anchor(self, record_criterion):
        b = fgn_increments(0.5, 100_000, seeds=[11])[0]
        x = np.concatenate([[0.0], np.cumsum(b)])
        out = np.correlate(x, classical_filter(2).array, mode="valid")
        sq = out**2
        # outputs two or more steps apart share no increments; batches of 100 are nearly independent
        batches = sq[: len(sq) // 100 * 100].reshape(-1, 100).mean(axis=1)
        se = batches.std(ddof=1) / math.sqrt(len(batches))
        z = abs(sq.mean() - 0.125) / se
        _, sigma = estimate_h_sigma(x, classical_filter(2), 1.0)
        ok = z < 3 and abs(sigma - 1) < 0.03
        record_criterion(4, ok, f"mean square {sq.mean():.5f} vs 1/8 (|z| = {z:.2f}), sigma_hat = {sigma:.4f}")
        assert ok


class TestCriterion05QgvConsistency:
    def test_consistency(self, record_criterion):
        paths = simulate_fou_paths(FouParams(1.0, 1.0, 0.7, 0.01), 4999, range(2000, 2050))
        est = []
        for p in paths:
            h, s = estimate_h_sigma(p, classical_filter(2), 0.01)
            lam, _ = estimate_lambda(p, h, s)
            est.append((h, s, lam))
        h, s, lam = np.mean(est, axis=0)
        ok = abs(h - 0.7) <= 0.03 and abs(s - 1) <= 0.05 and abs(lam - 1) <= 0.15
        record_criterion(5, ok, f"mean H {h:.4f}, sigma {s:.4f}, lambda {lam:.4f}")
        assert ok


class TestCriterion06VarianceFormulas:
    def test_variance(self, record_criterion):
        worst_z = 0.0
        bound_ok = True
        mesh, n_paths = 0.01, 4000
        for h in (0.5, 0.7):
            p = FouParams(1.0, 1.0, h, mesh)
            y = simulate_fou_paths(p, 500, range(n_paths))
            for t in (0.5, 1.0, 2.0, 5.0):
                yt = y[:, int(round(t / mesh))]
                se = np.std(yt**2, ddof=1) / math.sqrt(n_paths)
                worst_z = max(worst_z, abs(np.mean(yt**2) - fou_variance(p, t)) / se)
            # scaled variance of every simulated time point against the time-free bound
            horizon = 5.0
            sample = horizon ** (-2 * h) * y.var(axis=0, ddof=1)
            bound_ok &= bool(np.all(sample <= p.sigma**2))
            for k in range(0, 501, 10):
                value, bound = scaled_variance_bound(p, k * mesh, horizon)
                bound_ok &= value <= bound <= p.sigma**2

        closed_err = 0.0
        for lam in (0.1, 0.5, 1.0, 3.0):
            for sigma in (0.2, 1.0, 2.5):
                for t in (0.01, 0.5, 2.0, 10.0, 100.0):
                    exact = sigma**2 * (1 - math.exp(-2 * lam * t)) / (2 * lam)
                    closed_err = max(closed_err, abs(fou_variance(FouParams(lam, sigma, 0.5), t) - exact))
        ok = worst_z < 3 and closed_err < 1e-9 and bound_ok
        record_criterion(
            6, ok, f"largest MC |z| {worst_z:.2f}, H=1/2 closed-form error {closed_err:.1e}, bound held: {bound_ok}"
        )
        assert ok


def _example_cohort(seed):
    y = simulate_fou_paths(FouParams(0.5, 0.3, 0.7), 54, [seed])[0]
    t = np.arange(55.0)
    return CohortSeries(age=50, sex="F", years=np.arange(1950, 2005), rates=0.01 * np.exp(0.02 * t + y))


class TestCriterion07Alpha0:
    def test_alpha0(self, record_criterion):
        t = np.arange(55.0)
        exact = CohortSeries(age=0, sex="M", years=np.arange(1950, 2005), rates=0.01 * np.exp(0.02 * t))
        err_exact = abs(fit_alpha0(exact)[1] - 0.02)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mean = float(np.mean([fit_model(_example_cohort(s)).alpha0 for s in range(100, 120)]))
        ok = err_exact < 1e-12 and abs(mean - 0.02) <= 0.005
        record_criterion(7, ok, f"noiseless error {err_exact:.1e}, 20-seed mean {mean:.5f} vs 0.02")
        assert ok


class TestCriterion08PaperRange:
    @pytest.mark.xfail(
        strict=True,
        reason=(
            "rescaled-range H on 55-point fOU residuals is too dispersed (sd about 0.12) "
            "and biased upward to put 90% of ages in (0.55, 0.82)"
        ),
    )
    def test_range(self, record_criterion):
        table = load_bundled_fixture()
        shares = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for sex in ("F", "M", "T"):
                values = []
                for age in range(MODEL_MAX_AGE + 1):
                    c = extract_cohort(table, age, sex, 1950, 2004)
                    values.append(estimate_rescaled_range(residuals(c, *fit_alpha0(c))).value)
                values = np.array(values)
                shares[sex] = float(np.mean((values > 0.55) & (values < 0.82)))
        ok = min(shares.values()) >= 0.90
        detail = ", ".join(f"{sex} {share:.1%}" for sex, share in shares.items())
        record_criterion(8, ok, f"ages 0-90 with H in (0.55, 0.82): {detail}; need 90%")
        assert ok


class TestCriterion09Forecast:
    def test_protocol(self, record_criterion):
        table = load_bundled_fixture()
        ages = (0, 10, 20, 30, 50, 60, 70, 90)
        start = time.perf_counter()
        bands = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for age in ages:
                m = fit_model(extract_cohort(table, age, "F", 1950, 2004))
                bands.append(forecast(m, 55, n_paths=10_000, seed=1))
        elapsed = time.perf_counter() - start
        repeat = forecast(fit_model_quiet(table, ages[-1]), 55, n_paths=10_000, seed=1)
        deterministic = repeat.to_csv() == bands[-1].to_csv()

        m = model()
        band = forecast(m, 55, n_paths=10_000, seed=1)
        _, truth = simulate_hazard_paths(m, 54, 4000, seed=1_000_000)
        inside = (truth[:, 1:] >= band.lower[1:]) & (truth[:, 1:] <= band.upper[1:])
        coverage = float(inside.mean())
        ok = elapsed < 60 and deterministic and abs(coverage - 0.955) <= 0.02
        record_criterion(
            9, ok, f"8 ages x 10000 paths in {elapsed:.1f} s, deterministic: {deterministic}, coverage {coverage:.4f}"
        )
        assert ok


def fit_model_quiet(table, age):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_model(extract_cohort(table, age, "F", 1950, 2004))


class TestCriterion10BrownianDegeneracy:
    def test_degeneracy(self, record_criterion):
        m = model(hurst=0.5)
        n_paths, n_years, seed = 10_000, 55, 1
        band = forecast(m, n_years, n_paths=n_paths, seed=seed)

        # standard OU with the exact Gaussian transition, driven by the same Brownian increments
        z = fgn_increments(0.5, n_years - 1, seeds=range(seed, seed + n_paths))
        decay = math.exp(-m.lam)
        scale = m.sigma * math.sqrt((1 - decay**2) / (2 * m.lam))
        y = np.zeros((n_paths, n_years))
        for k in range(1, n_years):
            y[:, k] = decay * y[:, k - 1] + scale * z[:, k - 1]
        t = np.arange(n_years)
        ref = m.h0 * np.exp(m.alpha0 * t + m.alpha1 * y)
        mean = ref.mean(axis=0)
        sd = ref.std(axis=0, ddof=1)

        se_mean, se_edge = sd_band_se(ref[:, 1:])
        z_mean = np.abs(band.mean[1:] - mean[1:]) / se_mean
        z_upper = np.abs(band.upper[1:] - (mean + 2 * sd)[1:]) / se_edge
        z_lower = np.abs(band.lower[1:] - (mean - 2 * sd)[1:]) / se_edge
        worst = float(max(z_mean.max(), z_upper.max(), z_lower.max()))
        exact_start = band.mean[0] == m.h0 and bool(np.all(ref[:, 0] == m.h0))
        ok = worst < 3 and exact_start
        record_criterion(
            10, ok, f"largest band discrepancy {worst:.2f} MC se (mean {z_mean.max():.2f}, "
            f"upper {z_upper.max():.2f}, lower {z_lower.max():.2f})"
        )
        assert ok


class TestCriterion11Survival:
    def test_survival(self, record_criterion):
        worst = 0.0
        for c, t, horizon in ((0.01, 0.0, 1.0), (0.05, 3.0, 20.0), (0.2, 0.0, 7.5)):
            det = model(h0=c, alpha0=0.0, sigma=1e-12)
            est, _ = survival_probability(det, t, horizon, n_paths=10)
            worst = max(worst, abs(est - math.exp(-c * (horizon - t))))

        jensen = []
        for overrides in ({}, {"sigma": 2.0}, {"sigma": 4.0, "lam": 0.2}, {"hurst": 0.9, "sigma": 3.0}):
            est, se, integrals = survival_probability(
                model(**overrides), 0.0, 30.0, n_paths=4000, seed=7, return_paths=True
            )
            jensen.append(est >= math.exp(-integrals.mean()) - 2 * se)
        ok = worst < 1e-9 and all(jensen)
        record_criterion(11, ok, f"closed-form error {worst:.1e}, Jensen held in {sum(jensen)}/{len(jensen)} models")
        assert ok


def test_gamma_oracle_for_stationary_limit():
    # the long-run variance uses the standard library gamma; check it against arbitrary precision
    for x in np.linspace(1.0, 3.0, 41):
        assert math.gamma(x) == pytest.approx(float(mpmath.gamma(x)), rel=1e-14)
