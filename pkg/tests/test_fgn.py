import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracmort.fgn import (
    EIG_TOL,
    circulant_eigenvalues,
    check_hurst,
    fbm_covariance,
    fgn_autocovariance,
    fgn_increments,
    generate_fgn,
)

hursts = st.floats(min_value=0.01, max_value=0.99)
times = st.floats(min_value=0.0, max_value=100.0)


def lag_corr(x, k):
    x = x - x.mean()
    return float(np.dot(x[:-k], x[k:]) / np.dot(x, x))


class TestHurstIndex:
    @pytest.mark.parametrize("h", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_outside_open_interval(self, h):
        with pytest.raises(ValueError):
            check_hurst(h)

    @pytest.mark.parametrize("h", [1e-6, 0.5, 0.999999])
    def test_accepts_interior(self, h):
        assert check_hurst(h) == h


class TestFbmCovariance:
    def test_bm_is_min(self):
        assert fbm_covariance(0.5, 3, 5) == 3

    def test_diagonal(self):
        assert fbm_covariance(0.7, 2, 2) == pytest.approx(2**1.4, rel=1e-14)
        assert fbm_covariance(0.7, 2, 2) == pytest.approx(2.6390158215, rel=1e-9)

    def test_off_diagonal_value(self):
        assert fbm_covariance(0.7, 1, 2) == pytest.approx(0.5 * 2**1.4, rel=1e-14)
        assert fbm_covariance(0.7, 1, 2) == pytest.approx(1.3195079108, rel=1e-9)

    def test_rejects_negative_times(self):
        with pytest.raises(ValueError):
            fbm_covariance(0.7, -1.0, 2.0)

    def test_broadcasts(self):
        t = np.linspace(0, 5, 11)
        out = fbm_covariance(0.5, t[:, None], t[None, :])
        assert out.shape == (11, 11)
        np.testing.assert_allclose(out, np.minimum.outer(t, t), atol=1e-12)

    @given(hursts, times, times)
    def test_symmetric(self, h, t, s):
        assert fbm_covariance(h, t, s) == fbm_covariance(h, s, t)

    @given(times, times)
    def test_half_reduces_to_min(self, t, s):
        assert fbm_covariance(0.5, t, s) == pytest.approx(min(t, s), abs=1e-12)

    @given(hursts, times, times)
    def test_cauchy_schwarz(self, h, t, s):
        c = fbm_covariance(h, t, s)
        assert c * c <= fbm_covariance(h, t, t) * fbm_covariance(h, s, s) * (1 + 1e-12) + 1e-300


class TestFgnAutocovariance:
    @pytest.mark.parametrize(
        "h, n, expected",
        [(0.5, 3, 0.0), (0.7, 0, 1.0), (0.7, 1, 2**0.4 - 1)],
    )
    def test_values(self, h, n, expected):
        assert fgn_autocovariance(h, n) == pytest.approx(expected, abs=1e-14)

    def test_lag_one_figure(self):
        assert fgn_autocovariance(0.7, 1) == pytest.approx(0.3195, abs=5e-5)

    @given(hursts, st.integers(min_value=0, max_value=500))
    def test_matches_bilinear_form(self, h, n):
        # Cov(B_{i+1} - B_i, B_{i+n+1} - B_{i+n}) with i = 3
        i = 3
        cov = (
            fbm_covariance(h, i + 1, i + n + 1)
            - fbm_covariance(h, i + 1, i + n)
            - fbm_covariance(h, i, i + n + 1)
            + fbm_covariance(h, i, i + n)
        )
        assert fgn_autocovariance(h, n) == pytest.approx(cov, abs=1e-12 * max(1.0, (i + n) ** (2 * h)))

    @given(st.floats(min_value=0.51, max_value=0.99), st.integers(min_value=1, max_value=10_000))
    def test_positive_above_half(self, h, n):
        assert fgn_autocovariance(h, n) > 0

    @given(st.floats(min_value=0.01, max_value=0.49), st.integers(min_value=1, max_value=10_000))
    def test_negative_below_half(self, h, n):
        assert fgn_autocovariance(h, n) < 0

    @pytest.mark.parametrize("h", [0.2, 0.6, 0.8, 0.95])
    def test_power_law_tail(self, h):
        rel = []
        # the direct formula cancels catastrophically much beyond lag 1e3 near H = 1
        for n in (10, 100, 1000):
            tail = h * (2 * h - 1) * n ** (2 * h - 2)
            rel.append(abs(fgn_autocovariance(h, n) - tail) / abs(tail))
        assert all(a > b for a, b in zip(rel, rel[1:]))
        assert rel[-1] < 1e-5

    def test_rejects_negative_lag(self):
        with pytest.raises(ValueError):
            fgn_autocovariance(0.7, -1)


class TestCirculantEmbedding:
    @pytest.mark.parametrize("h", [0.05, 0.3, 0.5, 0.7, 0.95, 0.99])
    @pytest.mark.parametrize("n", [1, 2, 17, 1000, 4096])
    def test_eigenvalues_nonnegative(self, h, n):
        assert circulant_eigenvalues(h, n).min() >= -EIG_TOL

    def test_eigenvalues_read_only(self):
        with pytest.raises(ValueError):
            circulant_eigenvalues(0.7, 8)[0] = 0.0


class TestGenerateFgn:
    def test_path_invariants(self):
        p = generate_fgn(0.7, 257, mesh=0.5, seed=3)
        assert p.cumulative[0] == 0.0
        assert len(p.cumulative) == len(p.increments) + 1
        assert np.array_equal(np.diff(p.cumulative), p.increments)
        np.testing.assert_array_equal(p.times, 0.5 * np.arange(258))

    def test_deterministic(self):
        a = generate_fgn(0.7, 1000, seed=11)
        b = generate_fgn(0.7, 1000, seed=11)
        assert np.array_equal(a.increments, b.increments)
        assert not np.array_equal(a.increments, generate_fgn(0.7, 1000, seed=12).increments)

    def test_arrays_immutable(self):
        p = generate_fgn(0.7, 16, seed=0)
        with pytest.raises(ValueError):
            p.increments[0] = 1.0

    def test_white_noise_lag_one(self):
        x = generate_fgn(0.5, 1000, seed=42).increments
        assert abs(lag_corr(x, 1)) < 0.07

    def test_persistent_lag_one(self):
        x = generate_fgn(0.7, 2**14, seed=7).increments
        assert lag_corr(x, 1) == pytest.approx(0.3195, abs=0.02)

    @pytest.mark.parametrize("h", [0.3, 0.7])
    def test_mesh_scaling(self, h):
        unit = generate_fgn(h, 64, mesh=1.0, seed=5).increments
        fine = generate_fgn(h, 64, mesh=0.01, seed=5).increments
        np.testing.assert_allclose(fine, unit * 0.01**h, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("h", [0.3, 0.5, 0.8])
    def test_cholesky_and_circulant_agree_in_distribution(self, h):
        n, seeds = 8, range(4000)
        emp = {}
        for method in ("circulant", "cholesky"):
            x = fgn_increments(h, n, seeds=seeds, method=method)
            emp[method] = np.mean(x[:, 0] * x[:, 1])
        target = fgn_autocovariance(h, 1)
        se = math.sqrt((1 + target**2) / 4000)
        for value in emp.values():
            assert abs(value - target) < 4 * se

    def test_batched_rows_match_single_paths(self):
        batch = fgn_increments(0.65, 100, seeds=[3, 4, 5])
        for row, seed in zip(batch, [3, 4, 5]):
            np.testing.assert_array_equal(row, fgn_increments(0.65, 100, seeds=[seed])[0])

    def test_self_similarity(self):
        # Var(B_t) = t^2H at the endpoint, across seeds
        h, n = 0.75, 64
        ends = fgn_increments(h, n, seeds=range(4000)).sum(axis=1)
        var = np.mean(ends**2)
        assert var == pytest.approx(n ** (2 * h), rel=4 * math.sqrt(2 / 4000))

    def test_csv(self):
        text = generate_fgn(0.6, 3, seed=1).to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "t,b_h,x"
        assert lines[1].endswith(",")
        assert lines[1].split(",")[1] == "0.0"
        assert len(lines) == 5

    @pytest.mark.parametrize("kwargs", [{"n": 0}, {"mesh": 0.0}, {"mesh": -1.0}])
    def test_rejects_bad_arguments(self, kwargs):
        args = {"h": 0.7, "n": 10, "mesh": 1.0, "seed": 0} | kwargs
        with pytest.raises(ValueError):
            generate_fgn(**args)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            generate_fgn(0.7, 10, method="wavelet")
