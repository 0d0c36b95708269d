import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from powerdep.errors import DegenerateSeriesError, DomainError
from powerdep.marginals import (
    MarginalFit,
    MarginalSpec,
    ar_garch_loglik,
    build_fit_from_params,
    filter_residuals,
    fit_ar_garch,
    pit_transform,
    simulate_ar_garch,
)

SPEC1 = MarginalSpec(lag_set=(1,), n_dummies=0)

# phi, omega, alpha, beta used by the recovery checks
TRUE_PARAMS = (0.5, 0.1, 0.1, 0.8)


def make_series(params, horizon, seed, spec=SPEC1, dummies=None, psi=()):
    phi, omega, alpha, beta = params
    fit = build_fit_from_params(
        spec, [phi] * len(spec.lag_set), psi, omega, alpha, beta
    )
    return simulate_ar_garch(fit, dummies, horizon, seed=seed)


class TestFit:
    def test_recovery_single_series(self):
        y = make_series(TRUE_PARAMS, 5000, seed=42)
        fit = fit_ar_garch(y, None, SPEC1)
        assert fit.converged
        assert abs(fit.phi[0] - 0.5) < 0.05
        assert abs((fit.alpha + fit.beta) - 0.9) < 0.08
        assert fit.omega > 0
        assert fit.alpha >= 0 and fit.beta >= 0
        assert fit.alpha + fit.beta < 1

    def test_recovery_with_higher_lags_and_dummies(self):
        rng = np.random.default_rng(5)
        T = 2000
        dmat = np.zeros((T, 14))
        dmat[:, 0] = (np.arange(T) % 31 < 5).astype(float)
        dmat[:, 12] = (np.arange(T) % 7 == 5).astype(float)
        dmat[:, 13] = (np.arange(T) % 7 == 6).astype(float)
        spec = MarginalSpec(lag_set=(1, 2, 7), n_dummies=14)
        psi = rng.normal(scale=0.5, size=14)
        true = build_fit_from_params(spec, [0.4, 0.2, 0.1], psi, 0.1, 0.1, 0.8)
        y = simulate_ar_garch(true, dmat, T, seed=5)
        fit = fit_ar_garch(y, dmat, spec)
        assert_allclose(fit.phi, [0.4, 0.2, 0.1], atol=0.1)
        assert abs(fit.alpha - 0.1) < 0.08
        assert abs(fit.beta - 0.8) < 0.15

    def test_iid_noise_alpha_near_zero(self):
        y = np.random.default_rng(7).standard_normal(3000)
        fit = fit_ar_garch(y, None, SPEC1)
        assert fit.alpha < 0.02
        assert abs(fit.phi[0]) < 0.05
        assert fit.alpha + fit.beta < 1

    def test_constant_series_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            fit_ar_garch(np.full(500, 3.0), None, SPEC1)

    def test_too_short_series(self):
        with pytest.raises(DomainError):
            fit_ar_garch(np.arange(40.0), None, SPEC1)

    def test_nan_rejected(self):
        y = np.ones(300)
        y[10] = np.nan
        with pytest.raises(DomainError):
            fit_ar_garch(y, None, SPEC1)

    def test_local_optimality_against_random_restarts(self):
        y = make_series(TRUE_PARAMS, 2000, seed=9)
        fit = fit_ar_garch(y, None, SPEC1)
        rng = np.random.default_rng(99)
        for _ in range(20):
            phi = rng.uniform(-0.9, 0.9)
            omega = rng.uniform(0.01, 1.0)
            alpha = rng.uniform(0.0, 0.5)
            beta = rng.uniform(0.0, 0.99 - alpha)
            ll = ar_garch_loglik(y, None, SPEC1, [phi], [], omega, alpha, beta)
            assert fit.loglik >= ll - 1e-6

    def test_loglik_matches_evaluator(self):
        y = make_series(TRUE_PARAMS, 1500, seed=3)
        fit = fit_ar_garch(y, None, SPEC1)
        ll = ar_garch_loglik(
            y, None, SPEC1, fit.phi, fit.psi, fit.omega, fit.alpha, fit.beta
        )
        assert_allclose(ll, fit.loglik, rtol=1e-12)

    def test_residual_length_and_pseudo_obs_range(self):
        spec = MarginalSpec(lag_set=(1, 2, 7), n_dummies=0)
        y = make_series((0.3, 0.1, 0.05, 0.85), 1200, seed=2, spec=spec)
        fit = fit_ar_garch(y, None, spec)
        assert fit.residuals.size == y.size - 7
        assert fit.sigma2_path.size == y.size - 7
        assert np.all(fit.pseudo_obs > 0) and np.all(fit.pseudo_obs < 1)


class TestFilter:
    def test_refilter_training_data_reproduces_residuals(self):
        y = make_series(TRUE_PARAMS, 2000, seed=11)
        fit = fit_ar_garch(y, None, SPEC1)
        eta = filter_residuals(fit, y)
        assert np.array_equal(eta, fit.residuals)

    def test_residual_moments(self):
        y = make_series(TRUE_PARAMS, 5000, seed=13)
        fit = fit_ar_garch(y, None, SPEC1)
        assert abs(fit.residuals.mean()) < 0.1
        assert abs(fit.residuals.var() - 1.0) < 0.1

    def test_constant_variance_case(self):
        # alpha = beta = 0 makes sigma2 equal omega from t=1 on
        y = make_series(TRUE_PARAMS, 800, seed=17)
        fit = build_fit_from_params(SPEC1, [0.5], [], 0.25, 0.0, 0.0)
        eta = filter_residuals(fit, y)
        eps = y[1:] - 0.5 * y[:-1]
        assert_allclose(eta[1:], eps[1:] / 0.5, rtol=0, atol=0)

    def test_eta_refit_has_no_dynamics(self):
        y = make_series(TRUE_PARAMS, 5000, seed=19)
        fit = fit_ar_garch(y, None, SPEC1)
        refit = fit_ar_garch(fit.residuals, None, SPEC1)
        assert abs(refit.phi[0]) < 0.05
        assert refit.alpha < 0.05

    def test_ljung_box_whiteness_monte_carlo(self):
        # 99% critical value of chi-square with 10 df
        crit = stats.chi2.ppf(0.99, 10)
        ok = 0
        reps = 200
        for seed in range(reps):
            y = make_series(TRUE_PARAMS, 1000, seed=1000 + seed)
            fit = fit_ar_garch(y, None, SPEC1)
            eta = fit.residuals
            n = eta.size
            centered = eta - eta.mean()
            denom = centered @ centered
            acf = np.array(
                [centered[:-k] @ centered[k:] for k in range(1, 11)]
            ) / denom
            q = n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, 11)))
            ok += q < crit
        assert ok >= 0.95 * reps

    def test_recursion_is_deterministic(self):
        y = make_series(TRUE_PARAMS, 1000, seed=23)
        fit = fit_ar_garch(y, None, SPEC1)
        assert np.array_equal(filter_residuals(fit, y), filter_residuals(fit, y))


PIT_CASES = [
    (0.0, 0.5),
    (1.96, 0.9750021048517795),
    (-1.96, 0.024997895148220484),
    (1.0, 0.8413447460685429),
]


class TestPit:
    @pytest.mark.parametrize("eta,expected", PIT_CASES)
    def test_gaussian_values(self, eta, expected):
        assert_allclose(pit_transform(np.array([eta]))[0], expected, rtol=1e-12)

    def test_rank_mode(self):
        assert_allclose(
            pit_transform(np.array([3.0, -1.0, 0.5]), mode="rank"),
            [0.75, 0.25, 0.5],
        )

    def test_rank_mode_is_permutation_of_grid(self):
        eta = np.random.default_rng(31).standard_normal(57)
        u = pit_transform(eta, mode="rank")
        assert_allclose(np.sort(u), np.arange(1, 58) / 58.0)

    def test_output_strictly_inside_unit_interval(self):
        u = pit_transform(np.array([-40.0, 0.0, 40.0]))
        assert np.all(u > 0) and np.all(u < 1)

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            pit_transform(np.zeros(3), mode="ecdf")

    @given(st.floats(-6, 6))
    def test_monotone(self, x):
        lo, hi = pit_transform(np.array([x, x + 0.5]))
        assert lo < hi


class TestSimulate:
    def test_iid_unit_variance(self):
        fit = build_fit_from_params(SPEC1, [0.0], [], 1.0, 0.0, 0.0)
        y = simulate_ar_garch(fit, None, 50000, seed=1)
        assert abs(y.var() - 1.0) < 0.02
        assert abs(y.mean()) < 0.02

    def test_determinism(self):
        fit = build_fit_from_params(SPEC1, [0.5], [], 0.1, 0.1, 0.8)
        a = simulate_ar_garch(fit, None, 500, seed=77)
        b = simulate_ar_garch(fit, None, 500, seed=77)
        assert np.array_equal(a, b)
        c = simulate_ar_garch(fit, None, 500, seed=78)
        assert not np.array_equal(a, c)

    def test_garch_excess_kurtosis(self):
        fit = build_fit_from_params(SPEC1, [0.0], [], 0.05, 0.15, 0.8)
        y = simulate_ar_garch(fit, None, 20000, seed=11)
        assert stats.kurtosis(y, fisher=False) > 3.0

    def test_shock_injection_reproduces_recursion(self):
        fit = build_fit_from_params(SPEC1, [0.5], [], 0.1, 0.1, 0.8)
        shocks = np.random.default_rng(41).standard_normal(200)
        a = simulate_ar_garch(fit, None, 200, seed=5, shocks=shocks)
        b = simulate_ar_garch(fit, None, 200, seed=5, shocks=shocks)
        assert np.array_equal(a, b)

    def test_bad_horizon(self):
        fit = build_fit_from_params(SPEC1, [0.0], [], 1.0, 0.0, 0.0)
        with pytest.raises(DomainError):
            simulate_ar_garch(fit, None, 0, seed=1)


class TestSpecDefaults:
    @pytest.mark.parametrize(
        "variable,lags",
        [("price", (1, 2, 7)), ("demand", (1,)), ("wind", (1,)), ("solar", (1,))],
    )
    def test_default_lag_sets(self, variable, lags):
        assert MarginalSpec.for_variable(variable, n_dummies=14).lag_set == lags

    def test_bad_lag_sets(self):
        with pytest.raises(DomainError):
            MarginalSpec(lag_set=(0,))
        with pytest.raises(DomainError):
            MarginalSpec(lag_set=(2, 1))
        with pytest.raises(DomainError):
            MarginalSpec(lag_set=())


class TestSerialization:
    def test_json_round_trip_preserves_filtering(self):
        T = 1500
        dmat = np.zeros((T, 14))
        dmat[:, 3] = (np.arange(T) % 23 < 4).astype(float)
        spec = MarginalSpec(lag_set=(1, 2, 7), n_dummies=14)
        true = build_fit_from_params(
            spec, [0.4, 0.2, 0.1], np.linspace(-1, 1, 14), 0.1, 0.1, 0.8
        )
        y = simulate_ar_garch(true, dmat, T, seed=5)
        fit = fit_ar_garch(y, dmat, spec)
        blob = json.dumps(fit.to_json_dict(), sort_keys=True)
        back = MarginalFit.from_json_dict(json.loads(blob), series=y, dummies=dmat)
        assert np.array_equal(back.residuals, fit.residuals)
        assert np.array_equal(back.phi, fit.phi)
        assert back.omega == fit.omega
        assert back.alpha == fit.alpha
        assert back.beta == fit.beta
        assert back.loglik == fit.loglik

    def test_params_only_round_trip(self):
        fit = build_fit_from_params(SPEC1, [0.5], [], 0.1, 0.1, 0.8)
        data = json.loads(json.dumps(fit.to_json_dict()))
        back = MarginalFit.from_json_dict(data)
        assert back.spec == fit.spec
        assert back.omega == fit.omega
