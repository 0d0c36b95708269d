"""AR(p)-GARCH(1,1) marginal models with calendar dummies.

The mean equation regresses the series on a fixed set of its own lags and
on calendar dummy columns; the innovation variance follows a GARCH(1,1)
recursion with Gaussian innovations.  All parameters are estimated in one
joint maximum-likelihood pass, optimised in an unconstrained
parameterisation (log variance level, simplex-mapped ARCH/GARCH weights)
so stationarity and positivity hold at every iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats
from scipy.signal import lfilter

from .errors import (
    DegenerateSeriesError,
    DomainError,
    OptimizationError,
)

#: hard stationarity margin: alpha + beta <= 1 - _STATIONARITY_GAP
_STATIONARITY_GAP = 1e-6

_PIT_CLIP = 1e-12

DEFAULT_LAG_SETS = {
    "price": (1, 2, 7),
    "demand": (1,),
    "wind": (1,),
    "solar": (1,),
}


@dataclass(frozen=True)
class MarginalSpec:
    """Configuration of one marginal model.

    Parameters
    ----------
    lag_set : tuple of int
        Autoregressive lags of the mean equation, strictly positive,
        strictly increasing.  Need not be contiguous.
    n_dummies : int
        Number of calendar dummy columns expected (14 for the standard
        month/weekend encoding; 0 for plain time-series use).
    innovation : str
        Innovation distribution; only ``"gaussian"`` is supported.
    """

    lag_set: tuple = (1,)
    n_dummies: int = 14
    innovation: str = "gaussian"

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lag_set)
        if not lags or any(l <= 0 for l in lags) or list(lags) != sorted(set(lags)):
            raise DomainError("lag_set must be strictly increasing positive integers")
        object.__setattr__(self, "lag_set", lags)
        if self.n_dummies < 0:
            raise DomainError("n_dummies must be non-negative")
        if self.innovation != "gaussian":
            raise DomainError("only gaussian innovations are supported")

    @property
    def max_lag(self):
        return self.lag_set[-1]

    @classmethod
    def for_variable(cls, variable, n_dummies=14):
        return cls(lag_set=DEFAULT_LAG_SETS.get(variable, (1,)), n_dummies=n_dummies)


@dataclass
class MarginalFit:
    """Fitted AR-GARCH marginal.

    ``sigma2_path``, ``residuals`` (standardized) and ``pseudo_obs`` all
    have length ``T - max_lag``; the first ``max_lag`` observations only
    feed the lagged regressors.
    """

    spec: MarginalSpec
    phi: np.ndarray
    psi: np.ndarray
    omega: float
    alpha: float
    beta: float
    sigma2_path: np.ndarray
    residuals: np.ndarray
    pseudo_obs: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    boundary: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "spec": {
                "lag_set": list(self.spec.lag_set),
                "n_dummies": self.spec.n_dummies,
                "innovation": self.spec.innovation,
            },
            "params": {
                "phi": [float(x) for x in self.phi],
                "psi": [float(x) for x in self.psi],
                "omega": float(self.omega),
                "alpha": float(self.alpha),
                "beta": float(self.beta),
            },
            "loglik": float(self.loglik),
            "diagnostics": {
                "converged": bool(self.converged),
                "n_iter": int(self.n_iter),
                "boundary": bool(self.boundary),
                **self.diagnostics,
            },
        }

    @classmethod
    def from_json_dict(cls, data, series=None, dummies=None):
        """Rebuild a fit from JSON; paths are refiltered when data is given."""
        spec = MarginalSpec(
            lag_set=tuple(data["spec"]["lag_set"]),
            n_dummies=int(data["spec"]["n_dummies"]),
            innovation=data["spec"]["innovation"],
        )
        params = data["params"]
        fit = cls(
            spec=spec,
            phi=np.asarray(params["phi"], dtype=np.float64),
            psi=np.asarray(params["psi"], dtype=np.float64),
            omega=float(params["omega"]),
            alpha=float(params["alpha"]),
            beta=float(params["beta"]),
            sigma2_path=np.empty(0),
            residuals=np.empty(0),
            pseudo_obs=np.empty(0),
            loglik=float(data["loglik"]),
            converged=bool(data["diagnostics"]["converged"]),
            n_iter=int(data["diagnostics"]["n_iter"]),
            boundary=bool(data["diagnostics"]["boundary"]),
            diagnostics={
                k: v
                for k, v in data["diagnostics"].items()
                if k not in ("converged", "n_iter", "boundary")
            },
        )
        if series is not None:
            eta, sigma2 = _filter_paths(fit, np.asarray(series, float), dummies)
            fit.residuals = eta
            fit.sigma2_path = sigma2
            fit.pseudo_obs = pit_transform(eta, mode="gaussian")
        return fit


def _dummy_matrix(dummies, n_expected, length):
    if n_expected == 0:
        return np.zeros((length, 0))
    if dummies is None:
        raise DomainError("dummies are required when the spec declares dummy columns")
    mat = getattr(dummies, "matrix", dummies)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != n_expected:
        raise DomainError(
            f"dummy matrix must have {n_expected} columns, got shape {mat.shape}"
        )
    if mat.shape[0] < length:
        raise DomainError("dummy matrix is shorter than the series")
    return mat[:length]


def _design(series, dmat, lag_set):
    max_lag = lag_set[-1]
    t_eff = series.size - max_lag
    cols = [series[max_lag - lag : max_lag - lag + t_eff] for lag in lag_set]
    return np.column_stack(cols + [dmat[max_lag:]]), series[max_lag:]


def _garch_path(eps, omega, alpha, beta, sigma2_init):
    # sigma2[0] = sigma2_init; sigma2[t] = omega + alpha*eps[t-1]^2 + beta*sigma2[t-1]
    drive = omega + alpha * eps[:-1] ** 2
    if drive.size == 0:
        return np.array([sigma2_init])
    rest = lfilter([1.0], [1.0, -beta], drive, zi=[beta * sigma2_init])[0]
    return np.concatenate(([sigma2_init], rest))


def _unpack(x, n_mean):
    mean = x[:n_mean]
    omega = np.exp(x[n_mean])
    total = (1.0 - _STATIONARITY_GAP) * special.expit(x[n_mean + 1])
    frac = special.expit(x[n_mean + 2])
    return mean, omega, total * frac, total * (1.0 - frac)


def _pack(mean, omega, alpha, beta):
    total = np.clip((alpha + beta) / (1.0 - _STATIONARITY_GAP), 1e-12, 1.0 - 1e-12)
    frac = np.clip(alpha / max(alpha + beta, 1e-300), 1e-12, 1.0 - 1e-12)
    return np.concatenate(
        [mean, [np.log(max(omega, 1e-300)), special.logit(total), special.logit(frac)]]
    )


def fit_ar_garch(series, dummies, spec):
    """Fit the AR-GARCH marginal by joint maximum likelihood.

    Parameters
    ----------
    series : array_like, shape (T,)
        Daily observations of one variable at a fixed hour.
    dummies : CalendarDummies or array_like or None
        Dummy matrix aligned with ``series`` (``spec.n_dummies`` columns).
    spec : MarginalSpec

    Returns
    -------
    MarginalFit

    Raises
    ------
    DegenerateSeriesError
        For constant input or zero-variance mean residuals.
    OptimizationError
        If the optimiser reports failure; carries the last iterate.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1:
        raise DomainError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DomainError("series contains non-finite values")
    max_lag = spec.max_lag
    if y.size <= max_lag + 50:
        raise DomainError(
            f"series length {y.size} is too short for max lag {max_lag} (need > {max_lag + 50})"
        )
    if np.ptp(y) == 0.0:
        raise DegenerateSeriesError("series is constant")

    dmat = _dummy_matrix(dummies, spec.n_dummies, y.size)
    design, target = _design(y, dmat, spec.lag_set)
    t_eff = target.size

    mean0, *_ = np.linalg.lstsq(design, target, rcond=None)
    eps0 = target - design @ mean0
    var0 = float(np.var(eps0))
    if var0 <= 0.0:
        raise DegenerateSeriesError("mean-equation residuals have zero variance")

    alpha0, beta0 = 0.05, 0.85
    omega0 = var0 * (1.0 - alpha0 - beta0)
    x0 = _pack(mean0, omega0, alpha0, beta0)
    n_mean = mean0.size
    log2pi = np.log(2.0 * np.pi)

    def negloglik(x):
        mean, omega, alpha, beta = _unpack(x, n_mean)
        eps = target - design @ mean
        sigma2_init = max(float(np.var(eps)), 1e-300)
        sigma2 = _garch_path(eps, omega, alpha, beta, sigma2_init)
        if not np.all(np.isfinite(sigma2)) or np.any(sigma2 <= 0.0):
            return 1e10
        val = 0.5 * np.sum(log2pi + np.log(sigma2) + eps * eps / sigma2)
        return val if np.isfinite(val) else 1e10

    res = optimize.minimize(
        negloglik,
        x0,
        method="L-BFGS-B",
        options={"maxiter": 500, "ftol": 1e-8},
    )
    mean, omega, alpha, beta = _unpack(res.x, n_mean)
    if not res.success and "ABNORMAL" in str(res.message).upper():
        raise OptimizationError(
            f"AR-GARCH optimisation failed: {res.message}",
            last_params={
                "phi": list(mean[: len(spec.lag_set)]),
                "psi": list(mean[len(spec.lag_set) :]),
                "omega": float(omega),
                "alpha": float(alpha),
                "beta": float(beta),
            },
        )

    eps = target - design @ mean
    sigma2_init = max(float(np.var(eps)), 1e-300)
    sigma2 = _garch_path(eps, omega, alpha, beta, sigma2_init)
    eta = eps / np.sqrt(sigma2)
    boundary = bool(alpha + beta > 1.0 - _STATIONARITY_GAP - 1e-4)
    fit = MarginalFit(
        spec=spec,
        phi=mean[: len(spec.lag_set)].copy(),
        psi=mean[len(spec.lag_set) :].copy(),
        omega=float(omega),
        alpha=float(alpha),
        beta=float(beta),
        sigma2_path=sigma2,
        residuals=eta,
        pseudo_obs=pit_transform(eta, mode="gaussian"),
        loglik=-float(res.fun),
        converged=bool(res.success),
        n_iter=int(res.nit),
        boundary=boundary,
        diagnostics={"t_eff": t_eff, "message": str(res.message)},
    )
    return fit


def ar_garch_loglik(series, dummies, spec, phi, psi, omega, alpha, beta):
    """Gaussian log-likelihood of the AR-GARCH model at given parameters.

    Uses the same effective sample and variance initialisation as
    ``fit_ar_garch``, so values are directly comparable with
    ``MarginalFit.loglik``.
    """
    y = np.asarray(series, dtype=np.float64)
    dmat = _dummy_matrix(dummies, spec.n_dummies, y.size)
    design, target = _design(y, dmat, spec.lag_set)
    mean = np.concatenate([np.asarray(phi, float), np.asarray(psi, float)])
    eps = target - design @ mean
    sigma2_init = max(float(np.var(eps)), 1e-300)
    sigma2 = _garch_path(eps, omega, alpha, beta, sigma2_init)
    return -0.5 * float(
        np.sum(np.log(2.0 * np.pi) + np.log(sigma2) + eps * eps / sigma2)
    )


def _filter_paths(fit, series, dummies):
    y = np.asarray(series, dtype=np.float64)
    max_lag = fit.spec.max_lag
    if y.size <= max_lag:
        raise DomainError("series shorter than the maximum lag")
    dmat = _dummy_matrix(dummies, fit.spec.n_dummies, y.size)
    design, target = _design(y, dmat, fit.spec.lag_set)
    mean = np.concatenate([fit.phi, fit.psi])
    eps = target - design @ mean
    sigma2_init = max(float(np.var(eps)), 1e-300)
    sigma2 = _garch_path(eps, fit.omega, fit.alpha, fit.beta, sigma2_init)
    return eps / np.sqrt(sigma2), sigma2


def filter_residuals(fit, series, dummies=None):
    """Standardized residuals of ``series`` under an already-fitted model.

    Applying this to the fit's own training data reproduces
    ``fit.residuals`` exactly.
    """
    eta, _ = _filter_paths(fit, series, dummies)
    return eta


def pit_transform(residuals, mode="gaussian"):
    """Probability integral transform of standardized residuals.

    ``mode="gaussian"`` maps through the standard normal CDF; ``mode="rank"``
    uses ranks scaled by (T + 1).  Output lies strictly inside (0, 1).
    """
    eta = np.asarray(residuals, dtype=np.float64)
    if mode == "gaussian":
        u = special.ndtr(eta)
    elif mode == "rank":
        u = stats.rankdata(eta, method="average") / (eta.size + 1.0)
    else:
        raise DomainError(f"unknown PIT mode {mode!r}")
    return np.clip(u, _PIT_CLIP, 1.0 - _PIT_CLIP)


def simulate_ar_garch(fit, dummies, horizon, seed, shocks=None):
    """Simulate a series from fitted (or hand-built) AR-GARCH parameters.

    Parameters
    ----------
    fit : MarginalFit
        Only the parameter fields and spec are used.
    dummies : CalendarDummies or array_like or None
        Rows 0..horizon-1 drive the dummy terms of the emitted stretch.
    horizon : int
    seed : int or numpy.random.SeedSequence
        Ignored for the emitted stretch when ``shocks`` is given.
    shocks : array_like, shape (horizon,), optional
        Standard-normal innovations to drive the recursion with; used by
        the copula-coupled synthetic generator.

    Returns
    -------
    ndarray, shape (horizon,)
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    dmat = _dummy_matrix(dummies, fit.spec.n_dummies, horizon)
    rng = np.random.default_rng(seed)
    lag_set = fit.spec.lag_set
    max_lag = fit.spec.max_lag
    burn = 500 + 10 * max_lag

    if shocks is None:
        eta = rng.standard_normal(burn + horizon)
    else:
        shocks = np.asarray(shocks, dtype=np.float64)
        if shocks.shape != (horizon,):
            raise DomainError("shocks must have shape (horizon,)")
        eta = np.concatenate([rng.standard_normal(burn), shocks])

    uncond = fit.omega / max(1.0 - fit.alpha - fit.beta, _STATIONARITY_GAP)
    y = np.zeros(burn + horizon + max_lag)
    sigma2 = uncond
    eps_prev = 0.0
    for t in range(burn + horizon):
        sigma2 = fit.omega + fit.alpha * eps_prev**2 + fit.beta * sigma2
        eps = np.sqrt(sigma2) * eta[t]
        idx = t + max_lag
        ar = sum(fit.phi[i] * y[idx - lag] for i, lag in enumerate(lag_set))
        dummy_term = float(dmat[t - burn] @ fit.psi) if t >= burn else 0.0
        y[idx] = ar + dummy_term + eps
        eps_prev = eps
    return y[max_lag + burn :]


def build_fit_from_params(spec, phi, psi, omega, alpha, beta):
    """Construct a parameter-only MarginalFit (for simulation and synthesis)."""
    if omega <= 0.0:
        raise DomainError("omega must be positive")
    if alpha < 0.0 or beta < 0.0 or alpha + beta >= 1.0:
        raise DomainError("need alpha, beta >= 0 and alpha + beta < 1")
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if phi.shape != (len(spec.lag_set),):
        raise DomainError("phi length must match the lag set")
    if psi.shape != (spec.n_dummies,):
        raise DomainError("psi length must match n_dummies")
    return MarginalFit(
        spec=spec,
        phi=phi,
        psi=psi,
        omega=float(omega),
        alpha=float(alpha),
        beta=float(beta),
        sigma2_path=np.empty(0),
        residuals=np.empty(0),
        pseudo_obs=np.empty(0),
        loglik=float("nan"),
        converged=True,
        n_iter=0,
        boundary=False,
        diagnostics={"source": "parameters"},
    )
