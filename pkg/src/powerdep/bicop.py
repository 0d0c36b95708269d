"""Bivariate copula families with rotations, fitting and selection.

Families: independence, gaussian, studentt, clayton, gumbel, frank.
Every family supports cdf, density, h-functions (conditional CDFs), their
inverses, sampling, Kendall/Spearman measures and tail dependence
coefficients.  Rotations of 90/180/270 degrees remap the unit square so
that single-corner families can capture the other corners and negative
dependence.

Evaluation clamps pseudo-observations into [1e-12, 1 - 1e-12]; values
outside [0, 1] raise :class:`~powerdep.errors.DomainError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import (
    DomainError,
    FamilyInfeasibleError,
    OptimizationError,
    SelectionError,
)

EPS = 1e-12

FAMILIES = ("independence", "gaussian", "studentt", "clayton", "gumbel", "frank")
ROTATIONS = (0, 90, 180, 270)

#: Candidate order used by default in family selection; the order also
#: breaks AIC ties deterministically (first entry wins).
DEFAULT_CANDIDATES = (
    ("independence", 0),
    ("gaussian", 0),
    ("studentt", 0),
    ("clayton", 0),
    ("clayton", 90),
    ("clayton", 180),
    ("clayton", 270),
    ("gumbel", 0),
    ("gumbel", 90),
    ("gumbel", 180),
    ("gumbel", 270),
    ("frank", 0),
)

_N_PARAMS = {
    "independence": 0,
    "gaussian": 1,
    "studentt": 2,
    "clayton": 1,
    "gumbel": 1,
    "frank": 1,
}

_PARAM_BOUNDS = {
    "gaussian": ((-1.0 + 1e-6, 1.0 - 1e-6),),
    "studentt": ((-1.0 + 1e-6, 1.0 - 1e-6), (2.1, 30.0)),
    "clayton": ((1e-5, 28.0),),
    "gumbel": ((1.0, 20.0),),
    "frank": ((-35.0, 35.0),),
}


@dataclass(frozen=True)
class BivariateCopula:
    """A parametric bivariate copula with an orientation.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    rotation : int
        0, 90, 180 or 270 (counter-clockwise rotation of the density mass).
    params : tuple of float
        Family parameters; empty for independence.
    """

    family: str
    rotation: int = 0
    params: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown copula family {self.family!r}")
        if self.rotation not in ROTATIONS:
            raise DomainError(f"rotation must be one of {ROTATIONS}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        _validate_params(self.family, params)

    @property
    def n_params(self):
        return _N_PARAMS[self.family]

    def cdf(self, u, v):
        return cdf(self, u, v)

    def pdf(self, u, v):
        return pdf(self, u, v)

    def hfunc(self, u, v, margin=2):
        return hfunc(self, u, v, margin)

    def hinv(self, p, w, margin=2):
        return hinv(self, p, w, margin)

    def sample(self, n, seed):
        return sample(self, n, seed)

    def to_json_dict(self):
        return {
            "family": self.family,
            "rotation": self.rotation,
            "params": list(self.params),
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(
            family=data["family"],
            rotation=int(data["rotation"]),
            params=tuple(data["params"]),
        )


def _validate_params(family, params):
    if len(params) != _N_PARAMS[family]:
        raise DomainError(
            f"{family} expects {_N_PARAMS[family]} parameter(s), got {len(params)}"
        )
    if family in ("gaussian", "studentt"):
        rho = params[0]
        if not -1.0 < rho < 1.0:
            raise DomainError(f"{family} correlation must lie in (-1, 1), got {rho}")
    if family == "studentt":
        nu = params[1]
        if not nu > 2.0:
            raise DomainError(f"studentt degrees of freedom must exceed 2, got {nu}")
    if family == "clayton" and not params[0] > 0.0:
        raise DomainError(f"clayton parameter must be positive, got {params[0]}")
    if family == "gumbel" and not params[0] >= 1.0:
        raise DomainError(f"gumbel parameter must be >= 1, got {params[0]}")
    if family == "frank" and params[0] == 0.0:
        raise DomainError("frank parameter must be non-zero")


def _clip_unit(x, name="argument"):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return np.clip(arr, EPS, 1.0 - EPS)


# ---------------------------------------------------------------------------
# base-family math (unrotated, exchangeable in (u, v))
# ---------------------------------------------------------------------------


def _gauss_cdf_base(u, v, rho):
    # Bivariate normal probability via the Plackett identity
    #   d Phi2 / d rho = phi2(h, k; rho)
    # integrated from independence with Gauss-Legendre nodes.  Smooth in
    # rho, no sign special cases, and accurate far below the 1e-4
    # finite-difference tolerance used in the tests.
    h = special.ndtri(u)
    k = special.ndtri(v)
    n_nodes = 64 if abs(rho) <= 0.9 else 256
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    r = 0.5 * rho * (nodes + 1.0)
    w = 0.5 * rho * weights
    hh = h[..., None]
    kk = k[..., None]
    omr2 = 1.0 - r * r
    dens = np.exp(-(hh * hh - 2.0 * r * hh * kk + kk * kk) / (2.0 * omr2))
    dens /= 2.0 * np.pi * np.sqrt(omr2)
    return special.ndtr(h) * special.ndtr(k) + (dens * w).sum(axis=-1)


def _gauss_logpdf_base(u, v, rho):
    x = special.ndtri(u)
    y = special.ndtri(v)
    omr2 = 1.0 - rho * rho
    return -0.5 * np.log(omr2) - (
        rho * rho * (x * x + y * y) - 2.0 * rho * x * y
    ) / (2.0 * omr2)


def _gauss_hfunc_base(u, v, rho):
    x = special.ndtri(u)
    y = special.ndtri(v)
    return special.ndtr((x - rho * y) / np.sqrt(1.0 - rho * rho))


def _gauss_hinv_base(p, v, rho):
    y = special.ndtri(v)
    x = special.ndtri(p) * np.sqrt(1.0 - rho * rho) + rho * y
    return special.ndtr(x)


def _t_logpdf_quant(x, y, rho, nu):
    # log density with the t quantiles x, y already computed
    omr2 = 1.0 - rho * rho
    log_joint = (
        special.gammaln((nu + 2.0) / 2.0)
        + special.gammaln(nu / 2.0)
        - 2.0 * special.gammaln((nu + 1.0) / 2.0)
        - 0.5 * np.log(omr2)
    )
    quad_form = (x * x - 2.0 * rho * x * y + y * y) / (nu * omr2)
    log_joint = log_joint - (nu + 2.0) / 2.0 * np.log1p(quad_form)
    log_marg = (nu + 1.0) / 2.0 * (
        np.log1p(x * x / nu) + np.log1p(y * y / nu)
    )
    return log_joint + log_marg


def _t_logpdf_base(u, v, rho, nu):
    return _t_logpdf_quant(
        special.stdtrit(nu, u), special.stdtrit(nu, v), rho, nu
    )


def _t_hfunc_base(u, v, rho, nu):
    x = special.stdtrit(nu, u)
    y = special.stdtrit(nu, v)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    return special.stdtr(nu + 1.0, (x - rho * y) / scale)


def _t_hinv_base(p, v, rho, nu):
    y = special.stdtrit(nu, v)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    x = special.stdtrit(nu + 1.0, p) * scale + rho * y
    return special.stdtr(nu, x)


def _t_cdf_base(u, v, rho, nu):
    # integrate the closed-form conditional over the second coordinate;
    # deterministic quadrature keeps the result smooth enough for
    # finite-difference consistency with the h-function.
    u_arr = np.asarray(u, dtype=np.float64)
    v_arr = np.asarray(v, dtype=np.float64)
    out = np.empty(np.broadcast(u_arr, v_arr).shape)
    flat = out.reshape(-1)
    ub, vb = np.broadcast_arrays(u_arr, v_arr)
    for i, (ui, vi) in enumerate(zip(ub.reshape(-1), vb.reshape(-1))):
        val, _ = integrate.quad(
            lambda w: _t_hfunc_base(ui, w, rho, nu),
            0.0,
            vi,
            epsabs=1e-11,
            epsrel=1e-11,
            limit=200,
        )
        flat[i] = val
    return out if out.ndim else float(flat[0])


def _clayton_logs(u, v, theta):
    # log of s = u^-theta + v^-theta - 1, computed without overflow
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    return hi + np.log1p(np.exp(lo - hi) - np.exp(-hi))


def _clayton_cdf_base(u, v, theta):
    return np.exp(-_clayton_logs(u, v, theta) / theta)


def _clayton_logpdf_base(u, v, theta):
    log_s = _clayton_logs(u, v, theta)
    return (
        np.log1p(theta)
        - (theta + 1.0) * (np.log(u) + np.log(v))
        - (1.0 / theta + 2.0) * log_s
    )


def _clayton_hfunc_base(u, v, theta):
    log_s = _clayton_logs(u, v, theta)
    return np.exp(-(theta + 1.0) * np.log(v) - (1.0 / theta + 1.0) * log_s)


def _clayton_hinv_base(p, v, theta):
    # solve p = v^-(theta+1) * s^-(1/theta + 1) for u
    frac = -theta / (1.0 + theta)
    inner = np.logaddexp(
        -theta * np.log(v) + np.log(np.expm1(frac * np.log(p))), 0.0
    )
    return np.exp(-inner / theta)


def _gumbel_parts(u, v, theta):
    la = theta * np.log(-np.log(u))
    lb = theta * np.log(-np.log(v))
    log_sum = np.logaddexp(la, lb)  # log((-ln u)^theta + (-ln v)^theta)
    log_s = log_sum / theta  # log of the generator inverse argument
    return log_sum, log_s


def _gumbel_cdf_base(u, v, theta):
    _, log_s = _gumbel_parts(u, v, theta)
    return np.exp(-np.exp(log_s))


def _gumbel_logpdf_base(u, v, theta):
    log_sum, log_s = _gumbel_parts(u, v, theta)
    s = np.exp(log_s)
    return (
        -s
        - np.log(u)
        - np.log(v)
        + (theta - 1.0) * (np.log(-np.log(u)) + np.log(-np.log(v)))
        + (2.0 / theta - 2.0) * log_sum
        + np.log1p((theta - 1.0) / s)
    )


def _gumbel_hfunc_base(u, v, theta):
    log_sum, log_s = _gumbel_parts(u, v, theta)
    s = np.exp(log_s)
    log_h = (
        -s
        + (theta - 1.0) * np.log(-np.log(v))
        + (1.0 / theta - 1.0) * log_sum
        - np.log(v)
    )
    return np.exp(log_h)


def _gumbel_hinv_base(p, v, theta):
    # no closed form; monotone bisection on the conditional CDF
    p_arr, v_arr = np.broadcast_arrays(
        np.asarray(p, dtype=np.float64), np.asarray(v, dtype=np.float64)
    )
    lo = np.full(p_arr.shape, EPS)
    hi = np.full(p_arr.shape, 1.0 - EPS)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = _gumbel_hfunc_base(mid, v_arr, theta) < p_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    result = 0.5 * (lo + hi)
    return result if result.ndim else float(result)


def _frank_g(x, theta):
    return np.expm1(-theta * x)


def _frank_cdf_base(u, v, theta):
    g1 = _frank_g(1.0, theta)
    return -np.log1p(_frank_g(u, theta) * _frank_g(v, theta) / g1) / theta


def _frank_logpdf_base(u, v, theta):
    # continuous limit 1 at theta -> 0; tiny |theta| is clipped to keep the
    # expressions finite during optimisation
    th = np.where(np.abs(theta) < 1e-6, np.copysign(1e-6, theta), theta)
    g1 = _frank_g(1.0, th)
    denom = g1 + _frank_g(u, th) * _frank_g(v, th)
    return (
        np.log(np.abs(th))
        + np.log(np.abs(g1))
        - th * (u + v)
        - 2.0 * np.log(np.abs(denom))
    )


def _frank_hfunc_base(u, v, theta):
    g1 = _frank_g(1.0, theta)
    gu = _frank_g(u, theta)
    gv = _frank_g(v, theta)
    return gu * np.exp(-theta * v) / (g1 + gu * gv)


def _frank_hinv_base(p, v, theta):
    g1 = _frank_g(1.0, theta)
    gv = _frank_g(v, theta)
    gu = p * g1 / (np.exp(-theta * v) - p * gv)
    return -np.log1p(gu) / theta


def _base_cdf(family, u, v, params):
    if family == "independence":
        return u * v
    if family == "gaussian":
        return _gauss_cdf_base(u, v, params[0])
    if family == "studentt":
        return _t_cdf_base(u, v, params[0], params[1])
    if family == "clayton":
        return _clayton_cdf_base(u, v, params[0])
    if family == "gumbel":
        return _gumbel_cdf_base(u, v, params[0])
    return _frank_cdf_base(u, v, params[0])


def _base_logpdf(family, u, v, params):
    if family == "independence":
        return np.zeros(np.broadcast(u, v).shape)
    if family == "gaussian":
        return _gauss_logpdf_base(u, v, params[0])
    if family == "studentt":
        return _t_logpdf_base(u, v, params[0], params[1])
    if family == "clayton":
        return _clayton_logpdf_base(u, v, params[0])
    if family == "gumbel":
        return _gumbel_logpdf_base(u, v, params[0])
    return _frank_logpdf_base(u, v, params[0])


def _base_hfunc(family, u, v, params):
    # conditional CDF of the first argument given the second
    if family == "independence":
        return u * np.ones_like(v)
    if family == "gaussian":
        return _gauss_hfunc_base(u, v, params[0])
    if family == "studentt":
        return _t_hfunc_base(u, v, params[0], params[1])
    if family == "clayton":
        return _clayton_hfunc_base(u, v, params[0])
    if family == "gumbel":
        return _gumbel_hfunc_base(u, v, params[0])
    return _frank_hfunc_base(u, v, params[0])


def _base_hinv(family, p, v, params):
    if family == "independence":
        return p * np.ones_like(v)
    if family == "gaussian":
        return _gauss_hinv_base(p, v, params[0])
    if family == "studentt":
        return _t_hinv_base(p, v, params[0], params[1])
    if family == "clayton":
        return _clayton_hinv_base(p, v, params[0])
    if family == "gumbel":
        return _gumbel_hinv_base(p, v, params[0])
    return _frank_hinv_base(p, v, params[0])


# ---------------------------------------------------------------------------
# rotation plumbing
# ---------------------------------------------------------------------------


def cdf(copula, u, v):
    """Copula CDF C(u, v), honouring the stored rotation.

    Parameters
    ----------
    copula : BivariateCopula
    u, v : array_like in [0, 1]

    Returns
    -------
    ndarray or float
        Values within the Frechet-Hoeffding bounds.
    """
    u = _clip_unit(u, "u")
    v = _clip_unit(v, "v")
    fam, par, rot = copula.family, copula.params, copula.rotation
    if rot == 0:
        raw = _base_cdf(fam, u, v, par)
    elif rot == 90:
        raw = v - _base_cdf(fam, 1.0 - u, v, par)
    elif rot == 180:
        raw = u + v - 1.0 + _base_cdf(fam, 1.0 - u, 1.0 - v, par)
    else:
        raw = u - _base_cdf(fam, u, 1.0 - v, par)
    lower = np.maximum(u + v - 1.0, 0.0)
    upper = np.minimum(u, v)
    return np.clip(raw, lower, upper)


def pdf(copula, u, v):
    """Copula density c(u, v)."""
    u = _clip_unit(u, "u")
    v = _clip_unit(v, "v")
    ur, vr = _rotate_args(u, v, copula.rotation)
    return np.exp(_base_logpdf(copula.family, ur, vr, copula.params))


def log_pdf(copula, u, v):
    """Natural log of the copula density, stable in the tails."""
    u = _clip_unit(u, "u")
    v = _clip_unit(v, "v")
    ur, vr = _rotate_args(u, v, copula.rotation)
    return _base_logpdf(copula.family, ur, vr, copula.params)


def _rotate_args(u, v, rotation):
    if rotation == 0:
        return u, v
    if rotation == 90:
        return 1.0 - u, v
    if rotation == 180:
        return 1.0 - u, 1.0 - v
    return u, 1.0 - v


def hfunc(copula, u, v, margin=2):
    """Conditional CDF (h-function) of the copula.

    ``margin=2`` returns P(U <= u | V = v) = dC/dv, ``margin=1`` returns
    P(V <= v | U = u) = dC/du.  Both are strictly increasing in the free
    argument.
    """
    if margin not in (1, 2):
        raise DomainError("margin must be 1 or 2")
    u = _clip_unit(u, "u")
    v = _clip_unit(v, "v")
    fam, par, rot = copula.family, copula.params, copula.rotation
    # base h2(a, b) conditions the first argument on the second; the
    # exchangeable base families give h1 by swapping the arguments
    if margin == 2:
        if rot == 0:
            raw = _base_hfunc(fam, u, v, par)
        elif rot == 90:
            raw = 1.0 - _base_hfunc(fam, 1.0 - u, v, par)
        elif rot == 180:
            raw = 1.0 - _base_hfunc(fam, 1.0 - u, 1.0 - v, par)
        else:
            raw = _base_hfunc(fam, u, 1.0 - v, par)
    else:
        if rot == 0:
            raw = _base_hfunc(fam, v, u, par)
        elif rot == 90:
            raw = _base_hfunc(fam, v, 1.0 - u, par)
        elif rot == 180:
            raw = 1.0 - _base_hfunc(fam, 1.0 - v, 1.0 - u, par)
        else:
            raw = 1.0 - _base_hfunc(fam, 1.0 - v, u, par)
    return np.clip(raw, 0.0, 1.0)


def hinv(copula, p, w, margin=2):
    """Inverse of :func:`hfunc` in its free argument.

    For ``margin=2`` solves hfunc(u, w) = p for u; for ``margin=1`` solves
    hfunc(w, v) = p for v.
    """
    if margin not in (1, 2):
        raise DomainError("margin must be 1 or 2")
    p = _clip_unit(p, "p")
    w = _clip_unit(w, "w")
    fam, par, rot = copula.family, copula.params, copula.rotation
    if margin == 2:
        if rot == 0:
            raw = _base_hinv(fam, p, w, par)
        elif rot == 90:
            raw = 1.0 - _base_hinv(fam, 1.0 - p, w, par)
        elif rot == 180:
            raw = 1.0 - _base_hinv(fam, 1.0 - p, 1.0 - w, par)
        else:
            raw = _base_hinv(fam, p, 1.0 - w, par)
    else:
        if rot == 0:
            raw = _base_hinv(fam, p, w, par)
        elif rot == 90:
            raw = _base_hinv(fam, p, 1.0 - w, par)
        elif rot == 180:
            raw = 1.0 - _base_hinv(fam, 1.0 - p, 1.0 - w, par)
        else:
            raw = 1.0 - _base_hinv(fam, 1.0 - p, w, par)
    return np.clip(raw, EPS, 1.0 - EPS)


def sample(copula, n, seed):
    """Draw ``n`` pairs from the copula, deterministically in ``seed``.

    Uses conditional inversion on the base family and reflects the
    coordinates according to the rotation.

    Returns
    -------
    ndarray, shape (n, 2)
    """
    if n <= 0:
        raise DomainError("sample size must be positive")
    rng = np.random.default_rng(seed)
    w = rng.random((int(n), 2))
    u = np.clip(w[:, 0], EPS, 1.0 - EPS)
    v = _base_hinv(copula.family, np.clip(w[:, 1], EPS, 1.0 - EPS), u, copula.params)
    rot = copula.rotation
    if rot == 90:
        u = 1.0 - u
    elif rot == 180:
        u = 1.0 - u
        v = 1.0 - v
    elif rot == 270:
        v = 1.0 - v
    out = np.column_stack([u, v])
    return np.clip(out, EPS, 1.0 - EPS)


# ---------------------------------------------------------------------------
# dependence measures
# ---------------------------------------------------------------------------


def _frank_tau_positive(theta):
    debye, _ = integrate.quad(lambda t: t / np.expm1(t), 0.0, theta, limit=200)
    return 1.0 - 4.0 / theta * (1.0 - debye / theta)


def _base_tau(family, params):
    if family == "independence":
        return 0.0
    if family in ("gaussian", "studentt"):
        return 2.0 / np.pi * np.arcsin(params[0])
    if family == "clayton":
        return params[0] / (params[0] + 2.0)
    if family == "gumbel":
        return 1.0 - 1.0 / params[0]
    theta = params[0]
    if abs(theta) < 1e-8:
        return theta / 9.0
    tau = _frank_tau_positive(abs(theta))
    return tau if theta > 0 else -tau


def tau_of(copula):
    """Population Kendall tau of the copula (sign follows the rotation)."""
    sign = 1.0 if copula.rotation in (0, 180) else -1.0
    return sign * _base_tau(copula.family, copula.params)


def _base_spearman(family, params):
    if family == "independence":
        return 0.0
    if family == "gaussian":
        return 6.0 / np.pi * np.arcsin(params[0] / 2.0)
    # numerical 12 * integral of C - 3 on a Gauss-Legendre grid; the t
    # copula CDF is quadrature-based, so fewer nodes keep it tractable
    n_nodes = 32 if family == "studentt" else 128
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    x = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    uu, vv = np.meshgrid(x, x)
    cvals = _base_cdf(family, uu, vv, params)
    integral = float((cvals * np.outer(w, w)).sum())
    return 12.0 * integral - 3.0


def spearman_of(copula):
    """Population Spearman rho; closed form where known, else quadrature."""
    sign = 1.0 if copula.rotation in (0, 180) else -1.0
    return sign * _base_spearman(copula.family, copula.params)


def _base_tail(family, params):
    # (lower, upper) tail dependence coefficients of the unrotated family
    if family == "clayton":
        return 2.0 ** (-1.0 / params[0]), 0.0
    if family == "gumbel":
        return 0.0, 2.0 - 2.0 ** (1.0 / params[0])
    if family == "studentt":
        rho, nu = params
        arg = -np.sqrt((nu + 1.0) * (1.0 - rho) / (1.0 + rho))
        lam = 2.0 * stats.t.cdf(arg, nu + 1.0)
        return lam, lam
    return 0.0, 0.0


def lower_tdc(copula):
    """Lower tail dependence coefficient lim C(t,t)/t as t -> 0."""
    lam_l, lam_u = _base_tail(copula.family, copula.params)
    if copula.rotation == 0:
        return lam_l
    if copula.rotation == 180:
        return lam_u
    return 0.0


def upper_tdc(copula):
    """Upper tail dependence coefficient lim (1-2t+C(t,t))/(1-t) as t -> 1."""
    lam_l, lam_u = _base_tail(copula.family, copula.params)
    if copula.rotation == 0:
        return lam_u
    if copula.rotation == 180:
        return lam_l
    return 0.0


# ---------------------------------------------------------------------------
# fitting and selection
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    """Outcome of a maximum-likelihood fit of one family/rotation."""

    copula: BivariateCopula
    loglik: float
    aic: float
    n_obs: int
    converged: bool
    boundary: bool
    diagnostics: dict = field(default_factory=dict)


def _check_pseudo_obs(pseudo_obs):
    arr = np.asarray(pseudo_obs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("pseudo observations must form an (n, 2) array")
    if arr.shape[0] < 10:
        raise DomainError("need at least 10 pseudo observations to fit")
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("pseudo observations must lie strictly inside (0, 1)")
    return arr


def _tau_init(family, tau):
    tau = float(np.clip(tau, -0.95, 0.95))
    if family == "gaussian" or family == "studentt":
        return np.sin(np.pi * tau / 2.0)
    if family == "clayton":
        t = max(tau, 0.05)
        return float(np.clip(2.0 * t / (1.0 - t), *_PARAM_BOUNDS["clayton"][0]))
    if family == "gumbel":
        t = max(tau, 0.05)
        return float(np.clip(1.0 / (1.0 - t), *_PARAM_BOUNDS["gumbel"][0]))
    if family == "frank":
        if abs(tau) < 1e-3:
            return np.copysign(0.01, tau if tau != 0 else 1.0)
        lo, hi = (1e-4, 35.0) if tau > 0 else (-35.0, -1e-4)
        try:
            return optimize.brentq(
                lambda th: _base_tau("frank", (th,)) - tau, lo, hi, xtol=1e-6
            )
        except ValueError:
            return hi if tau > 0 else lo
    return 0.0


def _required_sign(family, rotation):
    # families concentrated in a single corner can only express one
    # dependence sign per orientation
    if family in ("clayton", "gumbel"):
        return 1 if rotation in (0, 180) else -1
    return 0


def fit_mle(family, rotation, pseudo_obs):
    """Fit one family/rotation to pseudo-observations by maximum likelihood.

    Parameters
    ----------
    family : str
    rotation : int
    pseudo_obs : array_like, shape (n, 2)
        Values strictly inside the unit square.

    Returns
    -------
    FitResult

    Raises
    ------
    FamilyInfeasibleError
        If the empirical Kendall tau sign is outside the family's range
        for the requested rotation.
    OptimizationError
        If the optimiser fails to converge; the error carries the last
        iterate.
    """
    if family not in FAMILIES:
        raise DomainError(f"unknown copula family {family!r}")
    if rotation not in ROTATIONS:
        raise DomainError(f"rotation must be one of {ROTATIONS}")
    obs = _check_pseudo_obs(pseudo_obs)
    n = obs.shape[0]
    tau_hat, _ = stats.kendalltau(obs[:, 0], obs[:, 1])
    tau_hat = float(tau_hat)

    sign = _required_sign(family, rotation)
    if sign > 0 and tau_hat < 0:
        raise FamilyInfeasibleError(
            f"{family} at rotation {rotation} needs tau >= 0, got {tau_hat:.4f}"
        )
    if sign < 0 and tau_hat > 0:
        raise FamilyInfeasibleError(
            f"{family} at rotation {rotation} needs tau <= 0, got {tau_hat:.4f}"
        )

    if family == "independence":
        copula = BivariateCopula("independence", 0, ())
        return FitResult(
            copula=copula,
            loglik=0.0,
            aic=0.0,
            n_obs=n,
            converged=True,
            boundary=False,
            diagnostics={"tau": tau_hat},
        )

    # fit the base family on data reflected into its native orientation
    u, v = _rotate_args(
        np.clip(obs[:, 0], EPS, 1.0 - EPS),
        np.clip(obs[:, 1], EPS, 1.0 - EPS),
        rotation,
    )
    tau_base = tau_hat if rotation in (0, 180) else -tau_hat

    if family == "studentt":
        params, loglik, converged = _fit_studentt(u, v, tau_base)
    else:
        params, loglik, converged = _fit_one_param(family, u, v, tau_base)

    if not converged:
        raise OptimizationError(
            f"maximum-likelihood fit of {family} did not converge",
            last_params=params,
        )

    bounds = _PARAM_BOUNDS[family]
    boundary = any(
        min(p - lo, hi - p) < 1e-4 * (hi - lo)
        for p, (lo, hi) in zip(params, bounds)
    )

    copula = BivariateCopula(family, rotation, tuple(params))
    k = copula.n_params
    return FitResult(
        copula=copula,
        loglik=float(loglik),
        aic=2.0 * k - 2.0 * float(loglik),
        n_obs=n,
        converged=True,
        boundary=boundary,
        diagnostics={"tau": tau_hat, "tau_init": _tau_init(family, tau_base)},
    )


def _fit_one_param(family, u, v, tau_base):
    (lo, hi) = _PARAM_BOUNDS[family][0]
    x0 = float(np.clip(_tau_init(family, tau_base), lo, hi))

    def nll(theta):
        return -float(np.sum(_base_logpdf(family, u, v, (theta[0],))))

    res = optimize.minimize(
        nll,
        x0=[x0],
        method="L-BFGS-B",
        bounds=[(lo, hi)],
        options={"maxiter": 200, "ftol": 1e-10},
    )
    theta = float(res.x[0])
    return (theta,), -float(res.fun), bool(res.success)


def _fit_studentt(u, v, tau_base):
    # profile likelihood over a log-spaced nu grid, then a local refinement
    rho_bounds = _PARAM_BOUNDS["studentt"][0]
    nu_lo, nu_hi = _PARAM_BOUNDS["studentt"][1]
    rho0 = float(np.clip(_tau_init("gaussian", tau_base), *rho_bounds))

    def profile(nu):
        # the t quantiles depend on nu only; hoist them out of the rho search
        qx = special.stdtrit(nu, u)
        qy = special.stdtrit(nu, v)

        def nll(x):
            return -float(np.sum(_t_logpdf_quant(qx, qy, x[0], nu)))

        res = optimize.minimize(
            nll,
            x0=[rho0],
            method="L-BFGS-B",
            bounds=[rho_bounds],
            options={"maxiter": 100, "ftol": 1e-10},
        )
        return float(res.x[0]), -float(res.fun), bool(res.success)

    grid = np.geomspace(nu_lo, nu_hi, 12)
    evals = [profile(nu) for nu in grid]
    logliks = np.array([e[1] for e in evals])
    best = int(np.argmax(logliks))

    bracket_lo = grid[max(best - 1, 0)]
    bracket_hi = grid[min(best + 1, len(grid) - 1)]
    refine = optimize.minimize_scalar(
        lambda nu: -profile(nu)[1],
        bounds=(bracket_lo, bracket_hi),
        method="bounded",
        options={"xatol": 1e-3},
    )
    nu_hat = float(refine.x)
    rho_hat, loglik, ok = profile(nu_hat)
    if loglik < logliks[best]:
        nu_hat = float(grid[best])
        rho_hat, loglik, ok = evals[best][0], evals[best][1], evals[best][2]
    return (rho_hat, nu_hat), loglik, ok


@dataclass
class SelectionResult:
    """Winner and per-candidate table from AIC family selection."""

    best: FitResult
    table: list
    warnings: list = field(default_factory=list)


def select_family_aic(pseudo_obs, candidates=DEFAULT_CANDIDATES):
    """Pick the AIC-best family among candidates.

    Candidates failing with a feasibility or convergence error are skipped
    and recorded in ``warnings``.  Ties in AIC resolve to the earliest
    candidate in the given order.

    Returns
    -------
    SelectionResult
    """
    obs = _check_pseudo_obs(pseudo_obs)
    table = []
    warnings = []
    fits = []
    for order, (family, rotation) in enumerate(candidates):
        try:
            fit = fit_mle(family, rotation, obs)
        except (FamilyInfeasibleError, OptimizationError) as exc:
            warnings.append(f"{family}@{rotation}: {exc.message}")
            table.append(
                {
                    "family": family,
                    "rotation": rotation,
                    "aic": None,
                    "loglik": None,
                    "status": exc.code,
                }
            )
            continue
        table.append(
            {
                "family": family,
                "rotation": rotation,
                "aic": fit.aic,
                "loglik": fit.loglik,
                "status": "ok",
            }
        )
        fits.append((fit.aic, order, fit))
    if not fits:
        raise SelectionError("every candidate family failed to fit")
    fits.sort(key=lambda item: (item[0], item[1]))
    return SelectionResult(best=fits[0][2], table=table, warnings=warnings)
