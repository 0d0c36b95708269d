"""Kendall distribution functions and conditional tail measures.

The central object is the multivariate probability integral transform
W = F_X(X) of a conditioning vector X.  Its distribution function K
(the Kendall function) turns "X is jointly extreme" into a scalar
event {W <= t}, which lets a single number summarise how the tail of a
target variable Y reacts to joint extremes of several drivers:

* ``q_lower_kendall`` / ``q_upper_kendall`` estimate the conditional
  tail probabilities of Y given that X falls in a lower/upper Kendall
  region of mass alpha.
* ``lambda_kendall`` traces those measures along a grid of shrinking
  alphas and extrapolates to the limit coefficient.
* ``scenario_tail_coefficient`` evaluates mixed high/low scenarios
  (e.g. high demand with low wind) by reflecting coordinates of a
  vine-simulated sample before applying the upper measure.
* ``tail_concentration`` is the classical bivariate diagnostic curve
  used to compare copula families at a fixed conditioning level.

Everything here is estimated by counting on finite samples; no
parametric form is assumed for the copula that links W and Y.  The
counting conventions are spelled out below because tests rely on exact
(not approximate) agreement with brute-force re-counts:

* the Kendall collapse uses strict dominance, W_i = #{j : x_j < x_i
  componentwise} / m, which keeps the bound K(t) >= t exact even for
  comonotone samples;
* the conditioning event compares the empirical joint CDF values
  (weak dominance, the row itself included) against the Kendall
  quantile t_alpha = inf{t : K(t) >= alpha};
* target ranks use the empirical CDF U_i = #{j : y_j <= y_i} / m, with
  the lower event {U_i <= beta} and the upper event {U_i > 1 - beta}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .counting import (
    cross_weak_counts,
    strict_dominance_counts,
    weak_dominance_counts,
)
from .errors import DomainError, ResolutionError

# Measures conditioned on fewer sample points than this are flagged
# unreliable rather than silently returned.
RELIABILITY_FLOOR = 20

# Default alpha grid for coefficient extrapolation, decreasing in (0, 0.1].
DEFAULT_ALPHA_GRID = (0.10, 0.05, 0.02, 0.01)

_KENDALL_SOURCES = ("empirical", "analytic-archimedean", "analytic-independence")


class KendallFunction:
    """Distribution function K(t) of the multivariate PIT W = F_X(X).

    Instances are built by :func:`empirical_kendall_fn` or
    :func:`analytic_kendall_fn` and expose ``evaluate`` (the CDF) and
    ``inverse`` (the generalized inverse, smallest t with K(t) >= q).
    """

    def __init__(self, source, evaluate_fn, inverse_fn, n_obs=None, dim=None):
        if source not in _KENDALL_SOURCES:
            raise DomainError(f"unknown Kendall function source {source!r}")
        self.source = source
        self.n_obs = n_obs
        self.dim = dim
        self._evaluate = evaluate_fn
        self._inverse = inverse_fn

    def evaluate(self, t):
        """K(t) for t in [0, 1]; scalar in, scalar out."""
        arr = np.asarray(t, dtype=np.float64)
        if arr.size and (np.any(arr < 0.0) or np.any(arr > 1.0)):
            raise DomainError("Kendall function argument must lie in [0, 1]")
        out = self._evaluate(arr)
        if np.isscalar(t) or arr.ndim == 0:
            return float(out)
        return out

    def inverse(self, q):
        """Smallest t with K(t) >= q, for q in [0, 1]."""
        arr = np.asarray(q, dtype=np.float64)
        if arr.size and (np.any(arr < 0.0) or np.any(arr > 1.0)):
            raise DomainError("Kendall quantile level must lie in [0, 1]")
        out = self._inverse(arr)
        if np.isscalar(q) or arr.ndim == 0:
            return float(out)
        return out

    def __repr__(self):
        return f"KendallFunction(source={self.source!r}, dim={self.dim})"


def _collapse_strict(x):
    """Kendall collapse W_i = strict dominance count / m."""
    x = np.asarray(x, dtype=np.float64)
    return strict_dominance_counts(x) / x.shape[0]


def empirical_kendall_fn(sample):
    """Empirical Kendall function of a multivariate sample.

    Parameters
    ----------
    sample : array_like, shape (m, l)
        Pseudo-observations in the open unit hypercube, m >= 200 rows
        and l >= 2 columns.

    Returns
    -------
    KendallFunction
        Right-continuous step CDF of the collapse values
        W_i = #{j : sample_j < sample_i componentwise} / m.
    """
    arr = np.asarray(sample, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError("sample must be a 2-d array")
    m, ell = arr.shape
    if ell < 2:
        raise DomainError(
            "Kendall function needs at least two columns; "
            "a single variable already has a univariate CDF"
        )
    if m < 200:
        raise DomainError(f"need at least 200 rows to estimate K, got {m}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("sample must be finite")
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("sample values must lie strictly inside (0, 1)")

    sorted_w = np.sort(_collapse_strict(arr))

    def evaluate(t):
        return np.searchsorted(sorted_w, t, side="right") / m

    def inverse(q):
        idx = np.ceil(np.asarray(q) * m).astype(np.int64)
        idx = np.clip(idx - 1, 0, m - 1)
        return sorted_w[idx]

    return KendallFunction("empirical", evaluate, inverse, n_obs=m, dim=ell)


def _independence_kendall(t, dim):
    # K(t) = t * sum_{k<d} (-ln t)^k / k!, with K(0) = 0 taken as the limit.
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros(t.shape)
    pos = t > 0.0
    tp = t[pos]
    acc = np.zeros(tp.shape)
    logs = -np.log(tp)
    for k in range(dim):
        acc += logs**k / math.factorial(k)
    out[pos] = tp * acc
    return np.minimum(out, 1.0)


def _archimedean_kendall(t, family, theta):
    # K(t) = t - phi(t)/phi'(t) for a strict generator phi.
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros(t.shape)
    pos = t > 0.0
    tp = t[pos]
    if family == "clayton":
        out[pos] = tp * (1.0 + (1.0 - tp**theta) / theta)
    else:  # gumbel
        with np.errstate(invalid="ignore"):
            out[pos] = tp - tp * np.log(tp) / theta
    return np.clip(out, 0.0, 1.0)


def _numeric_inverse(evaluate, q):
    # Bisection for the generalized inverse of a nondecreasing CDF on [0,1].
    q = np.asarray(q, dtype=np.float64)
    lo = np.zeros(q.shape)
    hi = np.ones(q.shape)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        ge = evaluate(mid) >= q
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi


def analytic_kendall_fn(family, theta=None, dim=2):
    """Closed-form Kendall function, mainly an oracle for the empirical one.

    Supported: ``independence`` (any dim >= 2, no parameter),
    ``clayton`` (theta > 0) and ``gumbel`` (theta >= 1), both dim 2.
    """
    name = str(family).lower()
    if name == "independence":
        if dim < 2:
            raise DomainError("independence Kendall function needs dim >= 2")
        if theta is not None:
            raise DomainError("independence takes no parameter")

        def evaluate(t, _d=int(dim)):
            return _independence_kendall(t, _d)

        source = "analytic-independence"
    elif name in ("clayton", "gumbel"):
        if dim != 2:
            raise DomainError(f"{name} Kendall function is available for dim 2 only")
        if theta is None:
            raise DomainError(f"{name} needs a parameter")
        theta = float(theta)
        if name == "clayton" and theta <= 0.0:
            raise DomainError("clayton parameter must be positive")
        if name == "gumbel" and theta < 1.0:
            raise DomainError("gumbel parameter must be at least 1")

        def evaluate(t, _f=name, _th=theta):
            return _archimedean_kendall(t, _f, _th)

        source = "analytic-archimedean"
    else:
        raise DomainError(f"no analytic Kendall function for family {family!r}")

    def inverse(q):
        return _numeric_inverse(evaluate, q)

    return KendallFunction(source, evaluate, inverse, dim=int(dim))


def multivariate_pit(rows, reference):
    """Empirical joint CDF of ``reference`` evaluated at ``rows``.

    ``rows`` may be a single point (1-d) or a batch (2-d); the result is
    a float or a vector accordingly.  Reference points weakly below the
    row (<= in every coordinate) are counted, so evaluating the
    reference sample at itself includes each row in its own count.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim != 2 or ref.shape[0] == 0:
        raise DomainError("reference must be a non-empty 2-d array")
    pts = np.asarray(rows, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != ref.shape[1]:
        raise DomainError("rows and reference must share a column count")
    vals = cross_weak_counts(ref, pts) / ref.shape[0]
    if single:
        return float(vals[0])
    return vals


@dataclass(frozen=True)
class TailMeasureResult:
    """One estimated conditional tail measure.

    ``ratio_vs_independence`` divides the value by its independence
    benchmark (beta on both sides, see the module notes on the upper
    measure), so 1 means "the Kendall scenario does nothing".
    """

    side: str
    value: float
    ratio_vs_independence: float
    alpha: float
    beta: float
    mc_stderr: float
    n_conditioning: int
    reliable: bool
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "side": self.side,
            "value": self.value,
            "ratio_vs_independence": self.ratio_vs_independence,
            "alpha": self.alpha,
            "beta": self.beta,
            "mc_stderr": self.mc_stderr,
            "n_conditioning": self.n_conditioning,
            "reliable": self.reliable,
            "metadata": dict(self.metadata),
        }


def _split_sample(sample):
    arr = np.asarray(sample, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise DomainError("sample must be 2-d with at least one X column and a Y column")
    if arr.shape[0] < 2:
        raise DomainError("sample must contain at least two rows")
    if not np.all(np.isfinite(arr)):
        raise DomainError("sample must be finite")
    return arr[:, :-1], arr[:, -1]


def _check_levels(alpha, beta, m):
    if not (0.0 < alpha < 0.5) or not (0.0 < beta < 0.5):
        raise DomainError("alpha and beta must lie in (0, 0.5)")
    if alpha * m < RELIABILITY_FLOOR:
        raise ResolutionError(
            f"alpha*m = {alpha * m:.1f} leaves fewer than "
            f"{RELIABILITY_FLOOR} expected tail observations"
        )


class _Collapsed:
    """Shared counting state for one (X columns, Y column) sample."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        m = x.shape[0]
        self.m = m
        # Kendall collapse (strict) and its order statistics for quantiles.
        self.sorted_w = np.sort(strict_dominance_counts(x) / m)
        # Conditioning values: empirical joint CDF (weak, self included).
        self.v = weak_dominance_counts(x) / m
        # Target ranks: empirical CDF of Y at the sample points.
        order = np.sort(y)
        self.u_y = np.searchsorted(order, y, side="right") / m

    def kendall_quantile(self, q):
        idx = min(max(int(np.ceil(q * self.m)) - 1, 0), self.m - 1)
        return self.sorted_w[idx]

    def one_sided(self, alpha, beta, side):
        if side == "lower":
            cond = self.v <= self.kendall_quantile(alpha)
            hit = self.u_y <= beta
        else:
            cond = self.v >= self.kendall_quantile(1.0 - alpha)
            hit = self.u_y > 1.0 - beta
        n_cond = int(np.count_nonzero(cond))
        if n_cond == 0:
            raise ResolutionError("conditioning set is empty at this alpha")
        value = float(np.count_nonzero(cond & hit)) / n_cond
        stderr = math.sqrt(value * (1.0 - value) / n_cond)
        return value, stderr, n_cond


def _tail_measure(collapsed, alpha, beta, side):
    value, stderr, n_cond = collapsed.one_sided(alpha, beta, side)
    metadata = {}
    if side == "upper":
        # The literal definition gives beta under independence; the
        # published remark normalises by 1 - beta instead.  Both are
        # reported so downstream consumers can pick their convention.
        metadata["remark_ratio"] = value / (1.0 - beta)
        metadata["remark_note"] = (
            "ratio_vs_independence divides by beta (independence value of "
            "the literal definition); remark_ratio divides by 1 - beta"
        )
    return TailMeasureResult(
        side=side,
        value=value,
        ratio_vs_independence=value / beta,
        alpha=float(alpha),
        beta=float(beta),
        mc_stderr=stderr,
        n_conditioning=n_cond,
        reliable=n_cond >= RELIABILITY_FLOOR,
        metadata=metadata,
    )


def q_lower_kendall(sample, alpha, beta):
    """P(Y <= F_Y^-1(beta) | F_X(X) <= t_alpha), counted on a sample.

    ``sample`` holds the conditioning columns first and the target Y as
    the last column.  ``t_alpha`` is the generalized inverse of the
    empirical Kendall function at ``alpha``, so the conditioning event
    captures the jointly-low region of X with probability about alpha.
    """
    x, y = _split_sample(sample)
    _check_levels(alpha, beta, x.shape[0])
    return _tail_measure(_Collapsed(x, y), alpha, beta, "lower")


def q_upper_kendall(sample, alpha, beta):
    """P(Y >= F_Y^-1(1-beta) | F_X(X) >= t_{1-alpha}), counted on a sample.

    Mirror image of :func:`q_lower_kendall` for jointly-high
    conditioning regions.  Note the independence benchmark of the
    literal definition is beta, not 1 - beta; see the module docstring
    and the ``remark_ratio`` metadata entry.
    """
    x, y = _split_sample(sample)
    _check_levels(alpha, beta, x.shape[0])
    return _tail_measure(_Collapsed(x, y), alpha, beta, "upper")


@dataclass(frozen=True)
class LambdaKendallResult:
    """Grid diagnostics and extrapolation for a tail coefficient."""

    side: str
    alphas: tuple
    values: tuple
    stderrs: tuple
    n_conditioning: tuple
    reliable: tuple
    extrapolated: float
    point_estimate: float
    smallest_reliable_alpha: float

    def to_json_dict(self):
        return {
            "side": self.side,
            "alphas": list(self.alphas),
            "values": list(self.values),
            "stderrs": list(self.stderrs),
            "n_conditioning": list(self.n_conditioning),
            "reliable": list(self.reliable),
            "extrapolated": self.extrapolated,
            "point_estimate": self.point_estimate,
            "smallest_reliable_alpha": self.smallest_reliable_alpha,
        }


def lambda_kendall(sample, side, alpha_grid=DEFAULT_ALPHA_GRID):
    """Tail coefficient of Y given joint extremes of X.

    Evaluates q^K(alpha, alpha) along a decreasing ``alpha_grid`` in
    (0, 0.1], flags grid points whose conditioning set falls below the
    reliability floor, and extrapolates the reliable portion linearly
    in alpha to 0.  ``point_estimate`` is the measure at the smallest
    reliable alpha; ``extrapolated`` is the least-squares intercept.
    """
    if side not in ("lower", "upper"):
        raise DomainError(f"side must be 'lower' or 'upper', got {side!r}")
    alphas = tuple(float(a) for a in alpha_grid)
    if not alphas:
        raise DomainError("alpha_grid must be non-empty")
    if any(not (0.0 < a <= 0.1) for a in alphas):
        raise DomainError("alpha_grid values must lie in (0, 0.1]")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise DomainError("alpha_grid must be strictly decreasing")

    x, y = _split_sample(sample)
    collapsed = _Collapsed(x, y)
    values, stderrs, counts, reliable = [], [], [], []
    for a in alphas:
        try:
            val, se, n_cond = collapsed.one_sided(a, a, side)
        except ResolutionError:
            val, se, n_cond = float("nan"), float("nan"), 0
        values.append(val)
        stderrs.append(se)
        counts.append(n_cond)
        reliable.append(n_cond >= RELIABILITY_FLOOR)

    good = [i for i, ok in enumerate(reliable) if ok]
    if not good:
        raise ResolutionError(
            "no alpha in the grid leaves a reliable conditioning set; "
            "enlarge the sample or the grid"
        )
    ga = np.array([alphas[i] for i in good])
    gv = np.array([values[i] for i in good])
    if len(good) == 1:
        intercept = float(gv[0])
    else:
        intercept = float(np.polyfit(ga, gv, 1)[1])
    intercept = min(max(intercept, 0.0), 1.0)
    smallest = alphas[good[-1]]
    return LambdaKendallResult(
        side=side,
        alphas=alphas,
        values=tuple(values),
        stderrs=tuple(stderrs),
        n_conditioning=tuple(counts),
        reliable=tuple(reliable),
        extrapolated=intercept,
        point_estimate=float(values[good[-1]]),
        smallest_reliable_alpha=smallest,
    )


_DIRECTIONS = {"h": "H", "high": "H", "l": "L", "low": "L"}


def _normalize_direction(raw):
    key = str(raw).lower()
    if key not in _DIRECTIONS:
        raise DomainError(f"direction must be High or Low, got {raw!r}")
    return _DIRECTIONS[key]


@dataclass(frozen=True)
class ScenarioPattern:
    """Mixed high/low tail scenario for one target variable.

    ``conditioning`` maps variable indices to directions, e.g.
    ``((1, "H"), (2, "L"), (3, "L"))`` reads "variable 1 high while 2
    and 3 are low" and prints as the label ``HLL``.
    """

    conditioning: tuple
    target: int
    target_direction: str = "H"
    alpha: float = 0.05
    beta: float = 0.05

    def __post_init__(self):
        pairs = tuple((int(v), _normalize_direction(d)) for v, d in self.conditioning)
        if not pairs:
            raise DomainError("a scenario needs at least one conditioning variable")
        seen = [v for v, _ in pairs]
        if len(set(seen)) != len(seen):
            raise DomainError("conditioning variables must be distinct")
        target = int(self.target)
        if target in seen:
            raise DomainError("target cannot appear among the conditioning variables")
        if not (0.0 < self.alpha < 0.5) or not (0.0 < self.beta < 0.5):
            raise DomainError("alpha and beta must lie in (0, 0.5)")
        object.__setattr__(self, "conditioning", pairs)
        object.__setattr__(self, "target", target)
        object.__setattr__(
            self, "target_direction", _normalize_direction(self.target_direction)
        )
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def label(self):
        return "".join(d for _, d in self.conditioning)

    def flipped(self):
        """The same scenario with every direction reversed."""
        return ScenarioPattern(
            conditioning=tuple((v, "L" if d == "H" else "H") for v, d in self.conditioning),
            target=self.target,
            target_direction="L" if self.target_direction == "H" else "H",
            alpha=self.alpha,
            beta=self.beta,
        )


def scenario_tail_coefficient(model, pattern, n_mc=20_000, seed=0):
    """Tail measure of a vine model under a mixed high/low scenario.

    Simulates ``n_mc`` joint uniforms from ``model``, reflects every
    Low-direction coordinate (u -> 1 - u, target included), and applies
    the upper Kendall measure so that the scenario always reads "target
    extreme in its direction given all conditioners extreme in theirs".
    Reflection is driven entirely by the pattern's direction labels, so
    flipping all directions twice reproduces the result exactly.
    """
    from . import vine as vine_mod

    d = model.structure.n_vars
    indices = [v for v, _ in pattern.conditioning] + [pattern.target]
    if any(not (0 <= v < d) for v in indices):
        raise DomainError(
            f"pattern references variables outside the model's 0..{d - 1} range"
        )
    if n_mc < 1000:
        raise DomainError("n_mc must be at least 1000 for tail estimation")
    u = vine_mod.simulate(model, int(n_mc), seed=seed)
    cols = []
    for var, direction in pattern.conditioning:
        col = u[:, var]
        cols.append(1.0 - col if direction == "L" else col)
    target_col = u[:, pattern.target]
    if pattern.target_direction == "L":
        target_col = 1.0 - target_col
    working = np.column_stack(cols + [target_col])
    result = q_upper_kendall(working, pattern.alpha, pattern.beta)
    metadata = dict(result.metadata)
    metadata.update(
        {
            "pattern": pattern.label,
            "target": pattern.target,
            "target_direction": pattern.target_direction,
            "conditioning": list(pattern.conditioning),
            "n_mc": int(n_mc),
            "seed": int(seed),
        }
    )
    return TailMeasureResult(
        side=result.side,
        value=result.value,
        ratio_vs_independence=result.ratio_vs_independence,
        alpha=result.alpha,
        beta=result.beta,
        mc_stderr=result.mc_stderr,
        n_conditioning=result.n_conditioning,
        reliable=result.reliable,
        metadata=metadata,
    )


def tail_concentration(pseudo_pairs, alpha, beta_grid):
    """Lower/upper tail concentration curves of a bivariate sample.

    For each beta in ``beta_grid`` the lower curve is the share of
    {u <= alpha} rows that also have v <= beta, and the upper curve the
    share of {u > 1 - alpha} rows with v > 1 - beta.  Under independence
    both are about beta; under comonotonicity both hit 1 for beta >=
    alpha.  Rows with an empty conditioning column give NaN.
    """
    arr = np.asarray(pseudo_pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("pseudo_pairs must be an (m, 2) array")
    if arr.shape[0] == 0:
        raise DomainError("pseudo_pairs must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError("pseudo_pairs must be finite")
    if not (0.0 < alpha < 0.5):
        raise DomainError("alpha must lie in (0, 0.5)")
    betas = np.asarray(beta_grid, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0:
        raise DomainError("beta_grid must be a non-empty 1-d array")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise DomainError("beta_grid values must lie in (0, 1)")

    u, v = arr[:, 0], arr[:, 1]
    low_mask = u <= alpha
    high_mask = u > 1.0 - alpha
    n_low = int(np.count_nonzero(low_mask))
    n_high = int(np.count_nonzero(high_mask))
    lower = np.full(betas.shape, np.nan)
    upper = np.full(betas.shape, np.nan)
    if n_low:
        v_low = v[low_mask]
        lower = np.array([np.count_nonzero(v_low <= b) / n_low for b in betas])
    if n_high:
        v_high = v[high_mask]
        upper = np.array(
            [np.count_nonzero(v_high > 1.0 - b) / n_high for b in betas]
        )
    return {
        "alpha": float(alpha),
        "beta_grid": betas,
        "lower": lower,
        "upper": upper,
        "n_lower": n_low,
        "n_upper": n_high,
    }
