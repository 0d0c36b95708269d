import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from powerdep import bicop
from powerdep.bicop import BivariateCopula
from powerdep.errors import DomainError, FamilyInfeasibleError


def make(family, rotation=0, params=()):
    return BivariateCopula(family, rotation, params)


REFERENCE_COPULAS = [
    make("independence"),
    make("gaussian", 0, (0.5,)),
    make("gaussian", 0, (-0.6,)),
    make("studentt", 0, (0.5, 4.0)),
    make("clayton", 0, (2.0,)),
    make("clayton", 90, (2.0,)),
    make("clayton", 180, (2.0,)),
    make("clayton", 270, (2.0,)),
    make("gumbel", 0, (2.0,)),
    make("gumbel", 90, (1.7,)),
    make("gumbel", 180, (2.0,)),
    make("gumbel", 270, (1.7,)),
    make("frank", 0, (5.0,)),
    make("frank", 0, (-3.0,)),
]

# closed-form values, worked out by hand from the family formulas
FROZEN_CDF = [
    ("independence", (), 0.5, 0.5, 0.25),
    ("gaussian", (0.5,), 0.5, 0.5, 1.0 / 3.0),
    ("studentt", (0.5, 4.0), 0.5, 0.5, 1.0 / 3.0),
    ("clayton", (2.0,), 0.5, 0.5, 7.0 ** -0.5),
    ("gumbel", (2.0,), 0.5, 0.5, 0.37521422724648174),
    ("frank", (5.0,), 0.5, 0.5, 0.3771485107465207),
]

FROZEN_PDF = [
    ("independence", (), 0.3, 0.8, 1.0),
    ("gaussian", (0.5,), 0.5, 0.5, 1.1547005383792517),
    ("clayton", (2.0,), 0.5, 0.5, 1.481003649342278),
]


@pytest.mark.parametrize("family,params,u,v,expected", FROZEN_CDF)
def test_cdf_closed_forms(family, params, u, v, expected):
    cop = make(family, 0, params)
    assert_allclose(bicop.cdf(cop, u, v), expected, atol=1e-9)


@pytest.mark.parametrize("family,params,u,v,expected", FROZEN_PDF)
def test_pdf_closed_forms(family, params, u, v, expected):
    cop = make(family, 0, params)
    assert_allclose(bicop.pdf(cop, u, v), expected, rtol=1e-10)


def test_gaussian_cdf_against_scipy_mvn():
    cop = make("gaussian", 0, (0.5,))
    pts = [(0.3, 0.7), (0.1, 0.9), (0.45, 0.2), (0.8, 0.85)]
    mv = stats.multivariate_normal(mean=[0, 0], cov=[[1, 0.5], [0.5, 1]])
    for u, v in pts:
        expected = float(mv.cdf(stats.norm.ppf([u, v])))
        assert_allclose(float(bicop.cdf(cop, u, v)), expected, atol=5e-7)


@pytest.mark.parametrize("cop", REFERENCE_COPULAS, ids=str)
def test_cdf_within_frechet_bounds_on_grid(cop):
    grid = np.linspace(0.02, 0.98, 25)
    uu, vv = np.meshgrid(grid, grid)
    c = bicop.cdf(cop, uu, vv)
    assert np.all(c >= np.maximum(uu + vv - 1.0, 0.0) - 1e-12)
    assert np.all(c <= np.minimum(uu, vv) + 1e-12)


@pytest.mark.parametrize("cop", REFERENCE_COPULAS, ids=str)
def test_cdf_uniform_margins(cop):
    u = np.linspace(0.05, 0.95, 10)
    near_one = 1.0 - 1e-12
    assert_allclose(bicop.cdf(cop, u, near_one), u, atol=1e-7)
    assert_allclose(bicop.cdf(cop, near_one, u), u, atol=1e-7)
    assert_allclose(bicop.cdf(cop, u, 1e-12), 0.0, atol=1e-7)


@pytest.mark.parametrize("cop", REFERENCE_COPULAS, ids=str)
@pytest.mark.parametrize("margin", [1, 2])
def test_hfunc_matches_finite_difference_of_cdf(cop, margin):
    # 20x20 interior grid, central differences with delta = 1e-5
    grid = np.linspace(0.04, 0.96, 20)
    uu, vv = [a.ravel() for a in np.meshgrid(grid, grid)]
    delta = 1e-5
    if margin == 2:
        fd = (bicop.cdf(cop, uu, vv + delta) - bicop.cdf(cop, uu, vv - delta)) / (
            2 * delta
        )
    else:
        fd = (bicop.cdf(cop, uu + delta, vv) - bicop.cdf(cop, uu - delta, vv)) / (
            2 * delta
        )
    h = bicop.hfunc(cop, uu, vv, margin=margin)
    assert np.max(np.abs(fd - h)) < 1e-4


@pytest.mark.parametrize("cop", REFERENCE_COPULAS, ids=str)
@pytest.mark.parametrize("margin", [1, 2])
def test_hinv_round_trip(cop, margin):
    rng = np.random.default_rng(12)
    p = rng.uniform(0.01, 0.99, 50)
    w = rng.uniform(0.01, 0.99, 50)
    x = bicop.hinv(cop, p, w, margin=margin)
    if margin == 2:
        back = bicop.hfunc(cop, x, w, margin=2)
    else:
        back = bicop.hfunc(cop, w, x, margin=1)
    assert_allclose(back, p, atol=1e-8)


@given(
    st.sampled_from(["gaussian", "clayton", "gumbel", "frank"]),
    st.integers(min_value=0, max_value=3),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.1, max_value=0.85),
)
def test_hfunc_values_are_probabilities(family, rot_idx, u, v, strength):
    params = {
        "gaussian": (2.0 * strength - 0.9,),
        "clayton": (4.0 * strength + 0.1,),
        "gumbel": (1.0 + 3.0 * strength,),
        "frank": (14.0 * strength - 7.0 if abs(14.0 * strength - 7.0) > 0.05 else 0.5,),
    }[family]
    cop = make(family, (0, 90, 180, 270)[rot_idx], params)
    for margin in (1, 2):
        h = bicop.hfunc(cop, u, v, margin=margin)
        assert 0.0 <= float(h) <= 1.0


def test_survival_rotation_identity():
    base = make("clayton", 0, (2.0,))
    rot = make("clayton", 180, (2.0,))
    rng = np.random.default_rng(0)
    u, v = rng.uniform(0.02, 0.98, (2, 200))
    lhs = bicop.cdf(rot, u, v)
    rhs = u + v - 1.0 + bicop.cdf(base, 1.0 - u, 1.0 - v)
    assert_allclose(lhs, rhs, atol=1e-12)


def test_rotation_90_270_identities():
    base = make("gumbel", 0, (2.0,))
    rng = np.random.default_rng(1)
    u, v = rng.uniform(0.02, 0.98, (2, 100))
    assert_allclose(
        bicop.cdf(make("gumbel", 90, (2.0,)), u, v),
        v - bicop.cdf(base, 1.0 - u, v),
        atol=1e-12,
    )
    assert_allclose(
        bicop.cdf(make("gumbel", 270, (2.0,)), u, v),
        u - bicop.cdf(base, u, 1.0 - v),
        atol=1e-12,
    )


def test_pdf_mass_matches_cdf_inclusion_exclusion():
    # numeric double integral of the density over [0.01, 0.99]^2 against
    # the inclusion-exclusion mass of the same square
    cop = make("clayton", 0, (2.0,))
    mass, _ = integrate.dblquad(
        lambda y, x: float(bicop.pdf(cop, x, y)),
        0.01,
        0.99,
        0.01,
        0.99,
        epsabs=1e-6,
    )
    lo, hi = 0.01, 0.99
    expected = (
        float(bicop.cdf(cop, hi, hi))
        - float(bicop.cdf(cop, lo, hi))
        - float(bicop.cdf(cop, hi, lo))
        + float(bicop.cdf(cop, lo, lo))
    )
    assert abs(mass - expected) < 1e-3


def test_log_pdf_matches_pdf():
    cop = make("gumbel", 180, (2.5,))
    rng = np.random.default_rng(2)
    u, v = rng.uniform(0.05, 0.95, (2, 50))
    assert_allclose(np.exp(bicop.log_pdf(cop, u, v)), bicop.pdf(cop, u, v), rtol=1e-12)


TAU_CASES = [
    (make("gaussian", 0, (0.5,)), 1.0 / 3.0),
    (make("studentt", 0, (0.5, 4.0)), 1.0 / 3.0),
    (make("clayton", 0, (2.0,)), 0.5),
    (make("gumbel", 0, (2.0,)), 0.5),
    (make("clayton", 90, (2.0,)), -0.5),
    (make("gumbel", 270, (2.0,)), -0.5),
    (make("independence"), 0.0),
]


@pytest.mark.parametrize("cop,expected", TAU_CASES, ids=str)
def test_tau_closed_forms(cop, expected):
    assert_allclose(bicop.tau_of(cop), expected, atol=1e-12)


def test_frank_tau_against_direct_double_integral():
    theta = 5.0
    cop = make("frank", 0, (theta,))
    # tau = 4 * E[C(U,V)] - 1 evaluated by direct quadrature
    val, _ = integrate.dblquad(
        lambda y, x: float(bicop.cdf(cop, x, y) * bicop.pdf(cop, x, y)),
        0.0,
        1.0,
        0.0,
        1.0,
        epsabs=1e-9,
    )
    assert_allclose(bicop.tau_of(cop), 4.0 * val - 1.0, atol=1e-4)
    assert_allclose(bicop.tau_of(make("frank", 0, (-theta,))), -bicop.tau_of(cop))


def test_spearman_gaussian_closed_form():
    assert_allclose(
        bicop.spearman_of(make("gaussian", 0, (0.5,))),
        6.0 / np.pi * np.arcsin(0.25),
        rtol=1e-12,
    )


@pytest.mark.parametrize(
    "cop",
    [make("clayton", 0, (2.0,)), make("gumbel", 0, (2.0,)), make("frank", 0, (5.0,))],
    ids=str,
)
def test_spearman_quadrature_matches_sampling(cop):
    rho_s = bicop.spearman_of(cop)
    s = bicop.sample(cop, 1_000_000, seed=99)
    emp = stats.spearmanr(s[:, 0], s[:, 1]).statistic
    assert abs(rho_s - emp) < 0.004


TDC_CASES = [
    (make("clayton", 0, (2.0,)), 2.0 ** -0.5, 0.0),
    (make("clayton", 180, (2.0,)), 0.0, 2.0 ** -0.5),
    (make("clayton", 90, (2.0,)), 0.0, 0.0),
    (make("gumbel", 0, (2.0,)), 0.0, 2.0 - 2.0 ** 0.5),
    (make("gumbel", 180, (2.0,)), 2.0 - 2.0 ** 0.5, 0.0),
    (make("gaussian", 0, (0.5,)), 0.0, 0.0),
    (make("frank", 0, (5.0,)), 0.0, 0.0),
    (make("studentt", 0, (0.5, 4.0)), 0.25316999510032273, 0.25316999510032273),
]


@pytest.mark.parametrize("cop,lower,upper", TDC_CASES, ids=str)
def test_tail_dependence_coefficients(cop, lower, upper):
    assert_allclose(bicop.lower_tdc(cop), lower, atol=1e-12)
    assert_allclose(bicop.upper_tdc(cop), upper, atol=1e-12)


@pytest.mark.parametrize("cop", REFERENCE_COPULAS, ids=str)
def test_sample_reproduces_tau(cop):
    s = bicop.sample(cop, 1_000_000, seed=77)
    tau_emp = stats.kendalltau(s[:, 0], s[:, 1]).statistic
    assert abs(tau_emp - bicop.tau_of(cop)) < 0.005


def test_sample_deterministic_and_in_unit_square():
    cop = make("gumbel", 0, (2.0,))
    a = bicop.sample(cop, 1000, seed=5)
    b = bicop.sample(cop, 1000, seed=5)
    c = bicop.sample(cop, 1000, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all((a > 0.0) & (a < 1.0))


FIT_CASES = [
    ("gaussian", 0, (0.6,), 0.05),
    ("clayton", 0, (2.0,), 0.2),
    ("gumbel", 0, (2.0,), 0.15),
    ("frank", 0, (5.0,), 0.5),
    ("clayton", 90, (2.0,), 0.25),
    ("gumbel", 180, (2.0,), 0.15),
]


@pytest.mark.parametrize("family,rotation,params,tol", FIT_CASES)
def test_fit_mle_recovers_parameters(family, rotation, params, tol):
    true = make(family, rotation, params)
    data = bicop.sample(true, 5000, seed=21)
    fit = bicop.fit_mle(family, rotation, data)
    assert fit.converged
    assert fit.copula.rotation == rotation
    assert_allclose(fit.copula.params[0], params[0], atol=tol)
    assert fit.aic == pytest.approx(2 * fit.copula.n_params - 2 * fit.loglik)


def test_fit_studentt_recovers_rho_and_nu():
    true = make("studentt", 0, (0.5, 4.0))
    data = bicop.sample(true, 4000, seed=8)
    fit = bicop.fit_mle("studentt", 0, data)
    assert_allclose(fit.copula.params[0], 0.5, atol=0.05)
    assert 2.5 < fit.copula.params[1] < 8.0


def test_fit_clayton_on_negative_tau_is_infeasible():
    data = bicop.sample(make("gaussian", 0, (-0.5,)), 500, seed=2)
    with pytest.raises(FamilyInfeasibleError):
        bicop.fit_mle("clayton", 0, data)
    with pytest.raises(FamilyInfeasibleError):
        bicop.fit_mle("gumbel", 0, data)
    # the reflected orientation accepts the same data
    fit = bicop.fit_mle("clayton", 90, data)
    assert fit.converged


def test_fit_comonotone_ranks_flags_boundary():
    n = 400
    u = (np.arange(1, n + 1)) / (n + 1.0)
    data = np.column_stack([u, u])
    fit = bicop.fit_mle("gaussian", 0, data)
    assert fit.boundary
    assert fit.copula.params[0] > 0.999


def test_select_family_aic_picks_clayton_on_clayton_data():
    data = bicop.sample(make("clayton", 0, (2.0,)), 1000, seed=31)
    sel = bicop.select_family_aic(
        data, candidates=(("gaussian", 0), ("clayton", 0), ("gumbel", 0))
    )
    assert sel.best.copula.family == "clayton"
    again = bicop.select_family_aic(
        data, candidates=(("gaussian", 0), ("clayton", 0), ("gumbel", 0))
    )
    assert again.best.copula.params == sel.best.copula.params


def test_select_family_skips_infeasible_candidates_with_warning():
    data = bicop.sample(make("gaussian", 0, (-0.5,)), 800, seed=4)
    sel = bicop.select_family_aic(
        data, candidates=(("clayton", 0), ("gaussian", 0), ("clayton", 90))
    )
    assert sel.best.copula.family in ("gaussian", "clayton")
    assert any("clayton@0" in w for w in sel.warnings)
    statuses = {(r["family"], r["rotation"]): r["status"] for r in sel.table}
    assert statuses[("clayton", 0)] == "family_infeasible"


def test_aic_of_independence_is_zero():
    data = bicop.sample(make("independence"), 500, seed=14)
    fit = bicop.fit_mle("independence", 0, data)
    assert fit.aic == 0.0
    assert fit.loglik == 0.0


def test_json_round_trip_is_bit_exact():
    cop = make("clayton", 90, (2.0000000000000004,))
    payload = json.dumps(cop.to_json_dict())
    restored = BivariateCopula.from_json_dict(json.loads(payload))
    assert restored == cop
    assert repr(restored.params[0]) == repr(cop.params[0])

    cop2 = make("studentt", 0, (0.123456789012345678, 7.00000000000001))
    restored2 = BivariateCopula.from_json_dict(json.loads(json.dumps(cop2.to_json_dict())))
    assert restored2.params == cop2.params


def test_domain_errors():
    with pytest.raises(DomainError):
        make("gaussian", 0, (1.5,))
    with pytest.raises(DomainError):
        make("clayton", 0, (-1.0,))
    with pytest.raises(DomainError):
        make("gumbel", 0, (0.5,))
    with pytest.raises(DomainError):
        make("frank", 0, (0.0,))
    with pytest.raises(DomainError):
        make("studentt", 0, (0.5, 1.5))
    with pytest.raises(DomainError):
        make("gaussian", 45, (0.5,))
    cop = make("gaussian", 0, (0.5,))
    with pytest.raises(DomainError):
        bicop.cdf(cop, 1.2, 0.5)
    with pytest.raises(DomainError):
        bicop.hfunc(cop, 0.5, 0.5, margin=3)
