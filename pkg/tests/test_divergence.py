import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from robdiff.divergence import (DivergenceSpec, objective, psi, psi_terms, term_context,
                                term_value, terms, weighted_gaussian_moment)
from robdiff.errors import NumericalError
from robdiff.estimator import FitOptions, fit
from robdiff.influence import conditional_expectation
from robdiff.sde import Params, SamplePath, model_a, model_b, simulate_path

A = model_a()
B = model_b()
UNIT = Params(1.0, 1.0)
SPECS = [DivergenceSpec(f, lam) for f in ("density_power", "gamma") for lam in (0.0, 0.3, 0.5, 1.0)]


def fd_gradient(spec, model, theta, xp, xc, h):
    """Five-point central differences of term_value in (mu, sigma)."""
    out = []
    for j in range(2):
        base = [theta.mu, theta.sigma]
        e = 1e-4 * max(1.0, abs(base[j]))

        def f(t):
            p = list(base)
            p[j] += t
            return term_value(spec, model, Params(*p), xp, xc, h)

        out.append((-f(2 * e) + 8 * f(e) - 8 * f(-e) + f(-2 * e)) / (12 * e))
    return np.array(out)


def test_gamma_zero_residual_value():
    mp = -(mpmath.mpf("1.5") / (2 * mpmath.pi)) ** (mpmath.mpf(1) / 6)
    got = term_value(DivergenceSpec("gamma", 0.5), A, UNIT, 0.0, 0.0, 1.0)
    assert got == pytest.approx(float(mp), rel=1e-14)
    assert got == pytest.approx(-0.787623, abs=1e-6)


def test_density_power_zero_residual_value():
    mp = (2 * mpmath.pi) ** mpmath.mpf(-0.25) * (-2 + mpmath.mpf(1.5) ** mpmath.mpf(-1.5))
    got = term_value(DivergenceSpec("density_power", 0.5), A, UNIT, 0.0, 0.0, 1.0)
    assert got == pytest.approx(float(mp), rel=1e-14)


@pytest.mark.parametrize("family", ["density_power", "gamma"])
def test_quasi_likelihood_zero_residual(family):
    got = term_value(DivergenceSpec(family, 0.0), A, UNIT, 0.0, 0.0, 0.1)
    assert got == pytest.approx(0.5 * math.log(2 * math.pi), rel=1e-15)


def test_quasi_likelihood_general_value():
    # 0.5 log(2 pi a^2) + r^2 / (2 a^2 h) for model B at x_prev = 1, sigma = 2: a = 2
    r = 0.7 - 1.0 - 0.1 * (-1.5 * 1.0)
    expected = 0.5 * math.log(2 * math.pi * 4.0) + r * r / (2 * 4.0 * 0.1)
    got = term_value(DivergenceSpec("gamma", 0.0), B, Params(1.5, 2.0), 1.0, 0.7, 0.1)
    assert got == pytest.approx(expected, rel=1e-14)


def test_objective_constant_path():
    path = SamplePath(2, 1.0, [3.0, 3.0, 3.0])
    got = objective(DivergenceSpec("gamma", 0.0), A, Params(0.0, 1.0), path)
    assert got == pytest.approx(math.log(2 * math.pi), rel=1e-15)


def test_objective_is_sum_of_terms():
    path = SamplePath(2, 0.2, [0.1, -0.3, 0.4])
    spec = DivergenceSpec("density_power", 0.3)
    theta = Params(0.8, 1.2)
    expected = term_value(spec, A, theta, 0.1, -0.3, 0.2) + term_value(spec, A, theta, -0.3, 0.4, 0.2)
    assert objective(spec, A, theta, path) == pytest.approx(expected, rel=1e-15)


def test_objective_requires_two_increments():
    with pytest.raises(ValueError):
        objective(DivergenceSpec(), A, UNIT, SamplePath(1, 0.1, [0.0, 1.0]))


def test_objective_summation_order_invariance():
    path = simulate_path(B, Params(1.0, 1.0), 2000, 0.02, seed=8)
    spec = DivergenceSpec("gamma", 0.3)
    theta = Params(0.9, 1.1)
    total = objective(spec, B, theta, path)
    x = path.values
    pieces = [term_value(spec, B, theta, x[i - 1], x[i], path.h) for i in range(1, path.n + 1)]
    rng = random.Random(5)
    for _ in range(5):
        rng.shuffle(pieces)
        # oracle: compensated (Kahan) summation in a shuffled order
        s, c = 0.0, 0.0
        for v in pieces:
            y = v - c
            t = s + y
            c = (t - s) - y
            s = t
        assert abs(s - total) <= 1e-12 * abs(total)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_term_is_reported():
    with pytest.raises(NumericalError, match="index"):
        terms(DivergenceSpec("gamma", 0.0), A, UNIT, np.array([0.0, 0.0]),
              np.array([0.0, 1e200]), 1e-10)


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("model", [A, B])
def test_zero_residual_has_zero_mu_component(spec, model):
    theta = Params(1.3, 0.7)
    xp, h = 0.6, 0.05
    xc = xp + h * model.drift(xp, theta.mu)
    # xc carries one rounding error, so the residual is at most a few ulps
    assert abs(psi(spec, model, theta, xp, xc, h).psi_mu) < 1e-13


def test_gamma_zero_residual_sigma_component():
    spec = DivergenceSpec("gamma", 0.3)
    got = psi(spec, A, UNIT, 0.0, 0.0, 1.0).psi_sigma
    g = mpmath.mpf("0.3")
    normalized = (1 / (1 + g)) * ((1 + g) / (2 * mpmath.pi)) ** (g / (2 * (1 + g)))
    # exact gradient = gamma times the normalized estimating function
    assert got == pytest.approx(float(g * normalized), rel=1e-13)
    assert got == pytest.approx(fd_gradient(spec, A, UNIT, 0.0, 0.0, 1.0)[1], rel=1e-8)


def test_large_residual_limits():
    theta, xp, h = Params(1.0, 1.3), 0.2, 0.04
    for model in (A, B):
        a = model.diffusion(xp, theta.sigma)
        da = model.diffusion_dsigma(xp, theta.sigma)
        for alpha in (0.3, 0.5, 1.0):
            got = psi(DivergenceSpec("density_power", alpha), model, theta, xp, xp + 1e3, h)
            limit = -alpha * (1 + alpha) ** -1.5 * (2 * math.pi * a * a * h) ** (-alpha / 2) * da / a
            assert got.psi_sigma == pytest.approx(limit, rel=1e-12)
            assert got.psi_mu == 0.0
            got = psi(DivergenceSpec("gamma", alpha), model, theta, xp, xp + 1e3, h)
            assert got.psi_sigma == 0.0 and got.psi_mu == 0.0


@st.composite
def transition(draw):
    model = draw(st.sampled_from([A, B]))
    theta = Params(draw(st.floats(0.1, 5.0)), draw(st.floats(0.2, 3.0)))
    h = draw(st.floats(0.005, 0.5))
    xp = draw(st.floats(-2.0, 2.0))
    z = draw(st.floats(-4.0, 4.0))
    xc = xp + h * model.drift(xp, theta.mu) + model.diffusion(xp, theta.sigma) * math.sqrt(h) * z
    return model, theta, h, xp, xc


@given(tr=transition(), spec=st.sampled_from(SPECS))
def test_psi_is_gradient_of_term(tr, spec):
    model, theta, h, xp, xc = tr
    got = psi(spec, model, theta, xp, xc, h).as_array()
    ref = fd_gradient(spec, model, theta, xp, xc, h)
    assert np.max(np.abs(got - ref)) <= 1e-6 * max(np.max(np.abs(got)), 1e-8)


@given(tr=transition(), spec=st.sampled_from(SPECS))
def test_vectorized_terms_match_scalar(tr, spec):
    model, theta, h, xp, xc = tr
    q = terms(spec, model, theta, np.array([xp, xp]), np.array([xc, xc]), h)
    assert q[0] == q[1] == term_value(spec, model, theta, xp, xc, h)
    pm, ps = psi_terms(spec, model, theta, np.array([xp]), np.array([xc]), h)
    one = psi(spec, model, theta, xp, xc, h)
    assert (pm[0], ps[0]) == (one.psi_mu, one.psi_sigma)


@pytest.mark.parametrize("model", [A, B])
def test_small_lambda_limit(model):
    theta, xp, xc, h = Params(1.2, 0.8), 0.4, 0.9, 0.05
    base = psi(DivergenceSpec("gamma", 0.0), model, theta, xp, xc, h).as_array()
    gaps_dp, gaps_g = [], []
    for lam in (1e-3, 1e-4, 1e-5):
        dp = psi(DivergenceSpec("density_power", lam), model, theta, xp, xc, h).as_array()
        g = psi(DivergenceSpec("gamma", lam), model, theta, xp, xc, h).as_array() / lam
        gaps_dp.append(np.linalg.norm(dp - base))
        gaps_g.append(np.linalg.norm(g - base))
    for gaps in (gaps_dp, gaps_g):
        assert gaps[-1] < 1e-3
        # linear decay: each tenfold smaller lambda shrinks the gap tenfold
        assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=0.05)
        assert gaps[1] / gaps[2] == pytest.approx(10.0, rel=0.05)


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("model", [A, B])
def test_conditional_fisher_consistency(spec, model):
    rng = np.random.default_rng(17)
    for _ in range(5):
        theta = Params(rng.uniform(0.2, 3), rng.uniform(0.3, 2))
        xp, h = rng.uniform(-2, 2), rng.uniform(0.01, 0.3)
        e_mu, e_sigma = conditional_expectation(
            lambda x: psi_terms(spec, model, theta, np.full_like(x, xp), x, h),
            model, theta, xp, h, nodes=128)
        assert abs(e_mu) < 1e-8 and abs(e_sigma) < 1e-8


@given(tr=transition(), lam=st.floats(0.01, 1.5))
def test_weight_bounds(tr, lam):
    model, theta, h, xp, xc = tr
    ctx = term_context(DivergenceSpec("gamma", lam), model, theta, xp, xc, h)
    a2h = ctx.a_prev ** 2 * h
    top_alpha = (2 * math.pi * a2h) ** (-lam / 2)
    top_gamma = ((1 + lam) / (2 * math.pi * a2h)) ** (lam / (2 * (1 + lam)))
    assert 0 < ctx.w_alpha <= top_alpha * (1 + 1e-12)
    assert 0 < ctx.w_gamma <= top_gamma * (1 + 1e-12)
    peak = term_context(DivergenceSpec("gamma", lam), model, theta, xp,
                        xp + h * model.drift(xp, theta.mu), h)
    assert abs(peak.z) < 1e-12
    assert peak.w_alpha == pytest.approx(top_alpha, rel=1e-12)
    assert peak.w_gamma == pytest.approx(top_gamma, rel=1e-12)


def _gh_moment(k, c, nodes=129):
    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    return math.fsum(w * t ** k * np.exp(-c * t * t)) / math.sqrt(2 * math.pi)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("c", [0.0, 0.15, 0.3, 0.5, 1.7])
def test_weighted_moment_matches_quadrature(k, c):
    assert weighted_gaussian_moment(k, c) == pytest.approx(_gh_moment(k, c), abs=1e-10)


def test_weighted_moment_examples():
    assert weighted_gaussian_moment(2, 0.0) == 1.0
    assert weighted_gaussian_moment(1, 0.3) == 0.0
    assert weighted_gaussian_moment(2, 0.3) == pytest.approx(1.6 ** -1.5, rel=1e-15)
    assert weighted_gaussian_moment(2, 0.3) == pytest.approx(0.494106, abs=1e-6)
    with pytest.raises(ValueError):
        weighted_gaussian_moment(5, 0.1)


@pytest.mark.parametrize("g", [0.3, 0.5])
def test_appendix_identities(g):
    # E[(1/(1+g) - Z^2) e^{-g Z^2 / 2}] = 0 and the squared version
    m = weighted_gaussian_moment
    assert m(0, g / 2) / (1 + g) - m(2, g / 2) == pytest.approx(0.0, abs=1e-15)
    sq = m(0, g) / (1 + g) ** 2 - 2 * m(2, g) / (1 + g) + m(4, g)
    assert sq == pytest.approx((3 * g * g + 4 * g + 2) / ((1 + 2 * g) ** 2.5 * (1 + g) ** 2), rel=1e-13)


def _reduced_objective(lam, theta, path):
    """Constant-sigma objective with the theta-free constant dropped (model A)."""
    x = path.values
    r = np.diff(x) + theta.mu * path.h * x[:-1]
    s = theta.sigma
    if lam == 0:
        return math.fsum(math.log(s * s) + r * r / (s * s * path.h))
    return math.fsum(-s ** (-lam / (1 + lam)) * np.exp(-lam * r * r / (2 * s * s * path.h)))


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.5])
def test_reduced_form_has_same_minimizer(lam):
    path = simulate_path(A, UNIT, 300, 300 ** -0.55, seed=21)
    res = fit(path, A, DivergenceSpec("gamma", lam), FitOptions(grad_tol=1e-10))
    red = minimize(lambda u: _reduced_objective(lam, Params(u[0], math.exp(u[1])), path),
                   [res.theta_hat.mu * 1.1, math.log(res.theta_hat.sigma) + 0.05],
                   method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 5000})
    assert red.x[0] == pytest.approx(res.theta_hat.mu, abs=1e-6)
    assert math.exp(red.x[1]) == pytest.approx(res.theta_hat.sigma, abs=1e-6)
    if lam > 0:
        # the two objectives differ by a positive theta-free factor
        ratios = [objective(DivergenceSpec("gamma", lam), A, t, path) / _reduced_objective(lam, t, path)
                  for t in (Params(0.5, 0.8), Params(2.0, 1.4))]
        assert ratios[0] == pytest.approx(ratios[1], rel=1e-12) and ratios[0] > 0


def test_family_aliases():
    assert DivergenceSpec("dp", 0.3).family == "density_power"
    assert DivergenceSpec("Density-Power", 0.3).family == "density_power"
    with pytest.raises(ValueError):
        DivergenceSpec("kl", 0.1)
    with pytest.raises(ValueError):
        DivergenceSpec("gamma", -0.1)
