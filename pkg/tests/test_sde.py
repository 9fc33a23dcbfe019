import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robdiff.errors import NumericalError
from robdiff.sde import (Params, SamplePath, SimulationOptions, default_step, get_model, model_a,
                         model_b, read_path_csv, simulate_path, write_path_csv)

NO_BURN = SimulationOptions(substeps=1, burn_in=0, x0=1.0)


def test_model_a_coefficients():
    m = model_a()
    assert m.drift(2.0, 1.0) == -2.0
    assert m.diffusion(123.4, 1.5) == 1.5
    assert m.drift_dmu(3.0, 0.7) == -3.0
    assert m.diffusion_dsigma(-5.0, 2.0) == 1.0
    assert m.param_bounds == ((0.01, 10.0), (0.01, 10.0))


def test_model_b_coefficients():
    m = model_b()
    assert m.diffusion(0.0, 1.0) == 2.0
    assert m.diffusion(1e8, 3.0) == pytest.approx(1.0, abs=1e-12)
    assert m.diffusion_dsigma(1.0, 0.4) == 0.5
    assert m.param_bounds == model_a().param_bounds


@given(x=st.floats(-50, 50), mu=st.floats(0.01, 10), sigma=st.floats(0.01, 10))
def test_derivatives_match_finite_differences(x, mu, sigma):
    for m in (model_a(), model_b()):
        e = 1e-6
        fd_b = (m.drift(x, mu + e) - m.drift(x, mu - e)) / (2 * e)
        fd_a = (m.diffusion(x, sigma + e) - m.diffusion(x, sigma - e)) / (2 * e)
        assert m.drift_dmu(x, mu) == pytest.approx(fd_b, rel=1e-6, abs=1e-6)
        assert m.diffusion_dsigma(x, sigma) == pytest.approx(fd_a, rel=1e-6, abs=1e-6)
        assert m.diffusion(x, sigma) > 0


def test_coefficients_broadcast_over_arrays():
    x = np.linspace(-2, 2, 5)
    for m in (model_a(), model_b()):
        assert m.diffusion(x, 1.0).shape == x.shape
        assert m.diffusion_dsigma(x, 1.0).shape == x.shape
        assert m.drift_dmu(x, 1.0).shape == x.shape


def test_get_model_rejects_unknown():
    assert get_model("a").id == "A"
    with pytest.raises(ValueError):
        get_model("C")


def test_deterministic_euler_recursion():
    p = simulate_path(model_a(), Params(1.0, 0.0), 4, 0.5, NO_BURN, seed=3)
    np.testing.assert_array_equal(p.values, [1.0, 0.5, 0.25, 0.125, 0.0625])


def test_zero_dynamics_constant_path():
    opts = SimulationOptions(substeps=3, burn_in=10, x0=2.5)
    p = simulate_path(model_a(), Params(0.0, 0.0), 20, 0.1, opts, seed=1)
    assert np.all(p.values == 2.5)


def test_same_seed_is_bit_identical():
    m = model_b()
    a = simulate_path(m, Params(1.0, 1.0), 300, 0.05, seed=99)
    b = simulate_path(m, Params(1.0, 1.0), 300, 0.05, seed=99)
    c = simulate_path(m, Params(1.0, 1.0), 300, 0.05, seed=100)
    assert a.values.tobytes() == b.values.tobytes()
    assert not np.array_equal(a.values, c.values)


def test_refinement_converges_at_first_order():
    # sigma = 0: Euler gives (1 - mu h/m)^(m n); the exact flow is exp(-mu t)
    mu, h, n = 1.0, 0.5, 4
    exact = math.exp(-mu * h * n)
    errors = []
    for m in (4, 8, 16, 32):
        opts = SimulationOptions(substeps=m, burn_in=0, x0=1.0)
        p = simulate_path(model_a(), Params(mu, 0.0), n, h, opts, seed=0)
        errors.append(abs(p.values[-1] - exact))
    ratios = [errors[i] / errors[i + 1] for i in range(3)]
    assert all(1.8 < r < 2.2 for r in ratios)


def _exact_ou_path(mu, sigma, n, h, seed):
    """Exact AR(1) transitions started from the stationary law."""
    rng = np.random.default_rng(seed)
    phi = math.exp(-mu * h)
    sd = sigma * math.sqrt((1 - phi ** 2) / (2 * mu))
    x = np.empty(n + 1)
    x[0] = rng.normal(0, sigma / math.sqrt(2 * mu))
    eps = rng.standard_normal(n)
    for i in range(n):
        x[i + 1] = phi * x[i] + sd * eps[i]
    return x


def test_stationary_variance_example():
    opts = SimulationOptions(substeps=10, burn_in=1000, stationary_ou=True)
    p = simulate_path(model_a(), Params(1.0, 1.0), 100_000, 0.01, opts, seed=2024)
    assert np.var(p.values) == pytest.approx(0.5, rel=0.05)


def test_stationary_moments_agree_with_exact_ou():
    # horizon 10^4 keeps the sampling error of the variance near 1%
    opts = SimulationOptions(substeps=10, burn_in=1000, stationary_ou=True)
    p = simulate_path(model_a(), Params(1.0, 1.0), 100_000, 0.1, opts, seed=77)
    oracle = _exact_ou_path(1.0, 1.0, 100_000, 0.1, seed=78)
    assert np.var(p.values) == pytest.approx(0.5, rel=0.05)
    assert np.var(oracle) == pytest.approx(0.5, rel=0.05)
    assert np.var(p.values) == pytest.approx(np.var(oracle), rel=0.05)
    assert abs(np.mean(p.values)) < 0.05


def test_stationary_start_requires_ergodic_model_a():
    with pytest.raises(ValueError):
        simulate_path(model_b(), Params(1.0, 1.0), 10, 0.1,
                      SimulationOptions(stationary_ou=True), seed=0)
    with pytest.raises(ValueError):
        simulate_path(model_a(), Params(-1.0, 1.0), 10, 0.1,
                      SimulationOptions(stationary_ou=True), seed=0)


def test_explosive_parameters_fail_with_index():
    opts = SimulationOptions(substeps=1, burn_in=0, x0=1.0)
    with pytest.raises(NumericalError, match="observation"):
        simulate_path(model_a(), Params(-1e6, 0.0), 200, 1.0, opts, seed=0)


@pytest.mark.parametrize("kwargs", [dict(n=1, h=0.1), dict(n=5, h=0.0), dict(n=5, h=-1.0)])
def test_invalid_arguments(kwargs):
    with pytest.raises(ValueError):
        simulate_path(model_a(), Params(1.0, 1.0), seed=0, **kwargs)


def test_sample_path_validation():
    with pytest.raises(ValueError):
        SamplePath(3, 0.1, [0.0, 1.0])
    with pytest.raises(ValueError):
        SamplePath(1, 0.1, [0.0, float("nan")])
    p = SamplePath(1, 0.1, [0.0, 1.0])
    with pytest.raises(ValueError):
        p.values[0] = 5.0


def test_default_step_rule():
    assert default_step(100) == pytest.approx(100 ** -0.55)
    assert default_step(500) == pytest.approx(0.0327768, abs=1e-7)


def test_csv_round_trip(tmp_path):
    p = simulate_path(model_a(), Params(1.0, 1.0), 50, 0.1, seed=5)
    dest = tmp_path / "p.csv"
    text = write_path_csv(p, dest)
    assert text.splitlines()[0] == "index,time,value"
    assert len(text.splitlines()) == 52
    q = read_path_csv(dest)
    np.testing.assert_array_equal(q.values, p.values)
    assert q.h == pytest.approx(0.1)
