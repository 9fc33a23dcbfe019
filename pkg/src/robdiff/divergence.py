"""Per-transition divergence terms and their estimating functions.

The transition density over one observation step is approximated by the
Euler Gaussian ``N(x_prev + h b(x_prev, mu), a(x_prev, sigma)^2 h)``. With the
residual ``r = x_curr - x_prev - h b`` and standardized residual
``z = r / (a sqrt(h))`` the three per-transition terms are

* quasi-likelihood (``lam = 0``)::

      q = 0.5 log(2 pi a^2) + z^2 / 2

* density power, ``lam = alpha > 0``::

      q = (2 pi a^2 h)^(-alpha/2) [ -exp(-alpha z^2 / 2) / alpha + (1 + alpha)^(-3/2) ]

* gamma, ``lam = gamma > 0``::

      q = -((1 + gamma) / (2 pi a^2 h))^(gamma / (2 (1 + gamma))) exp(-gamma z^2 / 2)

The weights ``w_alpha`` and ``w_gamma`` are the Gaussian-kernel factors that
multiply the score; they vanish for large ``|z|``, which is where robustness
comes from.

:func:`psi` is the exact gradient of :func:`term_value` in ``(mu, sigma)``.
For the gamma family that gradient equals ``gamma`` times the normalized
estimating function (the one whose ``gamma -> 0`` limit is the quasi-score);
the constant factor changes neither the root nor the influence function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .sde import DiffusionModel, Params, SamplePath

FAMILIES = ("density_power", "gamma")
_FAMILY_ALIASES = {
    "density_power": "density_power", "densitypower": "density_power", "dp": "density_power",
    "dpd": "density_power", "alpha": "density_power", "density-power": "density_power",
    "gamma": "gamma", "g": "gamma",
}
# exponent argument is clamped here for lam > 0; the weight is exactly 0 beyond
Z2_CLAMP = 1e8
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DivergenceSpec:
    family: str = "gamma"
    lam: float = 0.0

    def __post_init__(self):
        key = self.family.strip().lower().replace(" ", "_")
        if key not in _FAMILY_ALIASES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", _FAMILY_ALIASES[key])
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError("lam must be a finite number >= 0")

    @property
    def is_mle(self) -> bool:
        return self.lam == 0.0

    def with_lam(self, lam: float) -> "DivergenceSpec":
        return DivergenceSpec(self.family, lam)

    @property
    def label(self) -> str:
        return "mle" if self.is_mle else f"{self.family}({self.lam:g})"


@dataclass(frozen=True)
class TermContext:
    r: float
    a_prev: float
    z: float
    w_alpha: float
    w_gamma: float


@dataclass(frozen=True)
class EstimatingFunctionValue:
    psi_mu: float
    psi_sigma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_mu, self.psi_sigma])


def _pieces(model: DiffusionModel, mu: float, sigma: float, x_prev, x_curr, h: float):
    x_prev = np.asarray(x_prev, dtype=float)
    x_curr = np.asarray(x_curr, dtype=float)
    a = model.diffusion(x_prev, sigma)
    r = x_curr - x_prev - h * model.drift(x_prev, mu)
    z2 = r * r / (a * a * h)
    return r, a, z2


def _check_finite(values, what: str):
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise NumericalError(f"non-finite {what} at transition index {idx}")


def _log_scale(spec: DivergenceSpec, a, h: float):
    """Log of the sigma-dependent prefactor (``C`` for density power, ``K`` for gamma)."""
    lam = spec.lam
    log_var = _LOG_2PI + 2.0 * np.log(a) + math.log(h)
    if spec.family == "density_power":
        return -0.5 * lam * log_var
    return lam / (2.0 * (1.0 + lam)) * (math.log1p(lam) - log_var)


def terms(spec: DivergenceSpec, model: DiffusionModel, theta: Params, x_prev, x_curr,
          h: float) -> np.ndarray:
    """Vectorized per-transition terms ``q_i`` for aligned ``x_prev``/``x_curr`` arrays."""
    r, a, z2 = _pieces(model, theta.mu, theta.sigma, x_prev, x_curr, h)
    lam = spec.lam
    if lam == 0.0:
        q = 0.5 * (_LOG_2PI + 2.0 * np.log(a)) + 0.5 * z2
    else:
        z2 = np.minimum(z2, Z2_CLAMP)
        log_s = _log_scale(spec, a, h)
        w = np.exp(log_s - 0.5 * lam * z2)
        if spec.family == "density_power":
            q = -w / lam + np.exp(log_s) * (1.0 + lam) ** -1.5
        else:
            q = -w
    _check_finite(q, "divergence term")
    return q


def term_value(spec: DivergenceSpec, model: DiffusionModel, theta: Params, x_prev: float,
               x_curr: float, h: float) -> float:
    return float(terms(spec, model, theta, x_prev, x_curr, h))


def objective(spec: DivergenceSpec, model: DiffusionModel, theta: Params,
              path: SamplePath) -> float:
    """Sum of the per-transition terms over ``i = 1..n`` (exactly rounded sum)."""
    if path.n < 2:
        raise ValueError("objective needs at least two increments")
    x = path.values
    return math.fsum(terms(spec, model, theta, x[:-1], x[1:], path.h))


def psi_terms(spec: DivergenceSpec, model: DiffusionModel, theta: Params, x_prev, x_curr,
              h: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized gradients ``(d q / d mu, d q / d sigma)`` per transition."""
    mu, sigma = theta.mu, theta.sigma
    r, a, z2 = _pieces(model, mu, sigma, x_prev, x_curr, h)
    db = model.drift_dmu(np.asarray(x_prev, dtype=float), mu)
    da = model.diffusion_dsigma(np.asarray(x_prev, dtype=float), sigma)
    lam = spec.lam
    if lam == 0.0:
        p_mu = -r * db / (a * a)
        p_sigma = (1.0 - z2) * da / a
    else:
        z2 = np.minimum(z2, Z2_CLAMP)
        log_s = _log_scale(spec, a, h)
        w = np.exp(log_s - 0.5 * lam * z2)
        if spec.family == "density_power":
            p_mu = -w * r * db / (a * a)
            p_sigma = (w * (1.0 - z2) - lam * np.exp(log_s) * (1.0 + lam) ** -1.5) * da / a
        else:
            p_mu = -lam * w * r * db / (a * a)
            p_sigma = lam * w * (1.0 / (1.0 + lam) - z2) * da / a
    _check_finite(p_mu, "estimating function")
    _check_finite(p_sigma, "estimating function")
    return p_mu, p_sigma


def psi(spec: DivergenceSpec, model: DiffusionModel, theta: Params, x_prev: float,
        x_curr: float, h: float) -> EstimatingFunctionValue:
    p_mu, p_sigma = psi_terms(spec, model, theta, x_prev, x_curr, h)
    return EstimatingFunctionValue(float(p_mu), float(p_sigma))


def gradient(spec: DivergenceSpec, model: DiffusionModel, theta: Params,
             path: SamplePath) -> np.ndarray:
    """Gradient of :func:`objective`, i.e. the summed estimating functions."""
    x = path.values
    p_mu, p_sigma = psi_terms(spec, model, theta, x[:-1], x[1:], path.h)
    return np.array([math.fsum(p_mu), math.fsum(p_sigma)])


def term_context(spec: DivergenceSpec, model: DiffusionModel, theta: Params, x_prev: float,
                 x_curr: float, h: float) -> TermContext:
    """Residual, scale and both kernel weights for one transition.

    ``w_alpha`` uses ``spec.lam`` as alpha and ``w_gamma`` uses it as gamma,
    whichever family ``spec`` names.
    """
    r, a, z2 = _pieces(model, theta.mu, theta.sigma, x_prev, x_curr, h)
    r, a, z2 = float(r), float(a), float(z2)
    lam = spec.lam
    z2c = min(z2, Z2_CLAMP)
    w_alpha = math.exp(float(_log_scale(DivergenceSpec("density_power", lam), a, h)) - 0.5 * lam * z2c)
    w_gamma = math.exp(float(_log_scale(DivergenceSpec("gamma", lam), a, h)) - 0.5 * lam * z2c)
    return TermContext(r, a, r / (a * math.sqrt(h)), w_alpha, w_gamma)


def weighted_gaussian_moment(k: int, c: float) -> float:
    """``E[Z^k exp(-c Z^2)]`` for standard normal ``Z`` and ``k`` in 0..4."""
    if k not in (0, 1, 2, 3, 4):
        raise ValueError(f"unsupported moment order {k}; expected 0..4")
    if c < 0:
        raise ValueError("c must be >= 0")
    if k % 2:
        return 0.0
    s = 1.0 + 2.0 * c
    if k == 0:
        return s ** -0.5
    if k == 2:
        return s ** -1.5
    return 3.0 * s ** -2.5
