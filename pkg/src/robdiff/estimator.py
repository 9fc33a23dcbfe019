"""Minimum-divergence fitting of ``(mu, sigma)`` on a single observed path.

The search runs on ``(mu, log sigma)`` inside the parameter box. Each solve
is a bounded Nelder-Mead pass followed by a projected Newton polish that uses
the analytic gradient. Robust fits (``lam > 0``) are reached by continuation:
start at the quasi-likelihood fit and raise ``lam`` in small increments,
re-solving from the previous optimum each time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .divergence import DivergenceSpec, objective, psi_terms, terms
from .errors import DegeneratePathError, NumericalError
from .sde import DiffusionModel, Params, SamplePath

# multiplicative (mu, sigma) perturbations for the extra starting points
_START_PERTURBATIONS = ((1.0, 1.0), (1.5, 0.7), (0.6, 1.4), (2.0, 1.2), (0.8, 0.6))


@dataclass(frozen=True)
class FitOptions:
    bounds: tuple | None = None
    obj_tol: float = 1e-10
    grad_tol: float = 1e-7
    max_iters: int = 2000
    warm_start_step: float = 0.1
    multistart: int = 3

    def __post_init__(self):
        if not (self.obj_tol > 0 and self.grad_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.warm_start_step <= 1.0:
            raise ValueError("warm_start_step must lie in (0, 1]")
        if self.multistart < 1 or self.max_iters < 1:
            raise ValueError("multistart and max_iters must be >= 1")


@dataclass(frozen=True)
class FitResult:
    theta_hat: Params
    objective_value: float
    iterations: int
    converged: bool
    grad_norm: float
    at_boundary: bool
    history: tuple = field(default=(), repr=False, compare=False)


def quasi_mle_linear_drift(path: SamplePath, model: DiffusionModel) -> Params:
    """Closed-form quasi-likelihood estimate for the OU model.

    These are the exact stationary points of the ``lam = 0`` objective when
    ``b(x, mu) = -mu x`` and ``a(x, sigma) = sigma``.
    """
    if model.id != "A":
        raise ValueError("closed form needs model A (linear drift, constant diffusion)")
    x = path.values
    prev, dx = x[:-1], np.diff(x)
    sxx = math.fsum(prev * prev)
    if sxx == 0.0:
        raise DegeneratePathError("sum of squared lagged values is zero")
    h = path.h
    mu = -math.fsum(prev * dx) / (h * sxx)
    resid = dx + mu * h * prev
    sigma = math.sqrt(math.fsum(resid * resid) / (path.n * h))
    return Params(mu, sigma)


class _Problem:
    """Objective on ``u = (mu, log sigma)``, scaled by ``1/n``."""

    def __init__(self, path: SamplePath, model: DiffusionModel, spec: DivergenceSpec, bounds):
        x = path.values
        self.prev, self.curr, self.h = x[:-1], x[1:], path.h
        self.n = path.n
        self.model, self.spec = model, spec
        (mlo, mhi), (slo, shi) = bounds
        self.lo = np.array([mlo, math.log(slo)])
        self.hi = np.array([mhi, math.log(shi)])
        self.evals = 0

    def clip(self, u):
        return np.minimum(np.maximum(u, self.lo), self.hi)

    def value(self, u) -> float:
        self.evals += 1
        theta = Params(float(u[0]), math.exp(float(u[1])))
        try:
            q = terms(self.spec, self.model, theta, self.prev, self.curr, self.h)
        except NumericalError:
            return math.inf
        return float(np.sum(q)) / self.n

    def natural_grad(self, u) -> np.ndarray:
        theta = Params(float(u[0]), math.exp(float(u[1])))
        p_mu, p_sigma = psi_terms(self.spec, self.model, theta, self.prev, self.curr, self.h)
        return np.array([np.sum(p_mu), np.sum(p_sigma)]) / self.n

    def grad(self, u) -> np.ndarray:
        g = self.natural_grad(u)
        g[1] *= math.exp(float(u[1]))
        return g

    def hess(self, u) -> np.ndarray:
        steps = 1e-5 * np.maximum(1.0, np.abs(u))
        cols = []
        for j in range(2):
            e = np.zeros(2)
            e[j] = steps[j]
            cols.append((self.grad(u + e) - self.grad(u - e)) / (2.0 * steps[j]))
        hmat = np.column_stack(cols)
        return 0.5 * (hmat + hmat.T)

    def free_mask(self, u, g) -> np.ndarray:
        """Coordinates not pinned at a bound by an outward-pointing gradient."""
        span = self.hi - self.lo
        at_lo = u <= self.lo + 1e-12 * span
        at_hi = u >= self.hi - 1e-12 * span
        return ~((at_lo & (g > 0)) | (at_hi & (g < 0)))

    def projected_grad_norm(self, u) -> float:
        g = self.natural_grad(u)
        gu = g.copy()
        gu[1] *= math.exp(float(u[1]))
        return float(np.linalg.norm(g[self.free_mask(u, gu)]))

    def on_boundary(self, u) -> bool:
        span = self.hi - self.lo
        return bool(np.any(u <= self.lo + 1e-9 * span) or np.any(u >= self.hi - 1e-9 * span))


def _nelder_mead(prob: _Problem, u0, scale: float, opts: FitOptions):
    u0 = prob.clip(np.asarray(u0, dtype=float))
    simplex = np.array([u0, u0 + [scale * max(abs(u0[0]), 0.1), 0.0], u0 + [0.0, scale]])
    simplex = np.array([prob.clip(s) for s in simplex])
    # a simplex collapsed by clipping at a bound is reflected inward
    for j in (1, 2):
        if np.allclose(simplex[j], u0):
            d = np.zeros(2)
            d[j - 1] = scale * (max(abs(u0[0]), 0.1) if j == 1 else 1.0)
            simplex[j] = prob.clip(u0 - d)
    res = minimize(prob.value, u0, method="Nelder-Mead",
                   bounds=list(zip(prob.lo, prob.hi)),
                   options={"initial_simplex": simplex, "xatol": 1e-4,
                            "fatol": opts.obj_tol, "maxiter": opts.max_iters})
    return prob.clip(res.x), int(res.nit)


def _newton_polish(prob: _Problem, u, opts: FitOptions, max_steps: int = 100):
    """Projected damped Newton on ``u``; every accepted step lowers the objective."""
    u = prob.clip(np.asarray(u, dtype=float))
    f = prob.value(u)
    history = [f]
    steps = 0
    for steps in range(1, max_steps + 1):
        if prob.projected_grad_norm(u) <= opts.grad_tol:
            steps -= 1
            break
        g = prob.grad(u)
        free = prob.free_mask(u, g)
        direction = np.zeros(2)
        hmat = prob.hess(u)
        idx = np.flatnonzero(free)
        sub = hmat[np.ix_(idx, idx)]
        try:
            eig = np.linalg.eigvalsh(sub)
            if eig.min() > 1e-12 * max(1.0, abs(eig.max())):
                direction[idx] = -np.linalg.solve(sub, g[idx])
            else:
                direction[idx] = -g[idx]
        except np.linalg.LinAlgError:
            direction[idx] = -g[idx]
        slope = float(g @ direction)
        if slope >= 0:
            direction = np.where(free, -g, 0.0)
            slope = float(g @ direction)
        t = 1.0
        accepted = False
        while t > 1e-12:
            trial = prob.clip(u + t * direction)
            ft = prob.value(trial)
            if ft <= f + 1e-4 * t * slope and ft <= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        if np.array_equal(trial, u):
            break
        u, f = trial, ft
        history.append(f)
    return u, steps, history


def _solve(prob: _Problem, u0, scale: float, opts: FitOptions):
    u, nit = _nelder_mead(prob, u0, scale, opts)
    u, nsteps, history = _newton_polish(prob, u, opts)
    return u, nit + nsteps, history


def _qv_sigma_init(path: SamplePath, model: DiffusionModel, mu: float, bounds) -> float:
    """Solve ``sum r_i^2 = h sum a(x_{i-1}, sigma)^2`` for sigma by bisection."""
    x = path.values
    prev = x[:-1]
    r = np.diff(x) - path.h * model.drift(prev, mu)
    target = math.fsum(r * r)
    lo, hi = bounds[1]

    def gap(s):
        a = model.diffusion(prev, s)
        return path.h * math.fsum(a * a) - target

    if gap(lo) >= 0:
        return lo
    if gap(hi) <= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def initial_guess(path: SamplePath, model: DiffusionModel, bounds) -> Params:
    (mlo, mhi), (slo, shi) = bounds
    if model.id == "A":
        try:
            est = quasi_mle_linear_drift(path, model)
            return Params(min(max(est.mu, mlo), mhi), min(max(est.sigma, slo), shi))
        except DegeneratePathError:
            pass
    mu = 0.5 * (mlo + mhi)
    return Params(mu, _qv_sigma_init(path, model, mu, bounds))


def fit(path: SamplePath, model: DiffusionModel, spec: DivergenceSpec,
        opts: FitOptions = FitOptions()) -> FitResult:
    """Minimize the divergence objective over the parameter box."""
    if path.n < 3:
        raise ValueError("fit needs at least three increments")
    if math.fsum(np.diff(path.values) ** 2) == 0.0:
        raise DegeneratePathError("path has zero quadratic variation")
    bounds = opts.bounds or model.param_bounds
    init = initial_guess(path, model, bounds)

    base = _Problem(path, model, DivergenceSpec(spec.family, 0.0), bounds)
    n_steps = 0 if spec.lam == 0 else max(1, math.ceil(spec.lam / opts.warm_start_step - 1e-12))
    lam_chain = [spec.lam * k / n_steps for k in range(1, n_steps + 1)]

    best = None
    seen: list[np.ndarray] = []
    for fm, fs in _START_PERTURBATIONS[:opts.multistart]:
        u0 = base.clip(np.array([init.mu * fm, math.log(init.sigma * fs)]))
        u, iters, history = _solve(base, u0, 0.1, opts)
        if any(np.allclose(u, s, rtol=1e-5, atol=1e-8) for s in seen):
            continue
        seen.append(u)
        prob = base
        for lam in lam_chain:
            prob = _Problem(path, model, spec.with_lam(lam), bounds)
            u, it, history = _solve(prob, u, 0.02, opts)
            iters += it
        f = prob.value(u)
        if best is None or f < best[1]:
            best = (u, f, iters, prob, history)

    u, f, iters, prob, history = best
    gnorm = prob.projected_grad_norm(u)
    theta = Params(float(u[0]), math.exp(float(u[1])))
    return FitResult(
        theta_hat=theta,
        objective_value=objective(spec, model, theta, path),
        iterations=iters,
        converged=bool(math.isfinite(f) and gnorm <= opts.grad_tol),
        grad_norm=gnorm,
        at_boundary=prob.on_boundary(u),
        history=tuple(history),
    )
