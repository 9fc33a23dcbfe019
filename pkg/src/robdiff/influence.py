"""Conditional influence functions ``IF(x_i | x_prev) = -D^{-1} psi(x_i, x_prev)``.

``D`` is the expected Jacobian of the estimating function at the true
parameter. By default the expectation is conditional on ``x_prev`` and taken
under the Euler Gaussian transition with Gauss-Hermite quadrature; a
long-path average over the stationary regime is also available.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .divergence import DivergenceSpec, psi_terms
from .errors import IllConditionedError
from .sde import DiffusionModel, Params, SimulationOptions, simulate_path

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class ConditionalQuadrature:
    nodes: int = 64

    def __post_init__(self):
        if self.nodes < 32:
            raise ValueError("quadrature needs at least 32 nodes")


@dataclass(frozen=True)
class StationarySimulation:
    path_length: int = 100_000
    seed: int = 0


@dataclass(frozen=True)
class InfluenceRequest:
    model: DiffusionModel
    theta0: Params
    spec: DivergenceSpec
    h: float
    x_prev: float
    grid: tuple
    d_method: ConditionalQuadrature | StationarySimulation = ConditionalQuadrature()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.size == 0 or not np.all(np.isfinite(grid)):
            raise ValueError("grid must be nonempty and finite")


@dataclass(frozen=True)
class InfluenceResult:
    d_matrix: np.ndarray
    condition_number: float
    x: np.ndarray
    if_mu: np.ndarray
    if_sigma: np.ndarray

    def to_csv(self, precision: int = 6) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "if_mu", "if_sigma"])
        fmt = f"{{:.{precision}g}}"
        for row in zip(self.x, self.if_mu, self.if_sigma):
            w.writerow([fmt.format(v) for v in row])
        return buf.getvalue()


def gauss_hermite_normal(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for expectations under ``N(0, 1)``."""
    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    return t, w / math.sqrt(2.0 * math.pi)


def conditional_expectation(fn, model: DiffusionModel, theta: Params, x_prev: float, h: float,
                            nodes: int = 128):
    """``E[fn(X)]`` for ``X ~ N(x_prev + h b(x_prev, mu), a(x_prev, sigma)^2 h)``.

    ``fn`` maps an array of ``x`` values to an array (or tuple of arrays).
    """
    t, w = gauss_hermite_normal(nodes)
    mean = x_prev + h * float(model.drift(x_prev, theta.mu))
    sd = float(model.diffusion(x_prev, theta.sigma)) * math.sqrt(h)
    vals = fn(mean + sd * t)
    if isinstance(vals, tuple):
        return tuple(math.fsum(w * v) for v in vals)
    return math.fsum(w * vals)


def _psi_jacobian(spec, model, theta: Params, x_prev, x_curr, h, rel_step=1e-6):
    """Per-point ``d psi_k / d theta_j`` by central differences; shape (2, 2, m)."""
    base = np.array([theta.mu, theta.sigma])
    jac = []
    for j in range(2):
        step = rel_step * max(abs(base[j]), 1e-3)
        up, dn = base.copy(), base.copy()
        up[j] += step
        dn[j] -= step
        pu = np.array(psi_terms(spec, model, Params(*up), x_prev, x_curr, h))
        pd = np.array(psi_terms(spec, model, Params(*dn), x_prev, x_curr, h))
        jac.append((pu - pd) / (2.0 * step))
    # jac[j][k] -> D[k, j]
    return np.stack(jac, axis=1)


def d_matrix(model: DiffusionModel, theta0: Params, spec: DivergenceSpec, h: float,
             x_prev: float, d_method=ConditionalQuadrature()) -> np.ndarray:
    """Expected Jacobian ``D = E[d psi / d theta]`` at ``theta0``."""
    if isinstance(d_method, ConditionalQuadrature):
        t, w = gauss_hermite_normal(d_method.nodes)
        mean = x_prev + h * float(model.drift(x_prev, theta0.mu))
        sd = float(model.diffusion(x_prev, theta0.sigma)) * math.sqrt(h)
        xs = mean + sd * t
        jac = _psi_jacobian(spec, model, theta0, np.full_like(xs, x_prev), xs, h)
        d = np.array([[math.fsum(w * jac[k, j]) for j in range(2)] for k in range(2)])
    elif isinstance(d_method, StationarySimulation):
        path = simulate_path(model, theta0, d_method.path_length, h,
                             SimulationOptions(), d_method.seed)
        x = path.values
        jac = _psi_jacobian(spec, model, theta0, x[:-1], x[1:], h)
        d = np.array([[math.fsum(jac[k, j]) / path.n for j in range(2)] for k in range(2)])
    else:
        raise TypeError(f"unknown D method {d_method!r}")
    cond = np.linalg.cond(d)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedError(f"D matrix condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    return d


def influence_curve(request: InfluenceRequest) -> InfluenceResult:
    d = d_matrix(request.model, request.theta0, request.spec, request.h, request.x_prev,
                 request.d_method)
    grid = np.asarray(request.grid, dtype=float)
    p_mu, p_sigma = psi_terms(request.spec, request.model, request.theta0,
                              np.full_like(grid, request.x_prev), grid, request.h)
    curves = -np.linalg.solve(d, np.vstack([p_mu, p_sigma]))
    return InfluenceResult(d, float(np.linalg.cond(d)), grid, curves[0], curves[1])


def parse_grid(text: str) -> np.ndarray:
    """Parse ``lo:hi:count`` into an evenly spaced grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like lo:hi:count, got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError("grid count must be >= 1")
    return np.linspace(lo, hi, count)
