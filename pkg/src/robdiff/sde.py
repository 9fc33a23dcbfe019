"""Parametric scalar diffusions and Euler-Maruyama path simulation.

A model is the pair of coefficient functions in

    dX_t = b(X_t, mu) dt + a(X_t, sigma) dw_t

together with their parameter derivatives, which the estimating functions
need. Two models are built in:

* model A, the Ornstein-Uhlenbeck process ``b = -mu x``, ``a = sigma``;
* model B, ``b = -mu x``, ``a = 1 + sigma / (1 + x^2)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalError

DEFAULT_BOUNDS = ((0.01, 10.0), (0.01, 10.0))


@dataclass(frozen=True)
class Params:
    mu: float
    sigma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma], dtype=float)


@dataclass(frozen=True)
class DiffusionModel:
    """Drift/diffusion pair with analytic parameter derivatives.

    All four callables take ``(x, param)`` and must broadcast over numpy
    arrays in ``x``.
    """

    id: str
    drift: Callable
    diffusion: Callable
    drift_dmu: Callable
    diffusion_dsigma: Callable
    param_bounds: tuple = DEFAULT_BOUNDS


def _ou_diffusion(x, sigma):
    return sigma + 0.0 * x


def _ou_diffusion_dsigma(x, sigma):
    return 1.0 + 0.0 * x


def _linear_drift(x, mu):
    return -mu * x


def _linear_drift_dmu(x, mu):
    return -1.0 * x


def _b_diffusion(x, sigma):
    return 1.0 + sigma / (1.0 + x * x)


def _b_diffusion_dsigma(x, sigma):
    return 1.0 / (1.0 + x * x)


def model_a(bounds=DEFAULT_BOUNDS) -> DiffusionModel:
    """Ornstein-Uhlenbeck model: ``b(x, mu) = -mu x``, ``a(x, sigma) = sigma``."""
    return DiffusionModel("A", _linear_drift, _ou_diffusion, _linear_drift_dmu,
                          _ou_diffusion_dsigma, tuple(map(tuple, bounds)))


def model_b(bounds=DEFAULT_BOUNDS) -> DiffusionModel:
    """State-dependent noise: ``b(x, mu) = -mu x``, ``a(x, sigma) = 1 + sigma/(1+x^2)``."""
    return DiffusionModel("B", _linear_drift, _b_diffusion, _linear_drift_dmu,
                          _b_diffusion_dsigma, tuple(map(tuple, bounds)))


def get_model(name: str, bounds=DEFAULT_BOUNDS) -> DiffusionModel:
    key = name.strip().upper()
    if key in ("A", "MODELA", "MODEL_A"):
        return model_a(bounds)
    if key in ("B", "MODELB", "MODEL_B"):
        return model_b(bounds)
    raise ValueError(f"unknown model {name!r}; expected 'A' or 'B'")


def default_step(n: int, exponent: float = 0.55) -> float:
    """Observation step ``h_n = n ** -exponent``."""
    return float(n) ** (-exponent)


@dataclass(frozen=True)
class SamplePath:
    n: int
    h: float
    values: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.n + 1:
            raise ValueError(f"expected {self.n + 1} values, got shape {values.shape}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.n + 1)

    def with_values(self, values, seed: int | None = None) -> "SamplePath":
        return SamplePath(self.n, self.h, values, self.seed if seed is None else seed)


@dataclass(frozen=True)
class SimulationOptions:
    substeps: int = 10
    burn_in: int = 1000
    x0: float = 0.0
    stationary_ou: bool = False

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def simulate_path(model: DiffusionModel, theta: Params, n: int, h: float,
                  opts: SimulationOptions = SimulationOptions(),
                  seed: int = 0) -> SamplePath:
    """Simulate ``n`` increments observed every ``h`` time units.

    The integrator takes ``opts.substeps`` Euler-Maruyama steps per
    observation interval and discards ``opts.burn_in`` internal steps before
    the first recorded value. The output is a deterministic function of the
    arguments.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not h > 0:
        raise ValueError("h must be positive")
    if theta.sigma < 0:
        raise ValueError("sigma must be >= 0")

    rng = make_rng(seed)
    if opts.stationary_ou:
        if model.id != "A" or theta.mu <= 0:
            raise ValueError("stationary OU start needs model A with mu > 0")
        x = float(rng.normal(0.0, theta.sigma / math.sqrt(2.0 * theta.mu)))
    else:
        x = float(opts.x0)

    m = opts.substeps
    dt = h / m
    sqdt = math.sqrt(dt)
    total = opts.burn_in + n * m
    noise = rng.standard_normal(total).tolist()
    drift, diffusion = model.drift, model.diffusion
    mu, sigma = theta.mu, theta.sigma

    out = [0.0] * (n + 1)
    k = 0
    for _ in range(opts.burn_in):
        x = x + float(drift(x, mu)) * dt + float(diffusion(x, sigma)) * sqdt * noise[k]
        k += 1
    if not math.isfinite(x):
        raise NumericalError(f"non-finite state during burn-in (step {k})")
    out[0] = x
    for i in range(1, n + 1):
        for _ in range(m):
            x = x + float(drift(x, mu)) * dt + float(diffusion(x, sigma)) * sqdt * noise[k]
            k += 1
        if not math.isfinite(x):
            raise NumericalError(f"non-finite state at observation {i} (internal step {k})")
        out[i] = x
    return SamplePath(n, h, np.array(out), seed)


def write_path_csv(path: SamplePath, dest=None, precision: int = 17) -> str:
    """Write ``index,time,value`` rows; returns the text and optionally saves it."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "time", "value"])
    fmt = f"{{:.{precision}g}}"
    for i, (t, v) in enumerate(zip(path.times, path.values)):
        w.writerow([i, fmt.format(t), fmt.format(v)])
    text = buf.getvalue()
    if dest is not None:
        Path(dest).write_text(text)
    return text


def read_path_csv(source, h: float | None = None, seed: int = 0) -> SamplePath:
    """Read a path written by :func:`write_path_csv`.

    ``h`` defaults to the spacing of the ``time`` column.
    """
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"index", "time", "value"}:
        raise ValueError("expected CSV with header index,time,value")
    values = np.array([float(r["value"]) for r in rows])
    times = np.array([float(r["time"]) for r in rows])
    if h is None:
        if len(times) < 2:
            raise ValueError("cannot infer h from a single row")
        h = float(times[1] - times[0])
    return SamplePath(len(values) - 1, h, values, seed)
