"""Monte Carlo bias/MSE study under additive or replacement outliers.

For every replication ``r`` and sample size ``n`` one clean path is simulated;
each contamination setting is applied to that same path with its own
independent outlier draws, and every estimator is fitted on every resulting
series. Seeds are derived from ``(master_seed, cell, r)`` by a stable hash,
so a report does not depend on how replications are scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .contamination import ContaminationSpec, contaminate
from .divergence import DivergenceSpec
from .errors import DegeneratePathError, NumericalError
from .estimator import FitOptions, fit
from .sde import Params, SimulationOptions, default_step, get_model, simulate_path

SCENARIOS = ("clean", "ao", "ro")
CSV_HEADER = ["family", "lambda", "n", "scenario", "sigma_z2", "bias_mu", "bias_sigma",
              "mse_mu", "mse_sigma", "reps_used", "failures"]


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "A"
    theta0: Params = Params(1.0, 1.0)
    scenario: str = "ao"
    epsilon: float = 0.05
    sigma_z2_list: tuple = (1.0, 1.5)
    n_list: tuple = (50, 100, 200, 500)
    estimators: tuple = (DivergenceSpec("gamma", 0.0),)
    reps: int = 2000
    master_seed: int = 20240501
    h_exponent: float = 0.55
    sim_opts: SimulationOptions = SimulationOptions()
    include_clean: bool = True
    fit_opts: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        scenario = self.scenario.lower()
        if scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        object.__setattr__(self, "scenario", scenario)
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.n_list or any(int(n) < 10 for n in self.n_list):
            raise ValueError("every n must be >= 10")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        get_model(self.model)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        for key in ("model", "scenario", "epsilon", "reps", "master_seed", "h_exponent",
                    "include_clean"):
            if key in d:
                kw[key] = d.pop(key)
        if "theta0" in d:
            t = d.pop("theta0")
            kw["theta0"] = Params(float(t["mu"]), float(t["sigma"]))
        if "sigma_z2_list" in d:
            kw["sigma_z2_list"] = tuple(float(v) for v in d.pop("sigma_z2_list"))
        if "n_list" in d:
            kw["n_list"] = tuple(int(v) for v in d.pop("n_list"))
        if "estimators" in d:
            kw["estimators"] = tuple(DivergenceSpec(e["family"], float(e["lambda"]))
                                     for e in d.pop("estimators"))
        if "sim" in d:
            kw["sim_opts"] = SimulationOptions(**d.pop("sim"))
        if "fit" in d:
            kw["fit_opts"] = FitOptions(**d.pop("fit"))
        d.pop("description", None)
        if d:
            raise ValueError(f"unknown config keys: {sorted(d)}")
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "theta0": {"mu": self.theta0.mu, "sigma": self.theta0.sigma},
            "scenario": self.scenario,
            "epsilon": self.epsilon,
            "sigma_z2_list": list(self.sigma_z2_list),
            "n_list": list(self.n_list),
            "estimators": [{"family": e.family, "lambda": e.lam} for e in self.estimators],
            "reps": self.reps,
            "master_seed": self.master_seed,
            "h_exponent": self.h_exponent,
            "sim": asdict(self.sim_opts),
            "include_clean": self.include_clean,
        }

    def series(self) -> list[tuple[str, float]]:
        """The observed-series settings fitted in each replication."""
        out = []
        if self.include_clean or self.scenario == "clean":
            out.append(("clean", 0.0))
        if self.scenario != "clean":
            out.extend((self.scenario, float(s)) for s in self.sigma_z2_list)
        return out


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ReportRow:
    family: str
    lam: float
    n: int
    scenario: str
    sigma_z2: float
    bias_mu: float
    bias_sigma: float
    mse_mu: float
    mse_sigma: float
    reps_used: int
    failures: int

    def sort_key(self):
        return (self.scenario, self.family, self.lam, self.n, self.sigma_z2)


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple

    def cell(self, family: str, lam: float, n: int, scenario: str,
             sigma_z2: float = 0.0) -> ReportRow:
        family = DivergenceSpec(family, lam).family
        for row in self.rows:
            if (row.family, row.lam, row.n, row.scenario, row.sigma_z2) == \
                    (family, lam, n, scenario, sigma_z2):
                return row
        raise KeyError((family, lam, n, scenario, sigma_z2))


def derive_seed(master_seed: int, *tokens) -> int:
    """Stable 64-bit seed from the master seed and a cell/replication id."""
    key = "|".join([str(int(master_seed))] + [repr(t) for t in tokens]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def _replicate(config: ExperimentConfig, n: int, r: int):
    """Fit every estimator on every series of one replication.

    Returns ``{(scenario, sigma_z2, estimator_index): (mu_hat, sigma_hat) | None}``.
    """
    model = get_model(config.model)
    h = default_step(n, config.h_exponent)
    path = simulate_path(model, config.theta0, n, h, config.sim_opts,
                         derive_seed(config.master_seed, "path", config.model, n, r))
    out = {}
    for scenario, sz2 in config.series():
        if scenario == "clean":
            observed = path
        else:
            seed = derive_seed(config.master_seed, "contaminate", config.model, scenario, n, sz2, r)
            observed = contaminate(path, ContaminationSpec(scenario, config.epsilon, sz2, seed))
        for k, spec in enumerate(config.estimators):
            try:
                res = fit(observed, model, spec, config.fit_opts)
            except (NumericalError, DegeneratePathError):
                out[(scenario, sz2, k)] = None
                continue
            ok = res.converged and not res.at_boundary
            out[(scenario, sz2, k)] = (res.theta_hat.mu, res.theta_hat.sigma) if ok else None
    return out


def _run_task(args):
    return _replicate(*args)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Run all replications; ``threads > 1`` uses worker processes."""
    tasks = [(config, int(n), r) for n in config.n_list for r in range(config.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    else:
        results = [_run_task(t) for t in tasks]

    mu0, sigma0 = config.theta0.mu, config.theta0.sigma
    rows = []
    for n in config.n_list:
        per_n = [res for (cfg, nn, r), res in zip(tasks, results) if nn == int(n)]
        for scenario, sz2 in config.series():
            for k, spec in enumerate(config.estimators):
                fits = [res[(scenario, sz2, k)] for res in per_n]
                good = [f for f in fits if f is not None]
                m = len(good)
                if m:
                    dmu = [f[0] - mu0 for f in good]
                    dsig = [f[1] - sigma0 for f in good]
                    stats = (math.fsum(dmu) / m, math.fsum(dsig) / m,
                             math.fsum(d * d for d in dmu) / m, math.fsum(d * d for d in dsig) / m)
                else:
                    stats = (math.nan,) * 4
                rows.append(ReportRow(spec.family, spec.lam, int(n), scenario, sz2, *stats,
                                      reps_used=m, failures=len(fits) - m))
    rows.sort(key=ReportRow.sort_key)
    return ExperimentReport(tuple(rows))


def _fmt(v: float, precision: int) -> str:
    return f"{v:.{precision}g}"


def report_to_csv(report: ExperimentReport, precision: int = 6) -> str:
    if not report.rows:
        raise ValueError("report has no rows")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in sorted(report.rows, key=ReportRow.sort_key):
        w.writerow([row.family, _fmt(row.lam, precision), row.n, row.scenario,
                    _fmt(row.sigma_z2, precision),
                    *(_fmt(v, precision) for v in (row.bias_mu, row.bias_sigma,
                                                   row.mse_mu, row.mse_sigma)),
                    row.reps_used, row.failures])
    return buf.getvalue()


def parse_report_csv(text: str) -> ExperimentReport:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    rows = []
    for d in reader:
        rows.append(ReportRow(d["family"], float(d["lambda"]), int(d["n"]), d["scenario"],
                              float(d["sigma_z2"]), float(d["bias_mu"]), float(d["bias_sigma"]),
                              float(d["mse_mu"]), float(d["mse_sigma"]), int(d["reps_used"]),
                              int(d["failures"])))
    return ExperimentReport(tuple(rows))


def write_report(report: ExperimentReport, config: ExperimentConfig, out_dir,
                 precision: int = 6) -> list[Path]:
    """One CSV per (model, scenario), named ``model<A|B>_<scenario>.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for scenario in sorted({row.scenario for row in report.rows}):
        sub = ExperimentReport(tuple(r for r in report.rows if r.scenario == scenario))
        dest = out_dir / f"model{config.model.upper()}_{scenario}.csv"
        dest.write_text(report_to_csv(sub, precision))
        written.append(dest)
    return written


def format_table(report: ExperimentReport, stat: str = "bias") -> str:
    """Plain-text table with one block per estimator, one row per ``n``.

    Columns are ``(mu, sigma)`` pairs for each observed-series setting, in the
    order clean, then increasing ``sigma_z2``.
    """
    if stat not in ("bias", "mse"):
        raise ValueError("stat must be 'bias' or 'mse'")
    settings = sorted({(r.scenario != "clean", r.scenario, r.sigma_z2) for r in report.rows})
    # MLE first, then one block per family with rows ordered by (lam, n)
    estimators = sorted({(r.lam > 0, r.family if r.lam > 0 else "", r.lam, r.family)
                         for r in report.rows})
    ns = sorted({r.n for r in report.rows})
    index = {(r.family, r.lam, r.n, r.scenario, r.sigma_z2): r for r in report.rows}
    head = ["n".rjust(5), "lam".rjust(5)]
    for _, scenario, sz2 in settings:
        tag = "clean" if scenario == "clean" else f"{scenario} sz2={sz2:g}"
        head.append(f"{tag:>23}")
    lines = [" ".join(head)]
    block = None
    for robust, group, lam, family in estimators:
        if (robust, group) != block:
            block = (robust, group)
            lines.append(f"-- {family if robust else 'MLE'}")
        for n in ns:
            cells = [f"{n:5d}", f"{lam:5.2f}"]
            for _, scenario, sz2 in settings:
                row = index.get((family, lam, n, scenario, sz2))
                if row is None:
                    cells.append(" " * 23)
                    continue
                a, b = (row.bias_mu, row.bias_sigma) if stat == "bias" else (row.mse_mu, row.mse_sigma)
                cells.append(f"{a:11.4f} {b:11.4f}")
            lines.append(" ".join(cells))
    return "\n".join(lines)
