"""Robust divergence-based estimation for discretely observed scalar diffusions."""

from .asymptotics import AsympCov, StationaryMoments, s_matrix, theorem1_cov
from .contamination import ContaminationSpec, contaminate
from .divergence import (DivergenceSpec, EstimatingFunctionValue, objective, psi, term_value,
                         weighted_gaussian_moment)
from .errors import DegeneratePathError, IllConditionedError, NumericalError
from .estimator import FitOptions, FitResult, fit, quasi_mle_linear_drift
from .experiment import ExperimentConfig, ExperimentReport, report_to_csv, run_experiment
from .influence import InfluenceRequest, InfluenceResult, d_matrix, influence_curve
from .sde import (DiffusionModel, Params, SamplePath, SimulationOptions, default_step, model_a,
                  model_b, simulate_path)

__version__ = "0.1.0"
