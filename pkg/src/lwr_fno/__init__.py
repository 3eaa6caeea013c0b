"""Physics-informed Fourier Neural Operator surrogates for LWR traffic flow."""
from .estimator import FNORegressor
from .evaluation import EvalReport, evaluate_classes, fit_trendline, mae, oscillation_index
from .exceptions import (ConfigurationError, DomainError, FormatError,
                         TrainingDivergedError)
from .fno import FnoConfig, FnoParams
from .io import (RunConfig, load_checkpoint, load_config, load_dataset, save_checkpoint,
                 save_config, save_dataset)
from .godunov import DensityField, FundamentalDiagram, GridSpec, simulate
from .scenario import DatasetSpec, Scenario, build_dataset, make_scenario
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DatasetSpec", "DensityField", "DomainError", "EvalReport",
    "FNORegressor", "FnoConfig", "FnoParams", "FormatError", "FundamentalDiagram", "GridSpec",
    "RunConfig", "Scenario", "TrainConfig", "TrainingDivergedError", "build_dataset", "evaluate_classes",
    "fit_trendline", "load_checkpoint", "load_config", "load_dataset", "mae", "make_scenario",
    "oscillation_index", "save_checkpoint", "save_config", "save_dataset", "simulate",
]
