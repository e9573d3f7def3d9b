"""Recursive multi-fidelity co-kriging.

Chains Gaussian process levels so each fidelity corrects a scaled version
of the one below it.  Fitting, prediction and fast cross-validation all run
level by level with closed-form conditioning; a joint single-covariance
formulation is included as a reference implementation.
"""

from .archive import load_model, save_model
from .basis import BasisSpec
from .benchmark import BenchmarkResult, run_benchmark
from .crossval import CVReport, CVRequest, brute_force_cv, fast_cv, loo_rmse
from .dataio import RunConfig, ingest_level_csv
from .design import DesignRequest, base_design, nest
from .errors import (
    DataFormatError,
    DegeneratePosteriorError,
    DesignError,
    IllConditionedError,
    InsufficientDataError,
    InvalidHyperparameterError,
    MetricError,
    MFCokrigError,
    NestingError,
    OptimizationError,
    ShapeError,
    SingularSystemError,
)
from .gpcore import FittedLevel, LevelData, PriorSpec, fit_level, optimize_theta
from .joint import JointModel, JointParams, build_joint, joint_predict, timed_fit_predict
from .kernels import KernelSpec
from .metrics import EvalSet, maxae, q2, rimse, rmse
from .model import (
    MultiFidelityModel,
    Prediction,
    fit,
    predict_batch,
    predict_simple,
    predict_universal,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "BenchmarkResult",
    "CVReport",
    "CVRequest",
    "DataFormatError",
    "DegeneratePosteriorError",
    "DesignError",
    "DesignRequest",
    "EvalSet",
    "FittedLevel",
    "IllConditionedError",
    "InsufficientDataError",
    "InvalidHyperparameterError",
    "JointModel",
    "JointParams",
    "KernelSpec",
    "LevelData",
    "MFCokrigError",
    "MetricError",
    "MultiFidelityModel",
    "NestingError",
    "OptimizationError",
    "Prediction",
    "PriorSpec",
    "RunConfig",
    "ShapeError",
    "SingularSystemError",
    "base_design",
    "brute_force_cv",
    "build_joint",
    "fast_cv",
    "fit",
    "fit_level",
    "ingest_level_csv",
    "joint_predict",
    "load_model",
    "loo_rmse",
    "maxae",
    "nest",
    "optimize_theta",
    "predict_batch",
    "predict_simple",
    "predict_universal",
    "q2",
    "rimse",
    "rmse",
    "run_benchmark",
    "save_model",
    "timed_fit_predict",
]
