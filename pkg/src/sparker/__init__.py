"""Sparse competing Gaussian-kernel ensembles for statistical anomaly
detection: model, annealed training, bootstrap-calibrated testing, toy
benchmarks, comparison baselines, and interpretability tooling."""

from .benchmarks import (
    BenchmarkSpec,
    benchmark_by_name,
    generate,
    load_feature_file,
    save_feature_file,
)
from .errors import (
    ConfigError,
    DataError,
    ProvenanceMismatchError,
    SparkerError,
    TrainingDivergedError,
)
from .estimator import SparkerDetector
from .kernels import (
    ComponentActivation,
    GradientBundle,
    SparkerModel,
    anomaly_score,
    component_activations,
    evaluate_model,
    gaussian_kernel,
    model_gradients,
    softmax_weights,
    sphere_of_influence_radius,
)
from .losses import loss_gradients, np_loss, surrogate_loss, test_statistic
from .pipeline import (
    CalibrationStore,
    PipelineConfig,
    TestReport,
    calibrate,
    combine_pvalues,
    detect,
    empirical_pvalue,
    make_toy,
    power_at_fpr,
)
from .points import PointSet, data_set, reference_set
from .training import (
    AnnealingSchedule,
    TrainConfig,
    TrainOutput,
    init_model,
    train,
    width_at_step,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealingSchedule",
    "BenchmarkSpec",
    "CalibrationStore",
    "ComponentActivation",
    "ConfigError",
    "DataError",
    "GradientBundle",
    "PipelineConfig",
    "PointSet",
    "ProvenanceMismatchError",
    "SparkerDetector",
    "SparkerError",
    "SparkerModel",
    "TestReport",
    "TrainConfig",
    "TrainOutput",
    "TrainingDivergedError",
    "anomaly_score",
    "benchmark_by_name",
    "calibrate",
    "combine_pvalues",
    "component_activations",
    "data_set",
    "detect",
    "empirical_pvalue",
    "evaluate_model",
    "gaussian_kernel",
    "generate",
    "init_model",
    "load_feature_file",
    "loss_gradients",
    "make_toy",
    "model_gradients",
    "np_loss",
    "power_at_fpr",
    "reference_set",
    "save_feature_file",
    "softmax_weights",
    "sphere_of_influence_radius",
    "surrogate_loss",
    "test_statistic",
    "train",
    "width_at_step",
]
