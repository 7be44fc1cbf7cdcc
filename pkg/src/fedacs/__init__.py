"""Personalized federated learning with similarity-thresholded attention aggregation.

Hot numeric kernels run under numba when it is available; set
``FEDACS_NUMBA=0`` to force the pure-numpy implementations.
"""

from ._kernels import BACKEND
from .algorithms import (
    ALGORITHMS,
    AlgoConfig,
    FederatedState,
    fedacs_round,
    fedamp_round,
    fedavg_round,
    initial_state,
    local_round,
    local_update,
    run_rounds,
    sample_participants,
)
from .attention import (
    AttentionWeights,
    attention_aggregate,
    attention_matrix,
    quantile_threshold,
    regularizer,
    regularizer_grad,
    similarity_matrix,
)
from .config import ExperimentConfig, parse_config, parse_config_text
from .data import LabeledDataset, PartitionConfig, make_synthetic_clusters, partition
from .diagnostics import (
    finite_difference_grad,
    objective_grad_norm,
    personalized_objective,
    rate_fit,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DegenerateModelError,
    DivergenceError,
    FedACSError,
    FormatError,
    OracleError,
    PartitionError,
)
from .experiment import MetricsSeries, run_experiment
from .models import Batch, ModelSpec, init_params, loss_and_gradient
from .schedules import Schedule, make_schedule

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ALGORITHMS", "AlgoConfig", "FederatedState", "fedacs_round", "fedamp_round",
    "fedavg_round", "initial_state", "local_round", "local_update", "run_rounds",
    "sample_participants", "AttentionWeights", "attention_aggregate", "attention_matrix",
    "quantile_threshold", "regularizer", "regularizer_grad", "similarity_matrix",
    "ExperimentConfig", "parse_config", "parse_config_text", "LabeledDataset",
    "PartitionConfig", "make_synthetic_clusters", "partition", "finite_difference_grad",
    "objective_grad_norm", "personalized_objective", "rate_fit", "ConfigError",
    "ContractViolation", "DegenerateModelError", "DivergenceError", "FedACSError",
    "FormatError", "OracleError", "PartitionError", "MetricsSeries", "run_experiment", "Batch",
    "ModelSpec", "init_params", "loss_and_gradient", "Schedule", "make_schedule", "__version__",
]
