"""towertune: desk-scale two-tower contrastive fine-tuning with
optimizer-statistics recovery, verified against brute-force oracles."""

from .datagen import DatasetSpec, PairedDataset, generate, load_dataset, save_dataset, split
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataFormatError,
    EstimatorStateError,
    NormalizationError,
    NumericError,
    SchemaError,
    TowertuneError,
    TrainingError,
)
from .estimators import (
    ContrastiveFineTuner,
    ContrastivePretrainer,
    PairEncoder,
    StatisticsRecovery,
)
from .losses import (
    LossConfig,
    composed_loss_given_u,
    loss_scalar_full,
    mbcl_loss,
    phi_log_objective,
    phi_values,
    surrogate,
)
from .model import (
    TwoTowerModel,
    backward,
    encode_pairs,
    finite_diff_grad,
    flatten,
    forward,
    init_model,
    pretrain_toy,
    similarity,
    unflatten,
)
from .optim import (
    EstimatorState,
    FinetuneResult,
    MomentState,
    OsrResult,
    ScheduleConfig,
    TheoremQuantities,
    adamw_step,
    epoch_batches,
    finetune_run,
    gamma_at,
    init_estimator_state,
    init_moment_state,
    lr_at,
    mbcl_finetune_run,
    momentum_step,
    osr_run,
    second_moment_step,
    sogclr_gradient,
    theorem_quantities,
    update_u,
)
from .oracle import OracleReport, estimation_errors, exact_loss_and_grad, phi_full

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "ContrastiveFineTuner",
    "ContrastivePretrainer",
    "DataFormatError",
    "DatasetSpec",
    "EstimatorState",
    "EstimatorStateError",
    "FinetuneResult",
    "LossConfig",
    "MomentState",
    "NormalizationError",
    "NumericError",
    "OracleReport",
    "OsrResult",
    "PairEncoder",
    "PairedDataset",
    "SchemaError",
    "ScheduleConfig",
    "StatisticsRecovery",
    "TheoremQuantities",
    "TowertuneError",
    "TrainingError",
    "TwoTowerModel",
    "adamw_step",
    "backward",
    "composed_loss_given_u",
    "encode_pairs",
    "epoch_batches",
    "estimation_errors",
    "exact_loss_and_grad",
    "finetune_run",
    "finite_diff_grad",
    "flatten",
    "forward",
    "gamma_at",
    "generate",
    "init_estimator_state",
    "init_model",
    "init_moment_state",
    "load_dataset",
    "loss_scalar_full",
    "lr_at",
    "mbcl_finetune_run",
    "mbcl_loss",
    "momentum_step",
    "osr_run",
    "phi_full",
    "phi_log_objective",
    "phi_values",
    "pretrain_toy",
    "save_dataset",
    "second_moment_step",
    "similarity",
    "sogclr_gradient",
    "split",
    "surrogate",
    "theorem_quantities",
    "unflatten",
    "update_u",
]
