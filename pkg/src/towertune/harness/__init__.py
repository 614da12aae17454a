"""User-facing surface: evaluation metrics, checkpoint persistence, run
configuration, experiment orchestration, and the command-line interface."""

from .checkpoint import Checkpoint, check_checkpoint_shape, load_checkpoint, save_checkpoint
from .checks import gradient_check, oracle_equivalence_check
from .config import (
    ARMS,
    RunConfig,
    arm_stages,
    config_digest,
    dataset_spec,
    format_config,
    load_config_file,
    loss_config,
    make_run_config,
    parse_config_text,
    recovery_schedule,
    resolved_seeds,
    schedule_config,
)
from .experiments import (
    CSV_HEADER,
    ArmOutcome,
    ColdstartResult,
    EpochMetrics,
    MarginSweepResult,
    PreparedRun,
    ScalingResult,
    execute_arm,
    experiment_arms,
    experiment_coldstart,
    experiment_margin_sweep,
    experiment_osr_scaling,
    prepare_run,
    read_metrics_csv,
    run_experiment,
    write_coldstart_csv,
    write_margin_csv,
    write_metrics_csv,
    write_scaling_csv,
)
from .metrics import SimilarityStats, eval_recall_at_k, fn_similarity_stats, similarity_stats_from_block

__all__ = [
    "ARMS",
    "ArmOutcome",
    "CSV_HEADER",
    "Checkpoint",
    "ColdstartResult",
    "EpochMetrics",
    "MarginSweepResult",
    "PreparedRun",
    "RunConfig",
    "ScalingResult",
    "SimilarityStats",
    "arm_stages",
    "check_checkpoint_shape",
    "config_digest",
    "dataset_spec",
    "eval_recall_at_k",
    "execute_arm",
    "experiment_arms",
    "experiment_coldstart",
    "experiment_margin_sweep",
    "experiment_osr_scaling",
    "fn_similarity_stats",
    "format_config",
    "gradient_check",
    "load_checkpoint",
    "load_config_file",
    "loss_config",
    "make_run_config",
    "oracle_equivalence_check",
    "parse_config_text",
    "prepare_run",
    "read_metrics_csv",
    "recovery_schedule",
    "resolved_seeds",
    "run_experiment",
    "save_checkpoint",
    "schedule_config",
    "similarity_stats_from_block",
    "write_coldstart_csv",
    "write_margin_csv",
    "write_metrics_csv",
    "write_scaling_csv",
]
