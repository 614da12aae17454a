"""Experiment orchestration: prepared runs, per-arm execution, and the three
sweep drivers (cold start, margin, recovery scaling).

Every run follows the same pipeline: build or load the corpus, split it,
pretrain a reference starting point on the plain minibatch objective, then run
the arm's stages (optional statistics recovery, optional fine-tuning) while
recording one metrics row per epoch. Comparisons between arms share the
prepared corpus and starting point so the only difference is the arm itself.

Seed plumbing (from the resolved master seed): the data seed generates the
corpus and, plus one, the train/test split; the model seed initializes the
towers and, plus one, drives pretraining; the train seed drives recovery and,
plus one, fine-tuning.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .. import __version__
from ..datagen import PairedDataset, generate, load_dataset, split
from ..errors import ConfigurationError
from ..model import TwoTowerModel, flatten, init_model, pretrain_toy, unflatten
from ..optim import (
    EstimatorState,
    MomentState,
    ScheduleConfig,
    finetune_run,
    init_estimator_state,
    init_moment_state,
    mbcl_finetune_run,
    osr_run,
    theorem_quantities,
)
from ..oracle import exact_loss_and_grad
from .checkpoint import Checkpoint, check_checkpoint_shape, load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    arm_stages,
    config_digest,
    dataset_spec,
    loss_config,
    recovery_schedule,
    resolved_seeds,
    schedule_config,
)
from .metrics import eval_recall_at_k, fn_similarity_stats

CSV_HEADER = "epoch,loss,r1_i2t,r1_t2i,u_err_x,u_err_z,m_err,fn_mean,fn_std,tp_mean,tn_mean,wall_s"

DEFAULT_MARGINS = (0.01, 0.05, 0.10, 0.20, 0.40)
DEFAULT_SCALING_EPOCHS = (1, 2, 4, 8, 16)

_SEED_MOD = 2**64
_NAN = float("nan")


@dataclass(frozen=True)
class EpochMetrics:
    """One metrics row. Estimation errors are NaN when no oracle comparison
    was requested (or is meaningful, as in the minibatch arm); the loss is NaN
    on the epoch-0 baseline row and throughout recovery-only runs."""

    epoch: int
    loss: float
    r1_i2t: float
    r1_t2i: float
    u_err_x: float
    u_err_z: float
    m_err: float
    fn_mean: float
    fn_std: float
    tp_mean: float
    tn_mean: float
    wall_s: float


def format_metrics_row(rec: EpochMetrics) -> str:
    parts = [str(rec.epoch)]
    for name in CSV_HEADER.split(",")[1:]:
        parts.append(format(getattr(rec, name), ".17g"))
    return ",".join(parts)


def write_metrics_csv(path, records) -> None:
    """Write the metrics table. Floats carry 17 significant digits, so two
    runs agreeing here agree bitwise."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(format_metrics_row(rec) + "\n")


def read_metrics_csv(path) -> list[EpochMetrics]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigurationError(
            f"{path} does not start with the metrics header"
        )
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 12:
            raise ConfigurationError(f"metrics row has {len(cells)} cells: {line!r}")
        records.append(EpochMetrics(int(cells[0]), *map(float, cells[1:])))
    return records


@dataclass
class PreparedRun:
    """Everything shared between arms under one configuration and master
    seed: the split corpus and the pretrained starting point."""

    config: RunConfig
    train: PairedDataset
    test: PairedDataset
    model0: TwoTowerModel


def prepare_run(cfg: RunConfig, skip_pretrain: bool = False) -> PreparedRun:
    """Build or load the corpus, split it, and pretrain the starting point.

    Args:
        skip_pretrain: leave the towers at initialization (used when the
            starting point will come from a checkpoint instead).
    """
    data_seed, model_seed, _ = resolved_seeds(cfg)
    if cfg.dataset_path is not None:
        dataset = load_dataset(cfg.dataset_path)
        got = (dataset.n, dataset.spec.d_img, dataset.spec.d_txt, dataset.spec.k_concepts)
        want = (cfg.n, cfg.d_img, cfg.d_txt, cfg.k_concepts)
        if got != want:
            raise ConfigurationError(
                f"dataset at {cfg.dataset_path} has (n, d_img, d_txt, k) = "
                f"{got}, config says {want}"
            )
    else:
        dataset = generate(dataset_spec(cfg))
    train, test = split(dataset, cfg.test_fraction, seed=(data_seed + 1) % _SEED_MOD)

    model = init_model(
        d_img=cfg.d_img, d_txt=cfg.d_txt, hidden=cfg.hidden,
        d_embed=cfg.d_embed, tau=cfg.tau, seed=model_seed,
    )
    if not skip_pretrain:
        model = pretrain_toy(
            model, train.images, train.texts,
            epochs=cfg.pretrain_epochs, batch_size=cfg.pretrain_batch,
            lr=cfg.pretrain_lr, seed=(model_seed + 1) % _SEED_MOD,
        )
    return PreparedRun(config=cfg, train=train, test=test, model0=model)


@dataclass
class ArmOutcome:
    """Result of executing one arm on a prepared run."""

    config: RunConfig
    variant: str
    margin: float
    records: list
    model: TwoTowerModel
    moments: MomentState
    estimators: EstimatorState
    baseline_r1: tuple
    hinge_active_min: float | None = None
    hinge_active_mean: float | None = None
    hinge_saturated: bool | None = None
    omega_unchanged: bool | None = None


def _clock(cfg: RunConfig):
    return time.perf_counter if cfg.record_timing else (lambda: 0.0)


def _eval_row(prep: PreparedRun, model, epoch, loss, errs, wall) -> EpochMetrics:
    r1_i2t, r1_t2i = eval_recall_at_k(model, prep.test, k=1)
    stats = fn_similarity_stats(model, prep.test, top_k=prep.config.top_k)
    return EpochMetrics(
        epoch=epoch, loss=loss, r1_i2t=r1_i2t, r1_t2i=r1_t2i,
        u_err_x=errs[0], u_err_z=errs[1], m_err=errs[2],
        fn_mean=stats.fn_mean, fn_std=stats.fn_std,
        tp_mean=stats.tp_mean, tn_mean=stats.tn_mean,
        wall_s=wall,
    )


def _errors_against(prep, lcfg, model, est, ms):
    """Estimation errors against the exact oracle at the given weights.

    One call costs two nested passes over the train corpus; keep it behind
    ``oracle_metrics``.
    """
    report = exact_loss_and_grad(model, prep.train.images, prep.train.texts, lcfg)
    tq = theorem_quantities(est, ms, report.phi1, report.phi2, report.grad)
    return (tq.u_err_x, tq.u_err_z, tq.m_err)


def execute_arm(
    prep: PreparedRun,
    margin: float | None = None,
    init_state: tuple | None = None,
) -> ArmOutcome:
    """Run the configured arm's stages on a prepared corpus.

    Args:
        margin: hinge margin override (the sweep driver varies it).
        init_state: optional (estimators, moments) recovered earlier, e.g.
            from a checkpoint; skips the in-process recovery stage. Ignored by
            the cold arms, whose definition is starting from zero statistics.

    The epoch-0 record is the starting-point baseline: held-out recalls and
    similarity statistics at the initial weights, loss NaN. Recovery-only runs
    emit one record per recovery epoch tracking estimation error against the
    frozen-point oracle instead.
    """
    cfg = prep.config
    stages = arm_stages(cfg)
    lcfg = loss_config(cfg, margin)
    _, _, train_seed = resolved_seeds(cfg)
    clock = _clock(cfg)
    n = prep.train.n
    dim = flatten(prep.model0).size

    est = init_estimator_state(n)
    ms = init_moment_state(
        dim, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay
    )

    if cfg.arm == "osr_only":
        return _execute_osr_only(prep, lcfg, train_seed, clock)

    records = []
    if stages["osr"] and cfg.osr_epochs > 0:
        if init_state is not None:
            est, ms = init_state
        else:
            osr = osr_run(
                prep.model0, prep.train.images, prep.train.texts, lcfg,
                epochs=cfg.osr_epochs, batch_size=cfg.batch_size,
                seed=train_seed, gamma_cfg=recovery_schedule(cfg),
                beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay,
            )
            est, ms = osr.estimators, osr.moments

    want_oracle = cfg.oracle_metrics and lcfg.variant != "mbcl"
    t0 = clock()
    errs = (
        _errors_against(prep, lcfg, prep.model0, est, ms)
        if want_oracle else (_NAN, _NAN, _NAN)
    )
    records.append(_eval_row(prep, prep.model0, 0, _NAN, errs, clock() - t0))
    baseline = (records[0].r1_i2t, records[0].r1_t2i)

    epoch_clock = [clock()]

    def hook(epoch, model, mean_loss, hook_est, hook_ms):
        now = clock()
        errs = (
            _errors_against(prep, lcfg, model, hook_est, hook_ms)
            if want_oracle and hook_est is not None else (_NAN, _NAN, _NAN)
        )
        records.append(
            _eval_row(prep, model, epoch + 1, mean_loss, errs, now - epoch_clock[0])
        )
        epoch_clock[0] = clock()

    finetune_seed = (train_seed + 1) % _SEED_MOD
    if lcfg.variant == "mbcl":
        result = mbcl_finetune_run(
            prep.model0, prep.train.images, prep.train.texts,
            schedules=schedule_config(cfg), epochs=cfg.finetune_epochs,
            batch_size=cfg.batch_size, seed=finetune_seed,
            ms_init=ms, epoch_hook=hook,
        )
        final_est = est
    else:
        result = finetune_run(
            prep.model0, prep.train.images, prep.train.texts, lcfg,
            schedules=schedule_config(cfg), epochs=cfg.finetune_epochs,
            batch_size=cfg.batch_size, seed=finetune_seed,
            est_init=est, ms_init=ms, epoch_hook=hook,
        )
        final_est = result.estimators

    saturated = None
    if lcfg.variant == "hgcl" and result.hinge_active_min is not None:
        saturated = result.hinge_active_min >= 1.0
    return ArmOutcome(
        config=cfg, variant=lcfg.variant, margin=lcfg.margin,
        records=records, model=result.model, moments=result.moments,
        estimators=final_est, baseline_r1=baseline,
        hinge_active_min=result.hinge_active_min,
        hinge_active_mean=result.hinge_active_mean,
        hinge_saturated=saturated,
    )


def _execute_osr_only(prep, lcfg, train_seed, clock):
    """Recovery-only arm: frozen weights, per-epoch estimation-error curve.

    The decay curve is the arm's output, so the oracle comparison always runs
    here; the frozen point means one oracle report serves every epoch.
    """
    cfg = prep.config
    omega_before = flatten(prep.model0).copy()
    report = exact_loss_and_grad(
        prep.model0, prep.train.images, prep.train.texts, lcfg
    )

    zero_est = init_estimator_state(prep.train.n)
    zero_ms = init_moment_state(
        omega_before.size, beta1=cfg.beta1, beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
    )
    t0 = clock()

    def zero_errs(est, ms):
        tq = theorem_quantities(est, ms, report.phi1, report.phi2, report.grad)
        return (tq.u_err_x, tq.u_err_z, tq.m_err)

    records = [
        _eval_row(prep, prep.model0, 0, _NAN, zero_errs(zero_est, zero_ms), clock() - t0)
    ]
    baseline = (records[0].r1_i2t, records[0].r1_t2i)
    epoch_clock = [clock()]

    def callback(epoch, est, ms):
        now = clock()
        records.append(
            _eval_row(prep, prep.model0, epoch + 1, _NAN, zero_errs(est, ms),
                      now - epoch_clock[0])
        )
        epoch_clock[0] = clock()

    osr = osr_run(
        prep.model0, prep.train.images, prep.train.texts, lcfg,
        epochs=cfg.osr_epochs, batch_size=cfg.batch_size, seed=train_seed,
        gamma_cfg=recovery_schedule(cfg), beta1=cfg.beta1, beta2=cfg.beta2,
        weight_decay=cfg.weight_decay, epoch_callback=callback,
    )
    unchanged = bool(np.array_equal(flatten(prep.model0), omega_before))
    return ArmOutcome(
        config=cfg, variant=lcfg.variant, margin=lcfg.margin,
        records=records, model=prep.model0, moments=osr.moments,
        estimators=osr.estimators, baseline_r1=baseline,
        omega_unchanged=unchanged,
    )


def _summary(cfg: RunConfig, outcome: ArmOutcome) -> dict:
    final = outcome.records[-1]
    optimized = [r for r in outcome.records[1:] if not math.isnan(r.loss)]
    assertions = {
        "recalls_in_range": all(
            0.0 <= r.r1_i2t <= 1.0 and 0.0 <= r.r1_t2i <= 1.0
            for r in outcome.records
        ),
        "losses_finite": all(math.isfinite(r.loss) for r in optimized),
    }
    if outcome.omega_unchanged is not None:
        assertions["omega_unchanged"] = outcome.omega_unchanged
    data_seed, model_seed, train_seed = resolved_seeds(cfg)
    return {
        "arm": cfg.arm,
        "variant": outcome.variant,
        "margin": outcome.margin,
        "config": asdict(cfg),
        "seeds": {"data": data_seed, "model": model_seed, "train": train_seed},
        "baseline": {
            "r1_i2t": outcome.baseline_r1[0], "r1_t2i": outcome.baseline_r1[1],
        },
        "final": asdict(final),
        "assertions": assertions,
        "passed": all(assertions.values()),
        "flags": {"hinge_saturated": outcome.hinge_saturated},
        "hinge_active": {
            "min": outcome.hinge_active_min, "mean": outcome.hinge_active_mean,
        },
        "version": __version__,
    }


def run_experiment(
    cfg: RunConfig, init_checkpoint=None, force: bool = False
) -> dict:
    """Execute the configured arm end to end and write its artifacts.

    Writes ``metrics.csv``, ``final.ckpt``, and ``summary.json`` into
    ``cfg.out_dir`` (created if missing) and returns the summary.

    Args:
        init_checkpoint: optional path to a checkpoint supplying the starting
            weights, and, when it carries accumulated statistics (a nonzero
            moment step count), the recovered state for a warm arm. The stored
            config hash must match this config unless ``force``.
    """
    use_ckpt = init_checkpoint is not None
    prep = prepare_run(cfg, skip_pretrain=use_ckpt)
    init_state = None
    if use_ckpt:
        ck = load_checkpoint(
            init_checkpoint, expected_config_hash=config_digest(cfg), force=force
        )
        check_checkpoint_shape(ck, dim=flatten(prep.model0).size, n=prep.train.n)
        prep.model0 = unflatten(prep.model0, ck.omega)
        if ck.moments.t > 0:
            init_state = (ck.estimators, ck.moments)

    outcome = execute_arm(prep, init_state=init_state)
    summary = _summary(cfg, outcome)

    os.makedirs(cfg.out_dir, exist_ok=True)
    write_metrics_csv(os.path.join(cfg.out_dir, "metrics.csv"), outcome.records)
    estimators = (
        outcome.estimators
        if outcome.estimators is not None
        else init_estimator_state(prep.train.n)
    )
    save_checkpoint(
        Checkpoint(
            omega=flatten(outcome.model),
            moments=outcome.moments,
            estimators=estimators,
            tau=cfg.tau,
            schedules=schedule_config(cfg),
            config_hash=config_digest(cfg),
            seeds=resolved_seeds(cfg),
            epoch=outcome.records[-1].epoch,
        ),
        os.path.join(cfg.out_dir, "final.ckpt"),
    )
    with open(os.path.join(cfg.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def experiment_arms(cfg: RunConfig, arms, seeds) -> dict:
    """Run several arms over several master seeds with shared preparation.

    Returns:
        {(seed, arm): ArmOutcome}. Within one seed every arm sees the same
        corpus, split, and starting point.
    """
    for arm in arms:
        arm_stages(replace(cfg, arm=arm))
    outcomes = {}
    for seed in seeds:
        base = replace(cfg, seed=seed, data_seed=None, model_seed=None, train_seed=None)
        prep = prepare_run(base)
        for arm in arms:
            prep_arm = PreparedRun(
                config=replace(base, arm=arm),
                train=prep.train, test=prep.test, model0=prep.model0,
            )
            outcomes[(seed, arm)] = execute_arm(prep_arm)
    return outcomes


COLDSTART_ARMS = ("hgcl_osr", "gcl_cold", "mbcl")


@dataclass
class ColdstartResult:
    """Per-epoch recall trajectories and the dip/stability tallies.

    ``r1`` is the mean of the two retrieval directions. An arm "dips" on a
    seed when its epoch-1 r1 falls strictly below the starting point's; it is
    "stable" when no epoch falls below.
    """

    rows: list
    baselines: dict
    dip_counts: dict
    stable_counts: dict
    n_seeds: int


def experiment_coldstart(
    cfg: RunConfig, seeds=(0, 1, 2, 3, 4), arms=COLDSTART_ARMS
) -> ColdstartResult:
    """Fine-tune the comparison arms from the same starting points and track
    how held-out recall moves in the first epochs."""
    outcomes = experiment_arms(cfg, arms, seeds)
    rows = []
    baselines = {}
    dip_counts = {arm: 0 for arm in arms}
    stable_counts = {arm: 0 for arm in arms}
    for seed in seeds:
        for arm in arms:
            out = outcomes[(seed, arm)]
            base = (out.baseline_r1[0] + out.baseline_r1[1]) / 2.0
            baselines[seed] = base
            traj = []
            for rec in out.records:
                r1 = (rec.r1_i2t + rec.r1_t2i) / 2.0
                rows.append({
                    "seed": seed, "arm": arm, "epoch": rec.epoch,
                    "loss": rec.loss, "r1_i2t": rec.r1_i2t,
                    "r1_t2i": rec.r1_t2i, "r1": r1,
                })
                if rec.epoch >= 1:
                    traj.append(r1)
            if traj and traj[0] < base:
                dip_counts[arm] += 1
            if traj and all(r1 >= base for r1 in traj):
                stable_counts[arm] += 1
    return ColdstartResult(
        rows=rows, baselines=baselines, dip_counts=dip_counts,
        stable_counts=stable_counts, n_seeds=len(seeds),
    )


def write_coldstart_csv(path, result: ColdstartResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seed,arm,epoch,loss,r1_i2t,r1_t2i,r1\n")
        for row in result.rows:
            fh.write(
                f"{row['seed']},{row['arm']},{row['epoch']},"
                + ",".join(
                    format(row[k], ".17g") for k in ("loss", "r1_i2t", "r1_t2i", "r1")
                )
                + "\n"
            )


@dataclass
class MarginSweepResult:
    """Final metrics per margin, under one shared starting point."""

    margins: list
    finals: list
    best_margin: float
    interior: bool


def experiment_margin_sweep(
    cfg: RunConfig, margins=DEFAULT_MARGINS
) -> MarginSweepResult:
    """Run the hinged warm arm once per margin on a shared prepared run.

    The winner is the margin with the best final held-out r1 (mean of both
    directions, ties to the smaller margin); ``interior`` reports whether the
    winner avoided both endpoints of the sweep.
    """
    margins = list(margins)
    if not margins:
        raise ConfigurationError("margins must be non-empty")
    if any(m < 0 for m in margins):
        raise ConfigurationError(f"margins must be non-negative, got {margins}")
    if arm_stages(cfg)["variant"] != "hgcl":
        raise ConfigurationError(
            f"the margin sweep varies the hinge margin; arm {cfg.arm!r} does "
            "not use the hinged loss"
        )
    prep = prepare_run(cfg)
    finals = []
    for m in margins:
        out = execute_arm(prep, margin=m)
        final = out.records[-1]
        finals.append({
            "margin": m,
            "loss": final.loss,
            "r1_i2t": final.r1_i2t,
            "r1_t2i": final.r1_t2i,
            "r1": (final.r1_i2t + final.r1_t2i) / 2.0,
            "fn_std": final.fn_std,
            "hinge_saturated": bool(out.hinge_saturated),
        })
    best_idx = max(range(len(finals)), key=lambda i: (finals[i]["r1"], -i))
    return MarginSweepResult(
        margins=margins,
        finals=finals,
        best_margin=margins[best_idx],
        interior=0 < best_idx < len(margins) - 1,
    )


def write_margin_csv(path, result: MarginSweepResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("margin,loss,r1_i2t,r1_t2i,r1,fn_std,hinge_saturated\n")
        for row in result.finals:
            fh.write(
                ",".join(
                    format(row[k], ".17g")
                    for k in ("margin", "loss", "r1_i2t", "r1_t2i", "r1", "fn_std")
                )
                + f",{int(row['hinge_saturated'])}\n"
            )


@dataclass
class ScalingResult:
    """Recovery error versus epoch budget.

    ``rows`` holds (epochs, seed, u_err_sum, m_err) per run; the means
    aggregate over seeds; slopes are least-squares fits of log(mean error)
    against log(epochs), None when only one budget was measured.
    """

    rows: list
    mean_u: dict
    mean_m: dict
    slope_u: float | None
    slope_m: float | None


def experiment_osr_scaling(
    cfg: RunConfig,
    epochs_list=DEFAULT_SCALING_EPOCHS,
    seeds=(0, 1, 2, 3, 4),
) -> ScalingResult:
    """Measure how recovery error shrinks with the epoch budget E.

    The corpus and frozen starting point come from the base config, so the
    exact oracle report is computed once and shared by every run; the listed
    seeds offset the train seed (batch-order randomness, the quantity the
    averaging is over). Following the analysis this mirrors, the estimator
    rate and momentum horizon scale with the budget: gamma_E = gamma / sqrt(E)
    and 1 - beta1_E = (1 - beta1) / sqrt(E), normalized to the configured
    values at E = 1.
    """
    epochs_list = list(epochs_list)
    if epochs_list != sorted(epochs_list) or len(set(epochs_list)) != len(epochs_list):
        raise ConfigurationError(
            f"epochs_list must be strictly ascending, got {epochs_list}"
        )
    if any(e < 1 for e in epochs_list):
        raise ConfigurationError(f"epoch budgets must be positive, got {epochs_list}")
    lcfg = loss_config(cfg)
    if lcfg.variant == "mbcl":
        raise ConfigurationError("recovery scaling needs a phi-based variant")
    prep = prepare_run(cfg)
    report = exact_loss_and_grad(
        prep.model0, prep.train.images, prep.train.texts, lcfg
    )
    _, _, train_seed = resolved_seeds(cfg)

    rows = []
    for epochs in epochs_list:
        root = math.sqrt(epochs)
        gamma_e = cfg.recovery_gamma / root
        beta1_e = 1.0 - (1.0 - cfg.beta1) / root
        gamma_cfg = ScheduleConfig(
            lr_base=cfg.lr_base, gamma_kind="constant", gamma_floor=gamma_e
        )
        for offset in seeds:
            osr = osr_run(
                prep.model0, prep.train.images, prep.train.texts, lcfg,
                epochs=epochs, batch_size=cfg.batch_size,
                seed=(train_seed + offset) % _SEED_MOD,
                gamma_cfg=gamma_cfg, beta1=beta1_e, beta2=cfg.beta2,
                weight_decay=cfg.weight_decay,
            )
            tq = theorem_quantities(
                osr.estimators, osr.moments, report.phi1, report.phi2, report.grad
            )
            rows.append((epochs, offset, tq.u_err_x + tq.u_err_z, tq.m_err))

    mean_u = {
        e: float(np.mean([r[2] for r in rows if r[0] == e])) for e in epochs_list
    }
    mean_m = {
        e: float(np.mean([r[3] for r in rows if r[0] == e])) for e in epochs_list
    }
    slope_u = slope_m = None
    if len(epochs_list) > 1:
        log_e = np.log([float(e) for e in epochs_list])
        slope_u = float(np.polyfit(log_e, np.log([mean_u[e] for e in epochs_list]), 1)[0])
        slope_m = float(np.polyfit(log_e, np.log([mean_m[e] for e in epochs_list]), 1)[0])
    return ScalingResult(
        rows=rows, mean_u=mean_u, mean_m=mean_m, slope_u=slope_u, slope_m=slope_m
    )


def write_scaling_csv(path, result: ScalingResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epochs,seed,u_err_sum,m_err\n")
        for epochs, offset, u_sum, m_err in result.rows:
            fh.write(
                f"{epochs},{offset},{format(u_sum, '.17g')},{format(m_err, '.17g')}\n"
            )
