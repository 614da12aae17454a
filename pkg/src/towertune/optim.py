"""Streaming optimization: moving-average estimators, moment recovery, and
the fine-tuning loops.

Two stages share the machinery. The recovery stage replays batches at a frozen
starting point and accumulates first/second gradient moments plus per-anchor
phi estimators without touching the weights. The fine-tuning stage runs the
same estimator-weighted gradient with AdamW updates, seeded either from zeros
or from a recovery result.

Within a step the order is fixed: update the touched anchors' u at the current
weights, then form the gradient with those fresh values. ``EstimatorState``
carries a freshness tag so the gradient refuses stale estimates instead of
silently using them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, EstimatorStateError, TrainingError
from .losses import (
    LossConfig,
    composed_loss_given_u,
    mbcl_loss,
    phi_log_objective,
    phi_values,
)
from .model import TwoTowerModel, backward, flatten, similarity, unflatten

ADAM_DELTA = 1e-8


@dataclass(frozen=True)
class ScheduleConfig:
    """Learning-rate and estimator-rate schedules.

    gamma follows either a constant (the floor) or a half-cosine from
    ``gamma_start`` at epoch 0 down to ``gamma_floor`` at ``gamma_floor_epoch``,
    staying at the floor afterwards. The cosine learning rate starts at exactly
    ``lr_base`` on step 0 and decays to 0 across the run.
    """

    lr_base: float = 1e-5
    lr_kind: str = "cosine"
    gamma_kind: str = "cosine_to_floor"
    gamma_start: float = 1.0
    gamma_floor: float = 0.9
    gamma_floor_epoch: int = 4

    def __post_init__(self):
        if not self.lr_base > 0:
            raise ConfigurationError(f"lr_base must be positive, got {self.lr_base}")
        if self.lr_kind not in ("constant", "cosine"):
            raise ConfigurationError(
                f"lr_kind must be 'constant' or 'cosine', got {self.lr_kind!r}"
            )
        if self.gamma_kind not in ("constant", "cosine_to_floor"):
            raise ConfigurationError(
                "gamma_kind must be 'constant' or 'cosine_to_floor', got "
                f"{self.gamma_kind!r}"
            )
        for name in ("gamma_start", "gamma_floor"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigurationError(
                    f"{name} must lie in (0, 1], got {value}"
                )
        if self.gamma_floor > self.gamma_start:
            raise ConfigurationError(
                f"gamma_floor {self.gamma_floor} exceeds gamma_start "
                f"{self.gamma_start}"
            )
        if self.gamma_floor_epoch < 1:
            raise ConfigurationError(
                f"gamma_floor_epoch must be positive, got {self.gamma_floor_epoch}"
            )


def lr_at(step: int, total_steps: int, cfg: ScheduleConfig) -> float:
    if step < 0 or total_steps < 1:
        raise ConfigurationError(
            f"need step >= 0 and total_steps >= 1, got {step}/{total_steps}"
        )
    if cfg.lr_kind == "constant":
        return cfg.lr_base
    frac = min(step, total_steps) / total_steps
    return cfg.lr_base * 0.5 * (1.0 + np.cos(np.pi * frac))


def gamma_at(step: int, epoch: int, cfg: ScheduleConfig) -> float:
    """Estimator rate for a step. The schedule is resolved per integer epoch;
    ``step`` is accepted for interface symmetry but does not affect the value.
    """
    if epoch < 0:
        raise ConfigurationError(f"epoch must be non-negative, got {epoch}")
    if cfg.gamma_kind == "constant":
        return cfg.gamma_floor
    if epoch >= cfg.gamma_floor_epoch:
        return cfg.gamma_floor
    frac = epoch / cfg.gamma_floor_epoch
    return cfg.gamma_floor + (cfg.gamma_start - cfg.gamma_floor) * 0.5 * (
        1.0 + np.cos(np.pi * frac)
    )


@dataclass
class EstimatorState:
    """Per-anchor moving averages u_x (image anchors) and u_z (text anchors),
    plus the freshness bookkeeping enforcing update-then-use ordering."""

    u_x: np.ndarray
    u_z: np.ndarray
    step: int
    last_update: np.ndarray

    @property
    def n(self) -> int:
        return self.u_x.shape[0]


def init_estimator_state(n: int) -> EstimatorState:
    if n < 1:
        raise ConfigurationError(f"n must be positive, got {n}")
    return EstimatorState(
        u_x=np.zeros(n),
        u_z=np.zeros(n),
        step=0,
        last_update=np.full(n, -1, dtype=np.int64),
    )


def update_u(
    state: EstimatorState,
    batch: np.ndarray,
    phi1: np.ndarray,
    phi2: np.ndarray,
    gamma: float,
) -> EstimatorState:
    """One moving-average step: u[i] <- (1 - gamma) u[i] + gamma phi(i) for
    anchors in the batch. Entries outside the batch are untouched bitwise.
    """
    if not 0 < gamma <= 1:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")
    batch = np.asarray(batch)
    if batch.ndim != 1 or batch.size < 1:
        raise ConfigurationError(f"batch must be a non-empty vector, got {batch.shape}")
    if np.unique(batch).size != batch.size:
        raise ConfigurationError("batch indices must be unique")
    if batch.min() < 0 or batch.max() >= state.n:
        raise ConfigurationError(
            f"batch indices must lie in [0, {state.n}), got "
            f"[{batch.min()}, {batch.max()}]"
        )
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    if phi1.shape != batch.shape or phi2.shape != batch.shape:
        raise ConfigurationError(
            f"phi vectors must match the batch shape {batch.shape}, got "
            f"{phi1.shape} and {phi2.shape}"
        )
    u_x = state.u_x.copy()
    u_z = state.u_z.copy()
    u_x[batch] = (1.0 - gamma) * u_x[batch] + gamma * phi1
    u_z[batch] = (1.0 - gamma) * u_z[batch] + gamma * phi2
    last = state.last_update.copy()
    last[batch] = state.step + 1
    return EstimatorState(u_x=u_x, u_z=u_z, step=state.step + 1, last_update=last)


def sogclr_gradient(
    model: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    batch: np.ndarray,
    state: EstimatorState,
    cfg: LossConfig,
    sim: np.ndarray | None = None,
) -> np.ndarray:
    """Estimator-weighted stochastic gradient for one batch.

    Requires every batch anchor's u to have been refreshed by the immediately
    preceding ``update_u`` call (the enforced step ordering); refuses stale
    entries.

    Args:
        images, texts: full corpus feature matrices (indexed by ``batch``).
        sim: optional precomputed similarity block for the batch.

    Returns:
        Flat gradient over all model parameters.
    """
    batch = np.asarray(batch)
    stale = state.last_update[batch] != state.step
    if np.any(stale):
        bad = int(batch[np.flatnonzero(stale)[0]])
        raise EstimatorStateError(
            f"anchor {bad} has a stale estimator (updated at step "
            f"{int(state.last_update[bad])}, current step {state.step}); "
            "call update_u for this batch first"
        )
    if sim is None:
        sim = similarity(model, images[batch], texts[batch])
    d_sim = composed_loss_given_u(sim, cfg, state.u_x[batch], state.u_z[batch])
    return backward(model, images[batch], texts[batch], d_sim)


@dataclass
class MomentState:
    """AdamW accumulator: first/second gradient moments and the step count."""

    m: np.ndarray
    v: np.ndarray
    t: int
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.02


def init_moment_state(
    dim: int, beta1: float = 0.9, beta2: float = 0.98, weight_decay: float = 0.02
) -> MomentState:
    if dim < 1:
        raise ConfigurationError(f"dim must be positive, got {dim}")
    for name, value in (("beta1", beta1), ("beta2", beta2)):
        if not 0 <= value < 1:
            raise ConfigurationError(f"{name} must lie in [0, 1), got {value}")
    if weight_decay < 0:
        raise ConfigurationError(
            f"weight_decay must be non-negative, got {weight_decay}"
        )
    return MomentState(
        m=np.zeros(dim), v=np.zeros(dim), t=0,
        beta1=beta1, beta2=beta2, weight_decay=weight_decay,
    )


def _check_grad(ms: MomentState, grad: np.ndarray) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != ms.m.shape:
        raise ConfigurationError(
            f"gradient shape {grad.shape} does not match state {ms.m.shape}"
        )
    return grad


def momentum_step(ms: MomentState, grad: np.ndarray) -> MomentState:
    """First-moment EMA m <- beta1 m + (1 - beta1) g, advancing the step count."""
    grad = _check_grad(ms, grad)
    return replace(ms, m=ms.beta1 * ms.m + (1.0 - ms.beta1) * grad, t=ms.t + 1)


def second_moment_step(ms: MomentState, grad: np.ndarray) -> MomentState:
    """Second-moment EMA v <- beta2 v + (1 - beta2) g*g; step count unchanged
    (pair with ``momentum_step`` for a full accumulator update)."""
    grad = _check_grad(ms, grad)
    return replace(ms, v=ms.beta2 * ms.v + (1.0 - ms.beta2) * grad * grad)


def adamw_step(
    ms: MomentState, omega: np.ndarray, grad: np.ndarray, lr: float
) -> tuple[MomentState, np.ndarray]:
    """One decoupled-weight-decay Adam update with bias correction.

    omega' = omega - lr * (m_hat / (sqrt(v_hat) + delta) + weight_decay * omega)

    Returns:
        (updated MomentState, new parameter vector).
    """
    if not lr >= 0:
        raise ConfigurationError(f"lr must be non-negative, got {lr}")
    ms = second_moment_step(momentum_step(ms, grad), grad)
    m_hat = ms.m / (1.0 - ms.beta1 ** ms.t)
    v_hat = ms.v / (1.0 - ms.beta2 ** ms.t)
    new_omega = omega - lr * (
        m_hat / (np.sqrt(v_hat) + ADAM_DELTA) + ms.weight_decay * omega
    )
    return ms, new_omega


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Index batches for one epoch: a fresh permutation cut into consecutive
    chunks, trailing partial chunk dropped. batch_size >= n yields one batch.
    """
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be positive, got {batch_size}")
    b = min(batch_size, n)
    order = rng.permutation(n)
    for start in range(0, n - b + 1, b):
        yield order[start:start + b]


@dataclass
class OsrResult:
    moments: MomentState
    estimators: EstimatorState
    steps: int


def osr_run(
    model0: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    cfg: LossConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    gamma_cfg: ScheduleConfig | None = None,
    beta1: float = 0.9,
    beta2: float = 0.98,
    weight_decay: float = 0.02,
    epoch_callback=None,
) -> OsrResult:
    """Optimizer-statistics recovery: replay the streaming loop at frozen
    weights, accumulating (m, v) moment EMAs and the per-anchor u estimators.

    The weights of ``model0`` are never modified. Per step: sample a batch,
    refresh the batch's u at the frozen weights, form the estimator-weighted
    gradient, update both moment EMAs.

    Args:
        gamma_cfg: estimator-rate schedule; defaults to constant 0.9.
        epoch_callback: optional fn(epoch_index, estimators, moments) invoked
            after each epoch, for error tracking.
    """
    if epochs < 0:
        raise ConfigurationError(f"epochs must be non-negative, got {epochs}")
    if gamma_cfg is None:
        gamma_cfg = ScheduleConfig(gamma_kind="constant", gamma_floor=0.9)
    n = images.shape[0]
    rng = np.random.default_rng(seed)
    est = init_estimator_state(n)
    ms = init_moment_state(
        flatten(model0).size, beta1=beta1, beta2=beta2, weight_decay=weight_decay
    )
    steps = 0
    for epoch in range(epochs):
        for batch in epoch_batches(n, batch_size, rng):
            gamma = gamma_at(steps, epoch, gamma_cfg)
            sim = similarity(model0, images[batch], texts[batch])
            phi1, phi2 = phi_values(sim, cfg)
            est = update_u(est, batch, phi1, phi2, gamma)
            grad = sogclr_gradient(model0, images, texts, batch, est, cfg, sim=sim)
            if not np.all(np.isfinite(grad)):
                raise TrainingError("recovery gradient went non-finite", step=steps)
            ms = second_moment_step(momentum_step(ms, grad), grad)
            steps += 1
        if epoch_callback is not None:
            epoch_callback(epoch, est, ms)
    return OsrResult(moments=ms, estimators=est, steps=steps)


@dataclass
class FinetuneResult:
    model: TwoTowerModel
    moments: MomentState
    estimators: EstimatorState | None
    train_losses: list
    steps: int
    hinge_active_min: float | None = None
    hinge_active_mean: float | None = None


def _hinge_active_fraction(sim: np.ndarray, margin: float) -> float:
    diag = np.diagonal(sim)
    off = ~np.eye(sim.shape[0], dtype=bool)
    active1 = (sim - diag[:, None] + margin > 0)[off]
    active2 = (sim - diag[None, :] + margin > 0)[off]
    return float((active1.sum() + active2.sum()) / (active1.size + active2.size))


def finetune_run(
    model0: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    cfg: LossConfig,
    schedules: ScheduleConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    est_init: EstimatorState | None = None,
    ms_init: MomentState | None = None,
    epoch_hook=None,
) -> FinetuneResult:
    """Estimator-weighted fine-tuning with AdamW.

    Per step: sample a batch, compute the batch similarity block at the
    current weights, refresh the batch's u, form the estimator-weighted
    gradient with the fresh u, take one AdamW step at the scheduled rate.

    Args:
        est_init: starting estimators (zeros if None).
        ms_init: starting moment accumulator (zeros at t=0 if None); a
            recovery result continues its step count, keeping the bias
            correction consistent with the accumulated history.
        epoch_hook: optional fn(epoch_index, model, mean_train_loss,
            estimators, moments) called after each epoch.

    Returns:
        FinetuneResult; ``train_losses[e]`` is the mean minibatch objective
        over epoch e's steps. epochs=0 returns the inputs unchanged with an
        empty loss list.
    """
    if cfg.variant not in ("gcl", "hgcl"):
        raise ConfigurationError(
            f"finetune_run drives the phi-based variants, got {cfg.variant!r}"
        )
    if epochs < 0:
        raise ConfigurationError(f"epochs must be non-negative, got {epochs}")
    n = images.shape[0]
    dim = flatten(model0).size
    est = est_init if est_init is not None else init_estimator_state(n)
    ms = ms_init if ms_init is not None else init_moment_state(dim)
    if est.n != n:
        raise EstimatorStateError(
            f"estimator state sized for n={est.n}, corpus has n={n}"
        )
    if ms.m.size != dim:
        raise EstimatorStateError(
            f"moment state sized for {ms.m.size} parameters, model has {dim}"
        )
    if epochs == 0:
        return FinetuneResult(
            model=model0, moments=ms, estimators=est, train_losses=[], steps=0
        )

    rng = np.random.default_rng(seed)
    omega = flatten(model0).copy()
    total_steps = epochs * max(1, n // min(batch_size, n))
    step = 0
    losses = []
    active_fractions = []
    for epoch in range(epochs):
        epoch_losses = []
        for batch in epoch_batches(n, batch_size, rng):
            current = unflatten(model0, omega)
            gamma = gamma_at(step, epoch, schedules)
            sim = similarity(current, images[batch], texts[batch])
            phi1, phi2 = phi_values(sim, cfg)
            est = update_u(est, batch, phi1, phi2, gamma)
            grad = sogclr_gradient(current, images, texts, batch, est, cfg, sim=sim)
            loss = phi_log_objective(sim, cfg)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingError("fine-tune objective went non-finite", step=step)
            if cfg.variant == "hgcl":
                active_fractions.append(_hinge_active_fraction(sim, cfg.margin))
            lr = lr_at(step, total_steps, schedules)
            ms, omega = adamw_step(ms, omega, grad, lr)
            epoch_losses.append(loss)
            step += 1
        losses.append(float(np.mean(epoch_losses)))
        if epoch_hook is not None:
            epoch_hook(epoch, unflatten(model0, omega.copy()), losses[-1], est, ms)
    result_model = unflatten(model0, omega.copy())
    return FinetuneResult(
        model=result_model,
        moments=ms,
        estimators=est,
        train_losses=losses,
        steps=step,
        hinge_active_min=min(active_fractions) if active_fractions else None,
        hinge_active_mean=(
            float(np.mean(active_fractions)) if active_fractions else None
        ),
    )


def mbcl_finetune_run(
    model0: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    schedules: ScheduleConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    ms_init: MomentState | None = None,
    epoch_hook=None,
) -> FinetuneResult:
    """Plain minibatch InfoNCE fine-tuning with AdamW (the conventional
    recipe). A single-pair batch has zero loss and gradient, so weights then
    move only through weight decay.
    """
    if epochs < 0:
        raise ConfigurationError(f"epochs must be non-negative, got {epochs}")
    n = images.shape[0]
    dim = flatten(model0).size
    ms = ms_init if ms_init is not None else init_moment_state(dim)
    if epochs == 0:
        return FinetuneResult(
            model=model0, moments=ms, estimators=None, train_losses=[], steps=0
        )
    rng = np.random.default_rng(seed)
    omega = flatten(model0).copy()
    total_steps = epochs * max(1, n // min(batch_size, n))
    step = 0
    losses = []
    for epoch in range(epochs):
        epoch_losses = []
        for batch in epoch_batches(n, batch_size, rng):
            current = unflatten(model0, omega)
            sim = similarity(current, images[batch], texts[batch])
            loss, d_sim = mbcl_loss(sim, model0.tau)
            if not np.isfinite(loss):
                raise TrainingError("fine-tune loss went non-finite", step=step)
            grad = backward(current, images[batch], texts[batch], d_sim)
            lr = lr_at(step, total_steps, schedules)
            ms, omega = adamw_step(ms, omega, grad, lr)
            epoch_losses.append(loss)
            step += 1
        losses.append(float(np.mean(epoch_losses)))
        if epoch_hook is not None:
            epoch_hook(epoch, unflatten(model0, omega.copy()), losses[-1], None, ms)
    return FinetuneResult(
        model=unflatten(model0, omega.copy()),
        moments=ms,
        estimators=None,
        train_losses=losses,
        steps=step,
    )


@dataclass(frozen=True)
class TheoremQuantities:
    """Estimation-error summary against full-corpus ground truth.

    u_err_x = (1/2n) ||u_x - phi1_full||^2, u_err_z likewise,
    m_err = ||m - grad_full||^2; delta0 is the objective drop from the
    starting point to the best seen, when a trajectory provides one.
    """

    u_err_x: float
    u_err_z: float
    m_err: float
    delta0: float | None = None


def theorem_quantities(
    est: EstimatorState,
    ms: MomentState,
    phi1_full: np.ndarray,
    phi2_full: np.ndarray,
    grad_full: np.ndarray,
    delta0: float | None = None,
) -> TheoremQuantities:
    """Measure estimator and momentum error against exact full-corpus values
    (typically produced by the brute-force oracle)."""
    phi1_full = np.asarray(phi1_full, dtype=np.float64)
    phi2_full = np.asarray(phi2_full, dtype=np.float64)
    if phi1_full.shape != (est.n,) or phi2_full.shape != (est.n,):
        raise ConfigurationError(
            f"full phi vectors must have shape ({est.n},), got "
            f"{phi1_full.shape} and {phi2_full.shape}"
        )
    grad_full = np.asarray(grad_full, dtype=np.float64)
    if grad_full.shape != ms.m.shape:
        raise ConfigurationError(
            f"full gradient shape {grad_full.shape} does not match moments "
            f"{ms.m.shape}"
        )
    n = est.n
    return TheoremQuantities(
        u_err_x=float(np.sum((est.u_x - phi1_full) ** 2) / (2 * n)),
        u_err_z=float(np.sum((est.u_z - phi2_full) ** 2) / (2 * n)),
        m_err=float(np.sum((ms.m - grad_full) ** 2)),
        delta0=delta0,
    )
