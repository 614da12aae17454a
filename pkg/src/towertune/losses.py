"""Contrastive objectives at the similarity-matrix level.

Three variants share one vocabulary:

* ``mbcl``: the symmetric minibatch InfoNCE loss, both retrieval directions,
  averaged over the batch.
* ``gcl``: the global contrastive objective. Per anchor i the negatives enter
  through phi(i) = (1/B) * sum_{j != i} exp(l(s_ij - s_ii) / tau) with the
  identity gap transform l(g) = g, and the loss is
  (tau/B) * sum_i [log(eps + phi1(i)) + log(eps + phi2(i))].
* ``hgcl``: same shape with the hinged gap transform l(g) = max(g + m, 0)^p
  (p = 2 by default), which zeroes both value and derivative once a negative
  is separated from its positive by more than the margin m.

The divisor inside phi is the size of the similarity block handed in, matching
the literal definition for both the full corpus and a minibatch; the diagonal
(the positive pair) is always excluded from the sum but not from the divisor.

Everything here is vectorized numpy over square float64 similarity blocks;
the deliberately naive reference implementation lives in ``oracle`` and must
not share code with this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimatorStateError, NumericError

VARIANTS = ("mbcl", "gcl", "hgcl")

# exp() overflows float64 just above 709; refuse arguments past this point.
MAX_EXP_ARG = 700.0


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters shared by the contrastive objectives.

    Args:
        variant: one of "mbcl", "gcl", "hgcl".
        tau: similarity temperature, positive.
        epsilon: additive stabilizer inside the logarithm, positive.
        margin: hinge margin m, non-negative. Only read by "hgcl".
        hinge_power: exponent p of the hinged gap transform. The default 2.0
            is the exact squared hinge; other values are an optional smoothing
            knob and are off the verified path.
    """

    variant: str = "gcl"
    tau: float = 0.07
    epsilon: float = 1e-8
    margin: float = 0.1
    hinge_power: float = 2.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not self.epsilon > 0:
            raise ConfigurationError(
                f"epsilon must be positive, got {self.epsilon}"
            )
        if self.margin < 0:
            raise ConfigurationError(
                f"margin must be non-negative, got {self.margin}"
            )
        if not self.hinge_power >= 1:
            raise ConfigurationError(
                f"hinge_power must be at least 1, got {self.hinge_power}"
            )


def surrogate(kind: str, gap, margin: float = 0.1, power: float = 2.0):
    """Gap transform l and its derivative, elementwise.

    Args:
        kind: "identity" (l(g) = g) or "squared_hinge"
            (l(g) = max(g + margin, 0) ** power).
        gap: scalar or array of similarity gaps s_negative - s_positive.

    Returns:
        (value, derivative) with the same shape as ``gap``. At the hinge kink
        the derivative is 0, and everywhere in the dead zone both outputs are
        exact floating-point zeros.
    """
    gap = np.asarray(gap, dtype=np.float64)
    if kind == "identity":
        return gap.copy(), np.ones_like(gap)
    if kind == "squared_hinge":
        shifted = gap + margin
        active = shifted > 0
        value = np.zeros_like(gap)
        deriv = np.zeros_like(gap)
        value[active] = shifted[active] ** power
        deriv[active] = power * shifted[active] ** (power - 1.0)
        return value, deriv
    raise ConfigurationError(
        f"kind must be 'identity' or 'squared_hinge', got {kind!r}"
    )


def _surrogate_for(cfg: LossConfig, gaps: np.ndarray):
    if cfg.variant == "gcl":
        return surrogate("identity", gaps)
    if cfg.variant == "hgcl":
        return surrogate("squared_hinge", gaps, cfg.margin, cfg.hinge_power)
    raise ConfigurationError(f"variant {cfg.variant!r} has no phi surrogate")


def _check_square(sim: np.ndarray, what: str) -> np.ndarray:
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ConfigurationError(f"{what} must be square, got shape {sim.shape}")
    if sim.shape[0] < 1:
        raise ConfigurationError(f"{what} must be non-empty")
    return sim


def _guarded_exp(args: np.ndarray, off_diag: np.ndarray) -> np.ndarray:
    """exp with the diagonal forced to zero and an overflow refusal."""
    masked = np.where(off_diag, args, -np.inf)
    if masked.size and np.max(masked) > MAX_EXP_ARG:
        i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
        raise NumericError(
            f"exp argument {masked[i, j]:.6g} for pair ({i}, {j}) exceeds "
            f"{MAX_EXP_ARG}; loss would overflow"
        )
    out = np.exp(masked)  # exp(-inf) == 0 clears the diagonal
    return out


def _phi_terms(sim: np.ndarray, cfg: LossConfig):
    """Shared core: exp terms and surrogate derivatives for both directions."""
    diag = np.diagonal(sim)
    off = ~np.eye(sim.shape[0], dtype=bool)
    gaps1 = sim - diag[:, None]   # row anchor i: s_ij - s_ii
    gaps2 = sim - diag[None, :]   # column anchor i at (j, i): s_ji - s_ii
    l1, dl1 = _surrogate_for(cfg, gaps1)
    l2, dl2 = _surrogate_for(cfg, gaps2)
    e1 = _guarded_exp(l1 / cfg.tau, off)
    e2 = _guarded_exp(l2 / cfg.tau, off)
    return e1, e2, dl1, dl2


def phi_values(sim: np.ndarray, cfg: LossConfig):
    """Both direction's phi vectors for one square similarity block.

    phi1[i] averages over text negatives of image anchor i (row i), phi2[i]
    over image negatives of text anchor i (column i). The divisor is the
    block size; the diagonal is excluded from the sums.

    Returns:
        (phi1, phi2), float64 vectors of length B.
    """
    sim = _check_square(sim, "similarity block")
    e1, e2, _, _ = _phi_terms(sim, cfg)
    b = sim.shape[0]
    return e1.sum(axis=1) / b, e2.sum(axis=0) / b


def phi_log_objective(sim: np.ndarray, cfg: LossConfig) -> float:
    """Scalar (tau/B) * sum_i [log(eps + phi1) + log(eps + phi2)] of a block.

    For a full-corpus similarity matrix this is the exact global objective;
    for a minibatch block it is the quantity the streaming loop tracks.
    """
    phi1, phi2 = phi_values(sim, cfg)
    return float(
        cfg.tau / sim.shape[0]
        * (np.log(cfg.epsilon + phi1) + np.log(cfg.epsilon + phi2)).sum()
    )


def composed_loss_given_u(
    sim: np.ndarray, cfg: LossConfig, u_x: np.ndarray, u_z: np.ndarray
) -> np.ndarray:
    """d loss / d sim for the estimator-weighted minibatch gradient.

    Backpropagating the returned matrix through the encoders yields exactly

        (tau/B) * sum_i [ (eps + u_x[i])^-1 grad phi1(i)
                          + (eps + u_z[i])^-1 grad phi2(i) ]

    including the positive-pair chain terms that land on the diagonal (each
    gap contains -s_ii, so every off-diagonal push comes with an equal and
    opposite diagonal pull).

    Args:
        u_x, u_z: per-anchor moving-average estimates for the batch, length B.

    Raises:
        EstimatorStateError: if any eps + u is not strictly positive.
    """
    sim = _check_square(sim, "similarity block")
    b = sim.shape[0]
    u_x = np.asarray(u_x, dtype=np.float64)
    u_z = np.asarray(u_z, dtype=np.float64)
    if u_x.shape != (b,) or u_z.shape != (b,):
        raise ConfigurationError(
            f"estimator slices must have shape ({b},), got {u_x.shape} and "
            f"{u_z.shape}"
        )
    wx = cfg.epsilon + u_x
    wz = cfg.epsilon + u_z
    if np.any(wx <= 0) or np.any(wz <= 0):
        bad = int(np.flatnonzero((wx <= 0) | (wz <= 0))[0])
        raise EstimatorStateError(
            f"eps + u must be positive; anchor {bad} has u_x={u_x[bad]!r}, "
            f"u_z={u_z[bad]!r}"
        )
    e1, e2, dl1, dl2 = _phi_terms(sim, cfg)
    off = ~np.eye(b, dtype=bool)
    p1 = np.where(off, e1 * dl1, 0.0)
    p2 = np.where(off, e2 * dl2, 0.0)
    d_sim = p1 / wx[:, None] + p2 / wz[None, :]
    diag_pull = (p1 / wx[:, None]).sum(axis=1) + (p2 / wz[None, :]).sum(axis=0)
    d_sim[np.arange(b), np.arange(b)] -= diag_pull
    return d_sim / (b * b)


def mbcl_loss(sim: np.ndarray, tau: float):
    """Symmetric minibatch InfoNCE loss and its similarity gradient.

    Log-sum-exp stabilized; a single-pair batch scores exactly 0 with zero
    gradient.

    Returns:
        (loss, d_sim) where d_sim has the block's shape.
    """
    sim = _check_square(sim, "similarity block")
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    b = sim.shape[0]
    logits = sim / tau
    diag = np.diagonal(logits)

    row_shift = logits - logits.max(axis=1, keepdims=True)
    row_lse = np.log(np.exp(row_shift).sum(axis=1)) + logits.max(axis=1)
    col_shift = logits - logits.max(axis=0, keepdims=True)
    col_lse = np.log(np.exp(col_shift).sum(axis=0)) + logits.max(axis=0)

    loss = float(-(2.0 * diag - row_lse - col_lse).sum() / b)
    p_row = np.exp(logits - row_lse[:, None])
    p_col = np.exp(logits - col_lse[None, :])
    eye = np.eye(b)
    d_sim = (p_row + p_col - 2.0 * eye) / (b * tau)
    return loss, d_sim


def loss_scalar_full(model, images: np.ndarray, texts: np.ndarray, cfg: LossConfig) -> float:
    """Exact full-corpus objective for the "gcl" and "hgcl" variants.

    A corpus of one pair has empty phi sums, giving 2 * tau * log(eps).
    """
    if cfg.variant == "mbcl":
        raise ConfigurationError(
            "loss_scalar_full is defined for the phi-based variants; use "
            "mbcl_loss for the minibatch objective"
        )
    from .model import similarity  # deferred to keep this module matrix-only

    return phi_log_objective(similarity(model, images, texts), cfg)
