"""Brute-force reference for the global contrastive objective.

Everything here is written as plain per-pair Python loops on purpose: this
module is the independent second route that the vectorized implementations in
``losses`` and ``optim`` are checked against, so it must not share code with
them. Keep it slow, literal, and obviously correct.

Capped at 8192 pairs; beyond that the quadratic loops stop being a tool and
start being a mistake.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError
from .losses import LossConfig
from .model import TwoTowerModel, backward, forward

SIZE_CAP = 8192


def _check_corpus(images: np.ndarray, texts: np.ndarray) -> int:
    n = images.shape[0]
    if texts.shape[0] != n:
        raise ConfigurationError(
            f"paired corpus required: {n} images vs {texts.shape[0]} texts"
        )
    if n < 1:
        raise ConfigurationError("corpus must be non-empty")
    if n > SIZE_CAP:
        raise ConfigurationError(
            f"oracle refuses n={n}; the quadratic loops are capped at {SIZE_CAP}"
        )
    return n


def _surrogate_scalar(cfg: LossConfig, gap: float):
    """Scalar gap transform and derivative, written out longhand."""
    if cfg.variant == "gcl":
        return gap, 1.0
    if cfg.variant == "hgcl":
        shifted = gap + cfg.margin
        if shifted <= 0.0:
            return 0.0, 0.0
        return shifted ** cfg.hinge_power, cfg.hinge_power * shifted ** (
            cfg.hinge_power - 1.0
        )
    raise ConfigurationError(f"oracle has no surrogate for variant {cfg.variant!r}")


def _exp(arg: float, i: int, j: int) -> float:
    if arg > 700.0:
        raise NumericError(
            f"exp argument {arg:.6g} for pair ({i}, {j}) exceeds 700"
        )
    return math.exp(arg)


def _pairwise_similarity(model: TwoTowerModel, images, texts) -> np.ndarray:
    e_img = forward(model, images, "image")
    e_txt = forward(model, texts, "text")
    n = e_img.shape[0]
    sim = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            sim[i, j] = float(np.dot(e_img[i], e_txt[j]))
    return sim


def phi_full(model: TwoTowerModel, images: np.ndarray, texts: np.ndarray, cfg: LossConfig):
    """Exact full-corpus phi vectors by direct summation.

    phi1[i] = (1/n) sum_{j != i} exp(l(s_ij - s_ii) / tau)
    phi2[i] = (1/n) sum_{j != i} exp(l(s_ji - s_ii) / tau)
    """
    n = _check_corpus(images, texts)
    sim = _pairwise_similarity(model, images, texts)
    phi1 = np.zeros(n)
    phi2 = np.zeros(n)
    for i in range(n):
        s_ii = sim[i, i]
        acc1 = 0.0
        acc2 = 0.0
        for j in range(n):
            if j == i:
                continue
            l1, _ = _surrogate_scalar(cfg, sim[i, j] - s_ii)
            acc1 += _exp(l1 / cfg.tau, i, j)
            l2, _ = _surrogate_scalar(cfg, sim[j, i] - s_ii)
            acc2 += _exp(l2 / cfg.tau, j, i)
        phi1[i] = acc1 / n
        phi2[i] = acc2 / n
    return phi1, phi2


@dataclass(frozen=True)
class OracleReport:
    """Full-corpus ground truth at one parameter point."""

    phi1: np.ndarray
    phi2: np.ndarray
    loss: float
    grad: np.ndarray


def exact_loss_and_grad(
    model: TwoTowerModel, images: np.ndarray, texts: np.ndarray, cfg: LossConfig
) -> OracleReport:
    """Exact objective value and full-batch parameter gradient.

    The d loss / d similarity weights are assembled pair by pair, then pushed
    through the encoder backward pass (which is itself validated against
    finite differences). Independence from the vectorized route holds at the
    objective level: no phi, surrogate, or weighting code is shared.
    """
    n = _check_corpus(images, texts)
    sim = _pairwise_similarity(model, images, texts)
    phi1 = np.zeros(n)
    phi2 = np.zeros(n)
    d_sim = np.zeros((n, n))

    for i in range(n):
        s_ii = sim[i, i]
        acc1 = 0.0
        acc2 = 0.0
        for j in range(n):
            if j == i:
                continue
            l1, _ = _surrogate_scalar(cfg, sim[i, j] - s_ii)
            acc1 += _exp(l1 / cfg.tau, i, j)
            l2, _ = _surrogate_scalar(cfg, sim[j, i] - s_ii)
            acc2 += _exp(l2 / cfg.tau, j, i)
        phi1[i] = acc1 / n
        phi2[i] = acc2 / n

    loss = 0.0
    for i in range(n):
        loss += math.log(cfg.epsilon + phi1[i]) + math.log(cfg.epsilon + phi2[i])
    loss *= cfg.tau / n

    # d loss / d s, one anchor at a time. For image anchor i, each negative
    # (i, j) receives weight exp(l/tau) * l' scaled by 1/(eps + phi1[i]),
    # and s_ii collects the opposite sign through the -s_ii inside the gap.
    for i in range(n):
        s_ii = sim[i, i]
        w1 = 1.0 / (cfg.epsilon + phi1[i])
        w2 = 1.0 / (cfg.epsilon + phi2[i])
        for j in range(n):
            if j == i:
                continue
            l1, dl1 = _surrogate_scalar(cfg, sim[i, j] - s_ii)
            term1 = _exp(l1 / cfg.tau, i, j) * dl1 * w1 / (n * n)
            d_sim[i, j] += term1
            d_sim[i, i] -= term1
            l2, dl2 = _surrogate_scalar(cfg, sim[j, i] - s_ii)
            term2 = _exp(l2 / cfg.tau, j, i) * dl2 * w2 / (n * n)
            d_sim[j, i] += term2
            d_sim[i, i] -= term2

    grad = backward(model, images, texts, d_sim)
    return OracleReport(phi1=phi1, phi2=phi2, loss=loss, grad=grad)


def estimation_errors(est, ms, report: OracleReport, delta0: float | None = None):
    """Convenience: measure a run's estimator/moment state against a report."""
    from .optim import theorem_quantities

    return theorem_quantities(
        est, ms, report.phi1, report.phi2, report.grad, delta0=delta0
    )
