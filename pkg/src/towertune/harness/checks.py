"""Self-contained verification routines behind the check subcommands.

Both checks are also what the acceptance suite runs, so the command line and
the test suite exercise one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..losses import LossConfig, loss_scalar_full, mbcl_loss, phi_values
from ..model import backward, finite_diff_grad, init_model, similarity
from ..optim import init_estimator_state, sogclr_gradient, update_u
from ..oracle import exact_loss_and_grad

_VARIANTS = ("gcl", "hgcl", "mbcl")


def _loss_config(variant: str) -> LossConfig:
    return LossConfig(
        variant=variant, tau=0.07, epsilon=1e-8, margin=0.1, hinge_power=2.0
    )


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of the end-to-end gradient check.

    ``trials`` holds (variant, batch size, relative error) per trial;
    ``max_rel`` is the worst of them.
    """

    trials: list
    max_rel: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel < self.tolerance


def gradient_check(
    trials: int = 20, seed: int = 0, tolerance: float = 1e-6, step: float = 1e-5
) -> GradCheckResult:
    """Compare analytic end-to-end gradients against central differences.

    Each trial draws a fresh small model and feature batch with B in
    {2, 4, 8} and cycles through the three loss variants. The phi-based
    variants go through the production path (estimator refresh at rate 1,
    then the estimator-weighted gradient), which on a full batch is the exact
    gradient of the full objective; the minibatch variant goes through its
    closed-form similarity weights. Relative error is the L2 distance over
    the L2 size of the numeric gradient.
    """
    results = []
    for trial in range(trials):
        rng = np.random.default_rng(seed * 100003 + trial)
        variant = _VARIANTS[trial % len(_VARIANTS)]
        b = int(rng.choice([2, 4, 8]))
        model = init_model(
            d_img=5, d_txt=4, hidden=6, d_embed=3, tau=0.07,
            seed=seed * 55001 + trial,
        )
        X = rng.standard_normal((b, 5))
        Z = rng.standard_normal((b, 4))
        cfg = _loss_config(variant)

        if variant == "mbcl":
            sim = similarity(model, X, Z)
            _, d_sim = mbcl_loss(sim, cfg.tau)
            analytic = backward(model, X, Z, d_sim)
            numeric = finite_diff_grad(
                lambda m: mbcl_loss(similarity(m, X, Z), cfg.tau)[0], model, step=step
            )
        else:
            sim = similarity(model, X, Z)
            phi1, phi2 = phi_values(sim, cfg)
            est = update_u(
                init_estimator_state(b), np.arange(b), phi1, phi2, gamma=1.0
            )
            analytic = sogclr_gradient(model, X, Z, np.arange(b), est, cfg, sim=sim)
            numeric = finite_diff_grad(
                lambda m: loss_scalar_full(m, X, Z, cfg), model, step=step
            )

        denom = max(float(np.linalg.norm(numeric)), 1e-12)
        rel = float(np.linalg.norm(analytic - numeric)) / denom
        results.append((variant, b, rel))
    return GradCheckResult(
        trials=results,
        max_rel=max(r[2] for r in results),
        tolerance=tolerance,
    )


@dataclass(frozen=True)
class EquivalenceCheckResult:
    """Outcome of the streamed-versus-oracle full-batch comparison.

    ``max_err`` maps each checked variant to its worst per-coordinate
    absolute gradient difference across seeds.
    """

    max_err: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.max_err.values())


def oracle_equivalence_check(
    n: int = 64,
    seed: int = 0,
    seeds: int = 1,
    tolerance: float = 1e-10,
    variants=("gcl", "hgcl"),
) -> EquivalenceCheckResult:
    """Full-batch agreement between the streaming gradient and the exact one.

    With batch size n and estimator rate 1, one refresh plants the exact phi
    values and the streamed gradient must reproduce the brute-force oracle's
    coordinate by coordinate.

    Args:
        seeds: number of independent (model, corpus) draws per variant,
            seeded seed, seed+1, ...
    """
    max_err = {v: 0.0 for v in variants}
    for variant in variants:
        cfg = _loss_config(variant)
        for s in range(seed, seed + seeds):
            rng = np.random.default_rng(s)
            model = init_model(
                d_img=6, d_txt=5, hidden=7, d_embed=4, tau=0.07, seed=s + 900
            )
            X = rng.standard_normal((n, 6))
            Z = rng.standard_normal((n, 5))
            batch = np.arange(n)

            sim = similarity(model, X, Z)
            phi1, phi2 = phi_values(sim, cfg)
            est = update_u(init_estimator_state(n), batch, phi1, phi2, gamma=1.0)
            streamed = sogclr_gradient(model, X, Z, batch, est, cfg, sim=sim)

            report = exact_loss_and_grad(model, X, Z, cfg)
            err = float(np.max(np.abs(streamed - report.grad)))
            max_err[variant] = max(max_err[variant], err)
    return EquivalenceCheckResult(max_err=max_err, tolerance=tolerance)
