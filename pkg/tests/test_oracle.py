"""Tests for the brute-force full-corpus oracle and its agreement with the
streaming implementation."""

import numpy as np
import pytest

from towertune import (
    ConfigurationError,
    LossConfig,
    estimation_errors,
    exact_loss_and_grad,
    finite_diff_grad,
    flatten,
    init_estimator_state,
    init_model,
    init_moment_state,
    loss_scalar_full,
    phi_full,
    phi_values,
    similarity,
    sogclr_gradient,
    unflatten,
    update_u,
)
from towertune.oracle import SIZE_CAP


def _model(seed=0, d=5):
    return init_model(d_img=d, d_txt=d, hidden=6, d_embed=3, tau=0.07, seed=seed)


def _mirrored_model(seed=0, d=5):
    """Both towers share weights, so identical inputs give self-similarity 1."""
    from dataclasses import replace

    base = _model(seed=seed, d=d)
    return replace(base, W1_txt=base.W1_img, b1_txt=base.b1_img,
                   W2_txt=base.W2_img, b2_txt=base.b2_img)


def _corpus(n=8, d=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d))


class TestPhiFull:
    def test_single_sample_has_empty_sums(self):
        X, Z = _corpus(n=1)
        phi1, phi2 = phi_full(_model(), X, Z, LossConfig(variant="gcl"))
        np.testing.assert_array_equal(phi1, [0.0])
        np.testing.assert_array_equal(phi2, [0.0])

    def test_identical_embeddings_closed_form(self):
        """All-equal similarities leave every gap 0, so each phi is (n-1)/n."""
        n = 5
        X = np.tile(np.ones(5), (n, 1))
        Z = np.tile(np.ones(5), (n, 1))
        phi1, phi2 = phi_full(_model(seed=2), X, Z, LossConfig(variant="gcl"))
        np.testing.assert_allclose(phi1, (n - 1) / n, rtol=1e-15)
        np.testing.assert_allclose(phi2, (n - 1) / n, rtol=1e-15)

    @pytest.mark.parametrize("variant", ["gcl", "hgcl"])
    def test_matches_streaming_phi(self, variant):
        X, Z = _corpus(n=16, seed=3)
        model = _model(seed=3)
        cfg = LossConfig(variant=variant)
        phi1, phi2 = phi_full(model, X, Z, cfg)
        fast1, fast2 = phi_values(similarity(model, X, Z), cfg)
        np.testing.assert_allclose(phi1, fast1, rtol=1e-15)
        np.testing.assert_allclose(phi2, fast2, rtol=1e-15)

    def test_refuses_oversized_corpus(self):
        n = SIZE_CAP + 1
        X = np.ones((n, 2))
        Z = np.ones((n, 2))
        model = init_model(d_img=2, d_txt=2, hidden=3, d_embed=2, tau=0.07, seed=0)
        with pytest.raises(ConfigurationError, match="cap"):
            phi_full(model, X, Z, LossConfig(variant="gcl"))


class TestExactLossAndGrad:
    @pytest.mark.parametrize("variant", ["gcl", "hgcl"])
    def test_gradient_matches_finite_differences(self, variant):
        X, Z = _corpus(n=8, seed=4)
        model = _model(seed=4)
        cfg = LossConfig(variant=variant)
        report = exact_loss_and_grad(model, X, Z, cfg)

        def scalar(mod):
            return loss_scalar_full(mod, X, Z, cfg)

        numeric = finite_diff_grad(scalar, model, step=1e-5)
        rel = np.linalg.norm(report.grad - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-6

    def test_loss_matches_scalar_route(self):
        X, Z = _corpus(n=10, seed=5)
        model = _model(seed=5)
        cfg = LossConfig(variant="hgcl")
        report = exact_loss_and_grad(model, X, Z, cfg)
        np.testing.assert_allclose(report.loss, loss_scalar_full(model, X, Z, cfg),
                                   rtol=1e-12)

    def test_globally_inactive_hinge(self):
        """Distinct inputs through mirrored towers: the diagonal dominates, the
        hinge never fires, and the objective collapses to its closed form."""
        rng = np.random.default_rng(5)
        X = rng.standard_normal((6, 5))
        model = _mirrored_model(seed=5)
        cfg = LossConfig(variant="hgcl", margin=0.01)
        sim = similarity(model, X, X)
        off = ~np.eye(6, dtype=bool)
        gap_bound = (sim - np.diagonal(sim)[:, None])[off].max()
        assert gap_bound + cfg.margin <= 0
        report = exact_loss_and_grad(model, X, X, cfg)
        np.testing.assert_array_equal(report.grad, np.zeros_like(report.grad))
        n = 6
        expect = 2 * cfg.tau * np.log(cfg.epsilon + (n - 1) / n)
        np.testing.assert_allclose(report.loss, expect, rtol=1e-14)

    def test_duplicated_corpus_shifts_phi_by_closed_form(self):
        """Doubling every pair adds one zero-gap term per anchor under the
        divisor-n convention: phi' = phi + exp(l(0)/tau) / (2n)."""
        X, Z = _corpus(n=6, seed=7)
        model = _model(seed=7)
        for variant, zero_term in (("gcl", 1.0), ("hgcl", np.exp(0.1**2 / 0.07))):
            cfg = LossConfig(variant=variant, margin=0.1)
            phi1, _ = phi_full(model, X, Z, cfg)
            X2 = np.repeat(X, 2, axis=0)
            Z2 = np.repeat(Z, 2, axis=0)
            dup1, _ = phi_full(model, X2, Z2, cfg)
            expect = phi1 + zero_term / (2 * 6)
            np.testing.assert_allclose(dup1, np.repeat(expect, 2), rtol=1e-13)

    def test_report_invariants(self):
        X, Z = _corpus(n=9, seed=8)
        report = exact_loss_and_grad(_model(seed=8), X, Z, LossConfig(variant="gcl"))
        assert np.all(report.phi1 > 0)
        assert np.all(report.phi2 > 0)
        assert np.all(np.isfinite(report.grad))
        assert np.isfinite(report.loss)


class TestFullBatchEquivalence:
    @pytest.mark.parametrize("variant", ["gcl", "hgcl"])
    def test_streaming_gradient_equals_oracle(self, variant):
        """One full-rate full-batch estimator refresh makes the streaming
        gradient coincide with the exact one, coordinate by coordinate."""
        n = 16
        cfg = LossConfig(variant=variant)
        for seed in range(10):
            X, Z = _corpus(n=n, seed=100 + seed)
            model = _model(seed=100 + seed)
            batch = np.arange(n)
            sim = similarity(model, X, Z)
            phi1, phi2 = phi_values(sim, cfg)
            state = update_u(init_estimator_state(n), batch, phi1, phi2, gamma=1.0)
            streamed = sogclr_gradient(model, X, Z, batch, state, cfg, sim=sim)
            report = exact_loss_and_grad(model, X, Z, cfg)
            np.testing.assert_allclose(streamed, report.grad, atol=1e-10, rtol=0)


class TestDescentSanity:
    def test_small_exact_step_decreases_loss(self):
        hits = 0
        cfg = LossConfig(variant="gcl")
        for seed in range(10):
            X, Z = _corpus(n=8, seed=200 + seed)
            model = _model(seed=200 + seed)
            report = exact_loss_and_grad(model, X, Z, cfg)
            stepped = unflatten(model, flatten(model) - 1e-4 * report.grad)
            if loss_scalar_full(stepped, X, Z, cfg) < report.loss:
                hits += 1
        assert hits >= 9


class TestEstimationErrors:
    def test_exact_estimators_report_zero(self):
        X, Z = _corpus(n=6, seed=9)
        model = _model(seed=9)
        cfg = LossConfig(variant="gcl")
        report = exact_loss_and_grad(model, X, Z, cfg)
        est = init_estimator_state(6)
        est.u_x[:] = report.phi1
        est.u_z[:] = report.phi2
        ms = init_moment_state(flatten(model).size)
        ms.m[:] = report.grad
        out = estimation_errors(est, ms, report)
        assert out.u_err_x == 0.0
        assert out.u_err_z == 0.0
        assert out.m_err == 0.0

    def test_zero_state_definitions(self):
        X, Z = _corpus(n=6, seed=10)
        model = _model(seed=10)
        report = exact_loss_and_grad(model, X, Z, LossConfig(variant="gcl"))
        est = init_estimator_state(6)
        ms = init_moment_state(flatten(model).size)
        out = estimation_errors(est, ms, report)
        np.testing.assert_allclose(out.u_err_x, np.sum(report.phi1**2) / 12.0, rtol=1e-15)
        np.testing.assert_allclose(out.m_err, np.sum(report.grad**2), rtol=1e-15)
