"""Estimator-style wrappers over the functional training core.

These classes follow the fit/transform/predict convention with constructor
parameters stored verbatim, so they compose with standard model-selection and
pipeline tooling. The numerical work all happens in the functional modules;
each wrapper only validates inputs, derives seeds, and stores results on
``*_`` attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigurationError
from .losses import LossConfig
from .model import TwoTowerModel, forward, init_model, pretrain_toy, similarity
from .optim import ScheduleConfig, finetune_run, osr_run
from .validation import check_fitted, check_model_matches, check_paired_features


class PairEncoder(BaseEstimator, TransformerMixin):
    """Expose one tower of a fixed two-tower model as a feature transformer.

    Parameters
    ----------
    model : TwoTowerModel
        The encoder pair to draw from.
    tower : str
        "image" or "text"; selects which tower ``transform`` applies.
    """

    def __init__(self, model=None, tower="image"):
        self.model = model
        self.tower = tower

    def fit(self, X, y=None):
        if not isinstance(self.model, TwoTowerModel):
            raise ConfigurationError("PairEncoder needs a TwoTowerModel")
        if self.tower not in ("image", "text"):
            raise ConfigurationError(
                f"tower must be 'image' or 'text', got {self.tower!r}"
            )
        self.n_features_in_ = (
            self.model.d_img if self.tower == "image" else self.model.d_txt
        )
        return self

    def transform(self, X):
        check_fitted(self, "n_features_in_")
        X = np.asarray(X, dtype=np.float64)
        return forward(self.model, X, self.tower)


class ContrastivePretrainer(BaseEstimator):
    """Train a fresh two-tower encoder on paired features with the standard
    symmetric minibatch contrastive objective.

    ``fit(X, Z)`` takes images as X and the paired texts as Z. The fitted
    encoder is available as ``model_``.
    """

    def __init__(self, hidden=32, d_embed=16, tau=0.07, epochs=30,
                 batch_size=64, lr=1e-3, seed=0):
        self.hidden = hidden
        self.d_embed = d_embed
        self.tau = tau
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, Z):
        X, Z = check_paired_features(X, Z)
        start = init_model(
            d_img=X.shape[1], d_txt=Z.shape[1], hidden=self.hidden,
            d_embed=self.d_embed, tau=self.tau, seed=self.seed,
        )
        self.model_ = pretrain_toy(
            start, X, Z, epochs=self.epochs,
            batch_size=min(self.batch_size, X.shape[0]),
            lr=self.lr, seed=self.seed,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_fitted(self, "model_")
        return forward(self.model_, np.asarray(X, dtype=np.float64), "image")

    def score(self, X, Z):
        """Mean of the two direction recall@1 values on held-out pairs."""
        from .harness.metrics import recall_at_k_from_block

        check_fitted(self, "model_")
        X, Z = check_paired_features(X, Z)
        r1, r2 = recall_at_k_from_block(similarity(self.model_, X, Z), 1)
        return 0.5 * (r1 + r2)


class StatisticsRecovery(BaseEstimator):
    """Recover optimizer statistics for a frozen encoder by replaying the
    streaming loop without moving the weights.

    After ``fit(X, Z)`` the accumulated state is on ``moments_`` and
    ``estimators_``; the weights of ``model`` are untouched.
    """

    def __init__(self, model=None, variant="hgcl", margin=0.1, epsilon=1e-8,
                 gamma=0.9, epochs=5, batch_size=256, seed=0,
                 beta1=0.9, beta2=0.98, weight_decay=0.02):
        self.model = model
        self.variant = variant
        self.margin = margin
        self.epsilon = epsilon
        self.gamma = gamma
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay

    def fit(self, X, Z):
        X, Z = check_paired_features(X, Z)
        check_model_matches(self.model, X, Z)
        cfg = LossConfig(variant=self.variant, tau=self.model.tau,
                         epsilon=self.epsilon, margin=self.margin)
        gamma_cfg = ScheduleConfig(gamma_kind="constant", gamma_floor=self.gamma)
        result = osr_run(
            self.model, X, Z, cfg, epochs=self.epochs,
            batch_size=min(self.batch_size, X.shape[0]), seed=self.seed,
            gamma_cfg=gamma_cfg, beta1=self.beta1, beta2=self.beta2,
            weight_decay=self.weight_decay,
        )
        self.moments_ = result.moments
        self.estimators_ = result.estimators
        self.steps_ = result.steps
        return self


class ContrastiveFineTuner(BaseEstimator):
    """Fine-tune a pretrained encoder with the estimator-weighted global
    objective, optionally warm-starting the optimizer state by recovery.

    ``predict(X)`` retrieves, for each image, the index of the best-matching
    text from the fitted corpus, which makes retrieval quality directly
    scoreable.
    """

    def __init__(self, model=None, variant="hgcl", margin=0.1, epsilon=1e-8,
                 lr_base=1e-5, lr_kind="cosine", gamma_kind="cosine_to_floor",
                 gamma_floor=0.9, epochs=5, batch_size=256, seed=0,
                 recovery_epochs=5, recovery_gamma=0.9,
                 beta1=0.9, beta2=0.98, weight_decay=0.02):
        self.model = model
        self.variant = variant
        self.margin = margin
        self.epsilon = epsilon
        self.lr_base = lr_base
        self.lr_kind = lr_kind
        self.gamma_kind = gamma_kind
        self.gamma_floor = gamma_floor
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.recovery_epochs = recovery_epochs
        self.recovery_gamma = recovery_gamma
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay

    def fit(self, X, Z):
        X, Z = check_paired_features(X, Z)
        check_model_matches(self.model, X, Z)
        cfg = LossConfig(variant=self.variant, tau=self.model.tau,
                         epsilon=self.epsilon, margin=self.margin)
        batch = min(self.batch_size, X.shape[0])
        est_init = None
        ms_init = None
        if self.recovery_epochs > 0:
            recovered = osr_run(
                self.model, X, Z, cfg, epochs=self.recovery_epochs,
                batch_size=batch, seed=self.seed,
                gamma_cfg=ScheduleConfig(gamma_kind="constant",
                                         gamma_floor=self.recovery_gamma),
                beta1=self.beta1, beta2=self.beta2,
                weight_decay=self.weight_decay,
            )
            est_init = recovered.estimators
            ms_init = recovered.moments
        schedules = ScheduleConfig(
            lr_base=self.lr_base, lr_kind=self.lr_kind,
            gamma_kind=self.gamma_kind, gamma_floor=self.gamma_floor,
        )
        result = finetune_run(
            self.model, X, Z, cfg, schedules, epochs=self.epochs,
            batch_size=batch, seed=self.seed + 1,
            est_init=est_init, ms_init=ms_init,
        )
        self.model_ = result.model
        self.moments_ = result.moments
        self.estimators_ = result.estimators
        self.train_losses_ = result.train_losses
        self.text_embeddings_ = forward(result.model, Z, "text")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Index of the closest fitted text for each image row, ties to the
        lower index."""
        check_fitted(self, "model_")
        X = np.asarray(X, dtype=np.float64)
        sim = forward(self.model_, X, "image") @ self.text_embeddings_.T
        return np.argmax(sim, axis=1)

    def score(self, X, Z):
        """Mean of the two direction recall@1 values on held-out pairs."""
        from .harness.metrics import recall_at_k_from_block

        check_fitted(self, "model_")
        X, Z = check_paired_features(X, Z)
        r1, r2 = recall_at_k_from_block(similarity(self.model_, X, Z), 1)
        return 0.5 * (r1 + r2)
