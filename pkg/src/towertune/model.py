"""Toy two-tower encoder: one hidden tanh layer per tower, unit-norm outputs.

The image tower maps (B, d_img) raw features to (B, d_embed) embeddings, the
text tower maps (B, d_txt) likewise, and similarity is the plain dot product
of the normalized embeddings. Parameters live in small numpy arrays; a
deterministic flatten/unflatten bijection exposes them as one float64 vector
for the optimizers and the finite-difference checker.

The backward pass is a hand-derived chain rule (including the exact Jacobian
of the row normalization). It is the object under test for the gradient
checks, so keep it free of shortcuts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NormalizationError, NumericError, TrainingError
from .losses import mbcl_loss


@dataclass
class TwoTowerModel:
    W1_img: np.ndarray
    b1_img: np.ndarray
    W2_img: np.ndarray
    b2_img: np.ndarray
    W1_txt: np.ndarray
    b1_txt: np.ndarray
    W2_txt: np.ndarray
    b2_txt: np.ndarray
    tau: float

    @property
    def d_img(self) -> int:
        return self.W1_img.shape[0]

    @property
    def d_txt(self) -> int:
        return self.W1_txt.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1_img.shape[1]

    @property
    def d_embed(self) -> int:
        return self.W2_img.shape[1]

    @property
    def param_count(self) -> int:
        return sum(
            a.size
            for a in (
                self.W1_img, self.b1_img, self.W2_img, self.b2_img,
                self.W1_txt, self.b1_txt, self.W2_txt, self.b2_txt,
            )
        )


def init_model(
    d_img: int, d_txt: int, hidden: int, d_embed: int, tau: float = 0.07, seed: int = 0
) -> TwoTowerModel:
    """Fresh model with weights ~ N(0, 1/fan_in) and zero biases.

    Args:
        tau: softmax temperature attached to the model, must be positive.
            The default of 0.07 is the conventional value for contrastive
            retrieval encoders and is recorded with every run.
    """
    for name, value in (("d_img", d_img), ("d_txt", d_txt),
                        ("hidden", hidden), ("d_embed", d_embed)):
        if value < 1:
            raise ConfigurationError(f"{name} must be positive, got {value}")
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    rng = np.random.default_rng(seed)

    def layer(d_in, d_out):
        return rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)

    return TwoTowerModel(
        W1_img=layer(d_img, hidden),
        b1_img=np.zeros(hidden),
        W2_img=layer(hidden, d_embed),
        b2_img=np.zeros(d_embed),
        W1_txt=layer(d_txt, hidden),
        b1_txt=np.zeros(hidden),
        W2_txt=layer(hidden, d_embed),
        b2_txt=np.zeros(d_embed),
        tau=tau,
    )


_FIELDS = ("W1_img", "b1_img", "W2_img", "b2_img",
           "W1_txt", "b1_txt", "W2_txt", "b2_txt")


def flatten(model: TwoTowerModel) -> np.ndarray:
    """Concatenate all parameters into one float64 vector.

    Layout: W1_img, b1_img, W2_img, b2_img, then the text tower in the same
    order, each raveled C-contiguously. ``unflatten`` inverts this exactly.
    """
    return np.concatenate([getattr(model, f).ravel() for f in _FIELDS])


def unflatten(template: TwoTowerModel, omega: np.ndarray) -> TwoTowerModel:
    """Rebuild a model from a flat vector, using ``template`` for shapes and tau.

    The returned model's arrays are reshaped views into ``omega``; treat them
    as read-only.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 1 or omega.size != template.param_count:
        raise ConfigurationError(
            f"parameter vector has shape {omega.shape}, expected "
            f"({template.param_count},)"
        )
    parts = {}
    offset = 0
    for f in _FIELDS:
        shape = getattr(template, f).shape
        size = int(np.prod(shape))
        parts[f] = omega[offset:offset + size].reshape(shape)
        offset += size
    return TwoTowerModel(tau=template.tau, **parts)


def _tower(model: TwoTowerModel, tower: str):
    if tower == "image":
        return model.W1_img, model.b1_img, model.W2_img, model.b2_img
    if tower == "text":
        return model.W1_txt, model.b1_txt, model.W2_txt, model.b2_txt
    raise ConfigurationError(f"tower must be 'image' or 'text', got {tower!r}")


def _forward_full(model: TwoTowerModel, X: np.ndarray, tower: str):
    """Forward pass returning intermediates for the backward pass."""
    W1, b1, W2, b2 = _tower(model, tower)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != W1.shape[0]:
        raise ConfigurationError(
            f"{tower} input has shape {X.shape}, expected (batch, {W1.shape[0]})"
        )
    hidden = np.tanh(X @ W1 + b1)
    raw = hidden @ W2 + b2
    norms = np.linalg.norm(raw, axis=1)
    if raw.size and (not np.all(np.isfinite(norms)) or np.any(norms == 0.0)):
        bad = int(np.flatnonzero(~np.isfinite(norms) | (norms == 0.0))[0])
        raise NormalizationError(
            f"{tower} embedding row {bad} has norm {norms[bad]!r}; cannot normalize"
        )
    embedded = raw / norms[:, None] if raw.size else raw
    return X, hidden, raw, norms, embedded


def forward(model: TwoTowerModel, X: np.ndarray, tower: str) -> np.ndarray:
    """Embed a batch of raw features with one tower.

    Returns:
        (batch, d_embed) float64 matrix with unit rows (within 1e-12).
        An empty batch embeds to an empty (0, d_embed) matrix.
    """
    return _forward_full(model, X, tower)[4]


def encode_pairs(model: TwoTowerModel, images: np.ndarray, texts: np.ndarray):
    """Both towers at once; convenience for similarity computations."""
    return forward(model, images, "image"), forward(model, texts, "text")


def similarity(model: TwoTowerModel, images: np.ndarray, texts: np.ndarray) -> np.ndarray:
    """Pairwise similarity block S[i, j] = <f(image_i), g(text_j)>."""
    e_img, e_txt = encode_pairs(model, images, texts)
    return e_img @ e_txt.T


def _tower_backward(X, hidden, raw, norms, embedded, d_embedded, W2):
    """Gradients of a scalar through one tower, given d loss / d embedding."""
    # Normalization Jacobian: d/d raw of raw/|raw| applied to the upstream.
    scale = (d_embedded * embedded).sum(axis=1, keepdims=True)
    d_raw = (d_embedded - scale * embedded) / norms[:, None]
    dW2 = hidden.T @ d_raw
    db2 = d_raw.sum(axis=0)
    d_hidden = d_raw @ W2.T
    d_pre = d_hidden * (1.0 - hidden * hidden)
    dW1 = X.T @ d_pre
    db1 = d_pre.sum(axis=0)
    return dW1, db1, dW2, db2


def backward(
    model: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    upstream: np.ndarray,
) -> np.ndarray:
    """Exact gradient of L = sum(upstream * S) with respect to all parameters.

    Args:
        upstream: d L / d S, shape (n_images, n_texts). The caller encodes the
            loss entirely in this matrix; similarity is bilinear in the two
            embedding batches, so this is fully general for losses that
            depend on parameters only through S.

    Returns:
        Flat float64 gradient in ``flatten`` layout.
    """
    Xi, h_i, raw_i, norm_i, e_i = _forward_full(model, images, "image")
    Xt, h_t, raw_t, norm_t, e_t = _forward_full(model, texts, "text")
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (e_i.shape[0], e_t.shape[0]):
        raise ConfigurationError(
            f"upstream has shape {upstream.shape}, expected "
            f"({e_i.shape[0]}, {e_t.shape[0]})"
        )
    if not np.all(np.isfinite(upstream)):
        bad = np.argwhere(~np.isfinite(upstream))[0]
        raise NumericError(
            f"upstream entry ({bad[0]}, {bad[1]}) is not finite"
        )
    d_e_img = upstream @ e_t
    d_e_txt = upstream.T @ e_i
    gi = _tower_backward(Xi, h_i, raw_i, norm_i, e_i, d_e_img, model.W2_img)
    gt = _tower_backward(Xt, h_t, raw_t, norm_t, e_t, d_e_txt, model.W2_txt)
    return np.concatenate([a.ravel() for a in gi + gt])


def finite_diff_grad(loss_fn, model: TwoTowerModel, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of the model.

    Args:
        loss_fn: callable mapping a TwoTowerModel to a float.
        step: symmetric perturbation size.

    O(2 * param_count) forward evaluations; intended for small test models.
    """
    if not step > 0:
        raise ConfigurationError(f"step must be positive, got {step}")
    omega = flatten(model)
    grad = np.empty_like(omega)
    for idx in range(omega.size):
        bump = np.zeros_like(omega)
        bump[idx] = step
        hi = loss_fn(unflatten(model, omega + bump))
        lo = loss_fn(unflatten(model, omega - bump))
        grad[idx] = (hi - lo) / (2.0 * step)
    return grad


def pretrain_toy(
    model: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
) -> TwoTowerModel:
    """Produce a reference starting point by minimizing the symmetric
    minibatch InfoNCE objective with plain Adam (bias-corrected, no weight
    decay).

    Batches are per-epoch shuffles with the trailing partial batch dropped;
    batch_size of at least n uses the whole set each step. epochs=0 returns
    the input model unchanged.

    Raises:
        TrainingError: if the loss goes non-finite, reporting the step index.
    """
    if epochs < 0:
        raise ConfigurationError(f"epochs must be non-negative, got {epochs}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be positive, got {batch_size}")
    if not lr > 0:
        raise ConfigurationError(f"lr must be positive, got {lr}")
    if epochs == 0:
        return model

    n = images.shape[0]
    b = min(batch_size, n)
    rng = np.random.default_rng(seed)
    omega = flatten(model).copy()
    m = np.zeros_like(omega)
    v = np.zeros_like(omega)
    delta = 1e-8
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n - b + 1, b):
            batch = order[start:start + b]
            current = unflatten(model, omega)
            sim = similarity(current, images[batch], texts[batch])
            loss, d_sim = mbcl_loss(sim, model.tau)
            if not np.isfinite(loss):
                raise TrainingError("pretraining loss went non-finite", step=t)
            grad = backward(current, images[batch], texts[batch], d_sim)
            t += 1
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            omega = omega - lr * m_hat / (np.sqrt(v_hat) + delta)
    return unflatten(model, omega.copy())


def rescale_output_rms(
    model: TwoTowerModel,
    images: np.ndarray,
    texts: np.ndarray,
    target: float,
) -> TwoTowerModel:
    """Scale each tower's output layer so the root-mean-square norm of the
    raw (pre-normalization) embeddings over the given corpus equals target.

    The rows are normalized before any similarity is computed, so this leaves
    every similarity the model produces unchanged. What it does change is
    sensitivity: gradients entering a tower pass through the normalization
    Jacobian with a factor 1/|raw|, so driving the raw norms down makes a
    fixed optimizer step move the rankings more. Pretraining inflates the raw
    norms as it sharpens similarities; resetting them hands fine-tuning a
    starting point with a controlled step-to-motion ratio.

    Returns a new model; the input is left untouched.
    """
    if not target > 0.0:
        raise ConfigurationError(f"target must be positive, got {target}")
    # Fresh buffer, so scaling the views unflatten hands back is safe.
    out = unflatten(model, flatten(model))
    for X, tower in ((images, "image"), (texts, "text")):
        raw = _forward_full(out, X, tower)[2]
        rms = float(np.sqrt(np.mean(np.sum(raw * raw, axis=1))))
        if not np.isfinite(rms) or rms == 0.0:
            raise NormalizationError(
                f"{tower} raw embeddings have RMS norm {rms!r}; cannot rescale"
            )
        _, _, W2, b2 = _tower(out, tower)
        W2 *= target / rms
        b2 *= target / rms
    return out
