"""Retrieval and similarity-distribution metrics.

Retrieval uses deterministic ranking: among equal similarities the lower
index wins, so recall numbers are reproducible bit for bit across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datagen import PairedDataset
from ..errors import ConfigurationError
from ..model import TwoTowerModel, similarity


def _rank_of_true_pair(sim: np.ndarray) -> np.ndarray:
    """Zero-based rank of each row's diagonal entry within its row, with ties
    resolved toward the lower column index."""
    n = sim.shape[0]
    diag = np.diagonal(sim)
    above = (sim > diag[:, None]).sum(axis=1)
    cols = np.arange(n)
    tied_before = ((sim == diag[:, None]) & (cols[None, :] < cols[:, None])).sum(axis=1)
    return above + tied_before


def recall_at_k_from_block(sim: np.ndarray, k: int) -> tuple[float, float]:
    """Recall@k in both retrieval directions from a full similarity block."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1] or sim.shape[0] < 1:
        raise ConfigurationError(
            f"similarity block must be square and non-empty, got {sim.shape}"
        )
    n = sim.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in [1, {n}], got {k}")
    r_i2t = float(np.mean(_rank_of_true_pair(sim) < k))
    r_t2i = float(np.mean(_rank_of_true_pair(sim.T) < k))
    return r_i2t, r_t2i


def eval_recall_at_k(
    model: TwoTowerModel, testset: PairedDataset, k: int = 1
) -> tuple[float, float]:
    """Held-out retrieval quality.

    Returns:
        (image-to-text recall@k, text-to-image recall@k), each the fraction of
        anchors whose true counterpart ranks in the top k.
    """
    if testset.n < 1:
        raise ConfigurationError("testset must be non-empty")
    sim = similarity(model, testset.images, testset.texts)
    return recall_at_k_from_block(sim, k)


@dataclass(frozen=True)
class SimilarityStats:
    """Pooled similarity statistics over retrieved negatives.

    False negatives are same-concept entries found among each anchor's top-k
    retrieved non-matching texts; true negatives are different-concept entries
    in the bottom decile of the same ranking; tp_mean averages the positive
    pairs themselves. ``fn_empty`` flags a corpus with no same-concept
    negatives (one concept per sample), in which case the fn fields are zero
    rather than NaN.
    """

    fn_mean: float
    fn_std: float
    tp_mean: float
    tn_mean: float
    fn_count: int
    fn_empty: bool


def similarity_stats_from_block(
    sim: np.ndarray, concepts: np.ndarray, top_k: int = 5
) -> SimilarityStats:
    sim = np.asarray(sim, dtype=np.float64)
    concepts = np.asarray(concepts)
    n = sim.shape[0]
    if sim.shape != (n, n) or concepts.shape != (n,):
        raise ConfigurationError(
            f"need a square block with matching labels, got {sim.shape} and "
            f"{concepts.shape}"
        )
    if top_k < 1:
        raise ConfigurationError(f"top_k must be positive, got {top_k}")
    if n < 2:
        raise ConfigurationError("similarity statistics need at least two pairs")

    same = concepts[:, None] == concepts[None, :]
    fn_pool = []
    tn_pool = []
    n_neg = n - 1
    take = min(top_k, n_neg)
    decile_start = int(np.floor(0.9 * n_neg))
    for i in range(n):
        others = np.delete(np.arange(n), i)
        # stable sort on negated similarity: lower index wins ties
        order = others[np.argsort(-sim[i, others], kind="stable")]
        top = order[:take]
        fn_pool.append(sim[i, top[same[i, top]]])
        bottom = order[decile_start:]
        tn_pool.append(sim[i, bottom[~same[i, bottom]]])

    fn_values = np.concatenate(fn_pool) if fn_pool else np.empty(0)
    tn_values = np.concatenate(tn_pool) if tn_pool else np.empty(0)
    fn_empty = fn_values.size == 0
    return SimilarityStats(
        fn_mean=0.0 if fn_empty else float(fn_values.mean()),
        fn_std=0.0 if fn_empty else float(fn_values.std()),
        tp_mean=float(np.diagonal(sim).mean()),
        tn_mean=float(tn_values.mean()) if tn_values.size else 0.0,
        fn_count=int(fn_values.size),
        fn_empty=fn_empty,
    )


def fn_similarity_stats(
    model: TwoTowerModel, dataset: PairedDataset, top_k: int = 5
) -> SimilarityStats:
    """Similarity-distribution statistics of retrieved negatives under a model.

    For each image anchor, all non-matching texts are ranked by similarity;
    same-concept entries among the top ``top_k`` are the false negatives whose
    pooled mean and spread this reports.
    """
    sim = similarity(model, dataset.images, dataset.texts)
    return similarity_stats_from_block(sim, dataset.concepts, top_k=top_k)
