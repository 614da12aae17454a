"""Input validation shared by the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .errors import ConfigurationError, EstimatorStateError
from .model import TwoTowerModel


def check_paired_features(X, Z) -> tuple[np.ndarray, np.ndarray]:
    """Validate an (images, texts) pair of feature matrices.

    Both must be 2-D, finite, with the same number of rows; returned as
    float64 arrays.
    """
    if Z is None:
        raise ConfigurationError(
            "paired text features are required (pass texts as the second argument)"
        )
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    Z = check_array(Z, dtype=np.float64, ensure_2d=True)
    if X.shape[0] != Z.shape[0]:
        raise ConfigurationError(
            f"images and texts must pair up row for row, got {X.shape[0]} "
            f"and {Z.shape[0]} rows"
        )
    return X, Z


def check_model_matches(model: TwoTowerModel, X: np.ndarray, Z: np.ndarray) -> None:
    if not isinstance(model, TwoTowerModel):
        raise ConfigurationError(
            f"model must be a TwoTowerModel, got {type(model).__name__}"
        )
    if model.d_img != X.shape[1] or model.d_txt != Z.shape[1]:
        raise ConfigurationError(
            f"model expects feature widths ({model.d_img}, {model.d_txt}), "
            f"data has ({X.shape[1]}, {Z.shape[1]})"
        )


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise EstimatorStateError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
