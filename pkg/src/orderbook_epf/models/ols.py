"""Ordinary least squares on standardized columns, solved by QR."""
from __future__ import annotations

import warnings

import numpy as np

from ..errors import RankDeficientWarning
from .base import TrainedModel, standardization
from .config import ModelConfig

RIDGE_LAMBDA = 1e-8


def _solve(Z, yc):
    """Least squares for centered data; ridge fallback when Z is rank deficient."""
    n, p = Z.shape
    if p == 0:
        return np.zeros(0), False
    q, r = np.linalg.qr(Z, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.size and diag.min() > tol:
        return np.linalg.solve(r, q.T @ yc), False
    # augment with sqrt(lambda) * I and solve the stacked system by QR again
    aug = np.vstack([Z, np.sqrt(RIDGE_LAMBDA) * np.eye(p)])
    rhs = np.concatenate([yc, np.zeros(p)])
    q, r = np.linalg.qr(aug, mode="reduced")
    return np.linalg.solve(r, q.T @ rhs), True


def ols_fit(X, y, feature_names=None, config: ModelConfig | None = None) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, p) with n == len(y)")
    n, p = X.shape
    if n <= p:
        raise ValueError(f"OLS needs more rows than columns (got {n} x {p})")
    mean, scale = standardization(X)
    Z = (X - mean) / scale
    active = np.flatnonzero(X.std(axis=0) > 1e-12 * np.maximum(1.0, np.abs(mean)))
    y_mean = y.mean()
    beta = np.zeros(p)
    b_active, ridged = _solve(Z[:, active], y - y_mean)
    beta[active] = b_active
    if ridged:
        warnings.warn(
            f"collinear design ({len(active)} active columns); ridge fallback lambda={RIDGE_LAMBDA}",
            RankDeficientWarning,
            stacklevel=2,
        )
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    resid = Z @ beta + y_mean - y
    return TrainedModel(
        "ols",
        config or ModelConfig("ols"),
        {"beta": beta, "intercept": float(y_mean)},
        names,
        mean,
        scale,
        {"ridge_fallback": ridged, "train_rmse": float(np.sqrt(np.mean(resid ** 2)))},
    )


def coefficients(model: TrainedModel) -> tuple[np.ndarray, float]:
    """Slopes and intercept in the original (unstandardized) units."""
    slopes = model.params["beta"] / model.x_scale
    intercept = model.params["intercept"] - float(slopes @ model.x_mean)
    return slopes, intercept


def predict_standardized(model: TrainedModel, Z) -> np.ndarray:
    return Z @ model.params["beta"] + model.params["intercept"]
