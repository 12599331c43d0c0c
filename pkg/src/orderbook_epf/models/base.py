"""Fitted-model container, prediction dispatch and model files."""
from __future__ import annotations

import io
import json
import pickle
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from .config import ModelConfig

MODEL_FORMAT = "orderbook-epf-model"
MODEL_VERSION = 1


@dataclass(eq=False)
class TrainedModel:
    family: str
    config: ModelConfig
    params: dict
    feature_names: list
    x_mean: np.ndarray
    x_scale: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        return (X - self.x_mean) / self.x_scale


def standardization(X) -> tuple[np.ndarray, np.ndarray]:
    """Column means and scales; constant columns keep scale 1."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    sd = np.where(const, 1.0, sd)
    return mean, sd


def predict(model: TrainedModel, X) -> np.ndarray:
    from . import forest, mlp, ols

    Z = model.standardize(X)
    if model.family == "ols":
        out = ols.predict_standardized(model, Z)
    elif model.family == "random_forest":
        out = forest.predict_standardized(model, Z)
    elif model.family == "mlp":
        out = mlp.predict_standardized(model, Z)
    else:
        raise ValueError(f"unknown model family {model.family!r}")
    return np.asarray(out, dtype=np.float64)


def dumps_model(model: TrainedModel) -> bytes:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.family,
        "config": model.config.label(),  # JSON text keeps the bytes stable across reloads
        "params": model.params,
        "feature_names": list(model.feature_names),
        "x_mean": model.x_mean,
        "x_scale": model.x_scale,
        "metadata": model.metadata,
    }
    buf = io.BytesIO()
    pickle.dump(payload, buf, protocol=4)
    return buf.getvalue()


def loads_model(data: bytes) -> TrainedModel:
    payload = pickle.loads(data)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if payload["version"] != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {payload['version']}")
    return TrainedModel(
        payload["family"],
        ModelConfig.from_dict(json.loads(payload["config"])),
        payload["params"],
        payload["feature_names"],
        payload["x_mean"],
        payload["x_scale"],
        payload["metadata"],
    )


def save_model(model: TrainedModel, path) -> None:
    from ..data_io import atomic_write_bytes

    atomic_write_bytes(path, dumps_model(model))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
