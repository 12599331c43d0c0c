from .base import TrainedModel, load_model, loads_model, dumps_model, predict, save_model
from .config import MLPParams, ModelConfig, RFParams, load_grid
from .forest import rf_fit, rf_importance, select_features
from .mlp import mlp_fit
from .ols import ols_fit


def fit(config: ModelConfig, X, y, seed: int = 0, feature_names=None) -> TrainedModel:
    """Train the family named by ``config``."""
    config.validate()
    if config.family == "ols":
        return ols_fit(X, y, feature_names, config)
    if config.family == "random_forest":
        return rf_fit(X, y, config, seed, feature_names)
    return mlp_fit(X, y, config, seed, feature_names)


__all__ = [
    "MLPParams", "ModelConfig", "RFParams", "TrainedModel", "dumps_model", "fit", "load_grid",
    "load_model", "loads_model", "mlp_fit", "ols_fit", "predict", "rf_fit", "rf_importance",
    "save_model", "select_features",
]
