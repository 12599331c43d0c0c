"""Hyperparameter bundles and the parsing of grid files."""
from __future__ import annotations

import dataclasses
import itertools
import json
import re
from dataclasses import dataclass, field

from ..errors import ConfigError

FAMILIES = ("ols", "random_forest", "mlp")
ACTIVATIONS = ("tanh", "relu", "identity")
OPTIMIZERS = ("sgd", "rmsprop", "adam")
DEFAULT_LR = {"adam": 1e-3, "rmsprop": 1e-3, "sgd": 1e-2}

_REPEAT = re.compile(r"^\s*\[\s*([^\[\]]*)\s*\]\s*(?:\*\s*(\d+))?\s*$")


def parse_layer_list(value, cast=float) -> tuple:
    """Parse list notation as printed in hyperparameter tables.

    Accepts a list, a number, or strings such as ``"[5, 5, 5]"``,
    ``"[25] * 25"`` or ``"[]"``.
    """
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    if isinstance(value, (int, float)):
        return (cast(value),)
    if not isinstance(value, str):
        raise ConfigError(f"cannot parse list from {value!r}")
    m = _REPEAT.match(value)
    if not m:
        raise ConfigError(f"cannot parse list notation {value!r}")
    body, times = m.group(1), m.group(2)
    items = [cast(x) for x in body.split(",") if x.strip()]
    return tuple(items * (int(times) if times else 1))


@dataclass(frozen=True)
class RFParams:
    n_trees: int = 100
    feature_fraction: float = 0.25
    min_node_fraction: float = 0.01

    def validate(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if not 0 < self.feature_fraction <= 1:
            raise ConfigError("feature_fraction must be in (0, 1]")
        # 1.0 is accepted as the degenerate no-split setting
        if not 0 <= self.min_node_fraction <= 1:
            raise ConfigError("min_node_fraction must be in [0, 1]")


@dataclass(frozen=True)
class MLPParams:
    layer_sizes: tuple = (5, 5, 5)
    activation: str = "tanh"
    optimizer: str = "rmsprop"
    epochs: int = 100
    batch_size: int = 128
    dropout: tuple = ()
    batch_norm: bool = False
    learning_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", parse_layer_list(self.layer_sizes, int))
        drop = parse_layer_list(self.dropout, float) if self.dropout != () else ()
        if not drop:
            drop = (0.0,) * len(self.layer_sizes)
        # trailing zero rates beyond the last hidden layer are no-ops
        n = len(self.layer_sizes)
        if len(drop) > n and not any(drop[n:]):
            drop = drop[:n]
        object.__setattr__(self, "dropout", drop)

    @property
    def lr(self) -> float:
        return DEFAULT_LR[self.optimizer] if self.learning_rate is None else self.learning_rate

    def validate(self):
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError("layer sizes must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if len(self.dropout) != len(self.layer_sizes):
            raise ConfigError(
                f"dropout has {len(self.dropout)} rates for {len(self.layer_sizes)} hidden layers"
            )
        if any(not 0 <= p < 1 for p in self.dropout):
            raise ConfigError("dropout rates must be in [0, 1)")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass(frozen=True)
class ModelConfig:
    """One point of a hyperparameter grid.

    ``name`` groups grid points that compete for the same result row;
    ``features`` is ``"all"``, ``"no_curve"`` or ``"top:N"`` (the N most
    important features of the best random forest).
    """

    family: str
    name: str = ""
    features: str = "all"
    rf: RFParams = field(default_factory=RFParams)
    mlp: MLPParams = field(default_factory=MLPParams)

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.family)

    def validate(self) -> "ModelConfig":
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.features not in ("all", "no_curve") and not re.fullmatch(r"top:\d+", self.features):
            raise ConfigError(f"features must be all, no_curve or top:N, got {self.features!r}")
        if self.family == "random_forest":
            self.rf.validate()
        if self.family == "mlp":
            self.mlp.validate()
        return self

    @property
    def top_n(self) -> int | None:
        return int(self.features.split(":")[1]) if self.features.startswith("top:") else None

    def to_dict(self) -> dict:
        d = {"family": self.family, "name": self.name, "features": self.features}
        if self.family == "random_forest":
            d["rf"] = dataclasses.asdict(self.rf)
        if self.family == "mlp":
            m = dataclasses.asdict(self.mlp)
            m["layer_sizes"] = list(m["layer_sizes"])
            m["dropout"] = list(m["dropout"])
            d["mlp"] = m
        return d

    def label(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        try:
            rf = RFParams(**raw.pop("rf", {}))
            mlp = MLPParams(**raw.pop("mlp", {}))
            return cls(rf=rf, mlp=mlp, **raw).validate()
        except TypeError as exc:
            raise ConfigError(f"bad model config {raw!r}: {exc}") from exc


def expand_grid(entry: dict) -> list[ModelConfig]:
    """Expand an entry whose ``grid`` key maps dotted parameter paths to value lists."""
    entry = dict(entry)
    grid = entry.pop("grid", None)
    if not grid:
        return [ModelConfig.from_dict(entry)]
    keys = sorted(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        raw = json.loads(json.dumps(entry))
        for key, val in zip(keys, combo):
            section, _, param = key.partition(".")
            if param:
                raw.setdefault(section, {})[param] = val
            else:
                raw[section] = val
        out.append(ModelConfig.from_dict(raw))
    return out


def load_grid(text: str) -> list[ModelConfig]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid file is not valid JSON: {exc}") from exc
    entries = raw.get("models") if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not entries:
        raise ConfigError("grid file needs a non-empty 'models' list")
    configs = []
    for e in entries:
        if not isinstance(e, dict):
            raise ConfigError(f"grid entry must be an object, got {e!r}")
        configs.extend(expand_grid(e))
    return configs
