"""Feed-forward network trained by mini-batch gradient descent.

Hidden layer i computes ``act(bn(a @ W_i + b_i))`` followed by inverted
dropout with rate ``dropout[i]``; the output layer is linear with one unit.
Inputs and target are standardized with training statistics; the loss is the
mean squared error on the standardized target.

Trainable weights live in one flat vector (layer arrays are views into it),
so an optimizer step is a handful of vector operations.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import Diverged
from .base import TrainedModel, standardization
from .config import MLPParams, ModelConfig
from .forest import canonical_order

BN_MOMENTUM = 0.99
BN_EPS = 1e-5
OPT_EPS = 1e-7
RMSPROP_RHO = 0.9
ADAM_BETAS = (0.9, 0.999)


def _layout(n_in: int, cfg: MLPParams):
    """(layer, name, shape) for every trainable array, in flat-vector order."""
    out = []
    fan_in = n_in
    for i, width in enumerate(cfg.layer_sizes):
        out.append((i, "W", (fan_in, width)))
        out.append((i, "b", (width,)))
        if cfg.batch_norm:
            out.append((i, "gamma", (width,)))
            out.append((i, "beta", (width,)))
        fan_in = width
    k = len(cfg.layer_sizes)
    out.append((k, "W", (fan_in, 1)))
    out.append((k, "b", (1,)))
    return out


def unflatten(flat: np.ndarray, n_in: int, cfg: MLPParams) -> list[dict]:
    """Per-layer dicts of views into ``flat``."""
    layers = [dict() for _ in range(len(cfg.layer_sizes) + 1)]
    pos = 0
    for i, name, shape in _layout(n_in, cfg):
        size = math.prod(shape)
        layers[i][name] = flat[pos:pos + size].reshape(shape)
        pos += size
    return layers


def n_params(n_in: int, cfg: MLPParams) -> int:
    return sum(math.prod(shape) for _, _, shape in _layout(n_in, cfg))


def init_params(n_in: int, cfg: MLPParams, rng: np.random.Generator) -> np.ndarray:
    """Uniform fan-in scaled weights, zero biases, unit BN scales."""
    flat = np.zeros(n_params(n_in, cfg))
    layers = unflatten(flat, n_in, cfg)
    gain = 6.0 if cfg.activation == "relu" else 3.0
    for layer in layers:
        fan_in = layer["W"].shape[0]
        limit = math.sqrt(gain / fan_in)
        layer["W"][...] = rng.uniform(-limit, limit, size=layer["W"].shape)
        if "gamma" in layer:
            layer["gamma"][...] = 1.0
    return flat


def _act(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(z, h, kind):
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


def forward(layers, running, X, cfg: MLPParams, train: bool, rng=None):
    """Network output (n,) and the caches backprop needs.

    ``running`` holds per-layer (mean, var) batch-norm statistics; in training
    mode batch statistics are used instead. Dropout is applied only when
    ``train`` is true and ``rng`` is given.
    """
    caches = []
    a = X
    for i, p_drop in enumerate(cfg.dropout):
        L = layers[i]
        z = a @ L["W"] + L["b"]
        c = {"a_in": a}
        if cfg.batch_norm:
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mu, var = running[i]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv
            zz = L["gamma"] * xhat + L["beta"]
            c.update(xhat=xhat, inv=inv, mu=mu, var=var)
        else:
            zz = z
        h = _act(zz, cfg.activation)
        c.update(zz=zz, h=h)
        if train and rng is not None and p_drop > 0:
            mask = (rng.random(h.shape) >= p_drop) / (1.0 - p_drop)
            h = h * mask
            c["mask"] = mask
        caches.append(c)
        a = h
    out = a @ layers[-1]["W"] + layers[-1]["b"]
    caches.append({"a_in": a})
    return out[:, 0], caches


def backward(layers, caches, d_out, cfg: MLPParams, grads):
    """Accumulate gradients of the loss into the ``grads`` layer views."""
    last = caches[-1]
    d = d_out[:, None]
    grads[-1]["W"][...] = last["a_in"].T @ d
    grads[-1]["b"][...] = d.sum(axis=0)
    da = d @ layers[-1]["W"].T
    for i in range(len(cfg.layer_sizes) - 1, -1, -1):
        c = caches[i]
        if "mask" in c:
            da = da * c["mask"]
        dzz = da * _act_grad(c["zz"], c["h"], cfg.activation)
        if cfg.batch_norm:
            G = grads[i]
            G["gamma"][...] = (dzz * c["xhat"]).sum(axis=0)
            G["beta"][...] = dzz.sum(axis=0)
            dxhat = dzz * layers[i]["gamma"]
            n = dxhat.shape[0]
            dz = (c["inv"] / n) * (
                n * dxhat - dxhat.sum(axis=0) - c["xhat"] * (dxhat * c["xhat"]).sum(axis=0)
            )
        else:
            dz = dzz
        grads[i]["W"][...] = c["a_in"].T @ dz
        grads[i]["b"][...] = dz.sum(axis=0)
        if i > 0:
            da = dz @ layers[i]["W"].T


def loss_and_gradient(flat, X, y, cfg: MLPParams, running=None, rng=None):
    """Mean squared error on (X, y) and its gradient w.r.t. the flat weights."""
    n_in = X.shape[1]
    layers = unflatten(flat, n_in, cfg)
    if running is None:
        running = [(np.zeros(w), np.ones(w)) for w in cfg.layer_sizes]
    out, caches = forward(layers, running, X, cfg, train=True, rng=rng)
    resid = out - y
    loss = float(np.mean(resid ** 2))
    g = np.zeros_like(flat)
    backward(layers, caches, 2.0 * resid / len(y), cfg, unflatten(g, n_in, cfg))
    return loss, g, caches


class _Optimizer:
    def __init__(self, kind, lr, size):
        self.kind, self.lr, self.t = kind, lr, 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, w, g):
        self.t += 1
        if self.kind == "sgd":
            w -= self.lr * g
        elif self.kind == "rmsprop":
            self.v *= RMSPROP_RHO
            self.v += (1 - RMSPROP_RHO) * g * g
            w -= self.lr * g / (np.sqrt(self.v) + OPT_EPS)
        else:
            b1, b2 = ADAM_BETAS
            self.m *= b1
            self.m += (1 - b1) * g
            self.v *= b2
            self.v += (1 - b2) * g * g
            mhat = self.m / (1 - b1 ** self.t)
            vhat = self.v / (1 - b2 ** self.t)
            w -= self.lr * mhat / (np.sqrt(vhat) + OPT_EPS)


def mlp_fit(X, y, config: ModelConfig | MLPParams | None = None, seed: int = 0,
            feature_names=None) -> TrainedModel:
    if isinstance(config, MLPParams):
        config = ModelConfig("mlp", mlp=config)
    config = (config or ModelConfig("mlp")).validate()
    cfg = config.mlp
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,) or n < 1:
        raise ValueError("X must be (n, p) with n == len(y) >= 1")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    x_mean, x_scale = standardization(X)
    Z = (X - x_mean) / x_scale
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    t = (y - y_mean) / y_scale

    rng = np.random.default_rng(seed)
    flat = init_params(p, cfg, rng)
    layers = unflatten(flat, p, cfg)
    grad = np.zeros_like(flat)
    grads = unflatten(grad, p, cfg)
    running = [(np.zeros(w), np.ones(w)) for w in cfg.layer_sizes]
    opt = _Optimizer(cfg.optimizer, cfg.lr, flat.size)
    bs = cfg.batch_size

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for lo in range(0, n, bs):
                idx = perm[lo:lo + bs]
                out, caches = forward(layers, running, Z[idx], cfg, train=True, rng=rng)
                resid = out - t[idx]
                loss = float(np.mean(resid ** 2))
                if not math.isfinite(loss):
                    raise Diverged(f"training loss became non-finite in epoch {epoch + 1}")
                backward(layers, caches, 2.0 * resid / len(idx), cfg, grads)
                opt.step(flat, grad)
                if cfg.batch_norm:
                    for i, c in enumerate(caches[:-1]):
                        mu, var = running[i]
                        running[i] = (BN_MOMENTUM * mu + (1 - BN_MOMENTUM) * c["mu"],
                                      BN_MOMENTUM * var + (1 - BN_MOMENTUM) * c["var"])
            if not np.all(np.isfinite(flat)):
                raise Diverged(f"weights became non-finite in epoch {epoch + 1}")

    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    model = TrainedModel(
        "mlp", config,
        {
            "weights": flat.copy(),
            "running_mean": [m.copy() for m, _ in running],
            "running_var": [v.copy() for _, v in running],
            "y_mean": y_mean,
            "y_scale": y_scale,
        },
        names, x_mean, x_scale,
        {"seed": int(seed), "epochs_run": cfg.epochs},
    )
    pred = predict_standardized(model, Z)
    if not np.all(np.isfinite(pred)):
        raise Diverged("network produces non-finite predictions")
    model.metadata["train_rmse"] = float(np.sqrt(np.mean((pred - y) ** 2)))
    return model


def predict_standardized(model: TrainedModel, Z) -> np.ndarray:
    cfg = model.config.mlp
    P = model.params
    layers = unflatten(np.asarray(P["weights"]), Z.shape[1], cfg)
    running = list(zip(P["running_mean"], P["running_var"]))
    out, _ = forward(layers, running, Z, cfg, train=False)
    return out * P["y_scale"] + P["y_mean"]
