"""Multi-layer perceptron with ReLU hidden layers, trained by Adam on log-loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InputError, NumericalError
from .data import logistic, require_two_classes
from .scaling import Standardizer


@dataclass(frozen=True)
class MLPConfig:
    hidden: tuple = (50, 50, 50)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    validation_fraction: float = 0.1
    patience: int = 20
    max_epochs: int = 500
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise InputError("hidden layer sizes must be positive")
        if not self.learning_rate > 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise InputError("invalid Adam parameters")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise InputError("batch_size, patience and max_epochs must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise InputError("validation_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def init_params(sizes, rng: np.random.Generator) -> list:
    """Glorot-uniform weights, zero biases; returns ``[W1, b1, W2, b2, ...]``."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    """Output logits and the per-layer activations needed for backprop."""
    acts = [X]
    a = X
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = a @ params[2 * k] + params[2 * k + 1]
        a = np.maximum(z, 0.0) if k < n_layers - 1 else z
        acts.append(a)
    return acts[-1][:, 0], acts


def loss(params, X, y) -> float:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``y``."""
    z, _ = forward(params, X)
    # log(1 + e^z) - y z, computed without overflow
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss_and_grad(params, X, y):
    z, acts = forward(params, X)
    n = X.shape[0]
    value = float(np.mean(np.logaddexp(0.0, z) - y * z))
    delta = ((logistic(z) - y) / n)[:, None]
    grads = [None] * len(params)
    for k in range(len(params) // 2 - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[2 * k].T) * (acts[k] > 0)
    return value, grads


@dataclass(frozen=True)
class MLPModel:
    params: tuple
    scaler: Standardizer
    epochs: int = 0
    best_epoch: int = 0

    def logits(self, X) -> np.ndarray:
        X = self.scaler.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        return forward(self.params, X)[0]

    def score(self, X) -> np.ndarray:
        return logistic(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return (self.logits(X) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"layers": [{"W": self.params[2 * k].tolist(), "b": self.params[2 * k + 1].tolist()}
                           for k in range(len(self.params) // 2)],
                "scaler": self.scaler.to_dict(),
                "epochs": self.epochs, "best_epoch": self.best_epoch}

    @classmethod
    def from_dict(cls, d) -> "MLPModel":
        params = []
        for layer in d["layers"]:
            params.append(np.asarray(layer["W"], dtype=float))
            params.append(np.asarray(layer["b"], dtype=float))
        return cls(tuple(params), Standardizer.from_dict(d["scaler"]),
                   int(d.get("epochs", 0)), int(d.get("best_epoch", 0)))


def _validation_split(y, fraction, rng):
    """Stratified hold-out indices; empty when the fraction rounds to nothing."""
    val = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        k = int(round(fraction * idx.size))
        if k >= idx.size:
            k = idx.size - 1
        val.extend(rng.permutation(idx)[:k].tolist())
    val = np.sort(np.array(val, dtype=np.intp))
    train = np.setdiff1d(np.arange(y.size), val)
    return train, val


def train_mlp(X, y, config: MLPConfig | None = None, seed=0) -> MLPModel:
    """Adam on mini-batches with early stopping on a held-out split.

    Training stops once the validation loss has not improved for
    ``config.patience`` epochs; the best weights seen are returned.
    """
    config = config or MLPConfig()
    X, y = require_two_classes(X, y)
    y = y.astype(float)
    scaler = Standardizer.fit(X) if config.standardize else Standardizer.identity(X.shape[1])
    X = scaler.transform(X)
    rng = np.random.default_rng(seed)
    sizes = (X.shape[1],) + config.hidden + (1,)
    params = init_params(sizes, rng)
    train, val = _validation_split(y, config.validation_fraction, rng)
    if val.size == 0:
        train, val = np.arange(y.size), np.arange(y.size)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    t = 0
    best = (loss(params, X[val], y[val]), [p.copy() for p in params], 0)
    stale = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train)
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = loss_and_grad(params, X[batch], y[batch])
            t += 1
            for k, g in enumerate(grads):
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                mhat = m[k] / (1 - b1 ** t)
                vhat = v[k] / (1 - b2 ** t)
                params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + eps)
        val_loss = loss(params, X[val], y[val])
        if not np.isfinite(val_loss):
            raise NumericalError(f"MLP loss became non-finite at epoch {epoch}")
        if val_loss < best[0]:
            best = (val_loss, [p.copy() for p in params], epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return MLPModel(tuple(best[1]), scaler, epoch, best[2])
