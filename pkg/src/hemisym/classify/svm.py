"""RBF-kernel soft-margin SVM trained by sequential minimal optimization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import InputError, NumericalError
from .data import logistic, require_two_classes
from .scaling import Standardizer


@dataclass(frozen=True)
class SVMConfig:
    C: float = 0.1
    gamma: float = 0.01
    tol: float = 1e-4
    max_iter: int = 1_000_000
    standardize: bool = True

    def __post_init__(self):
        if not self.C > 0 or not self.gamma > 0:
            raise InputError("SVM needs C > 0 and gamma > 0")
        if not self.tol > 0 or self.max_iter < 1:
            raise InputError("SVM needs tol > 0 and max_iter >= 1")


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SVMModel:
    support: np.ndarray      # (m, d) support vectors
    coef: np.ndarray         # (m,) alpha_i * y_i
    bias: float
    gamma: float
    C: float
    scaler: Standardizer
    iterations: int = 0

    def decision(self, X) -> np.ndarray:
        X = self.scaler.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        if self.support.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support, self.gamma) @ self.coef + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)

    def score(self, X) -> np.ndarray:
        return logistic(self.decision(X))

    def to_dict(self) -> dict:
        return {"n_features": int(self.support.shape[1]), "support": self.support.tolist(),
                "coef": self.coef.tolist(),
                "bias": self.bias, "gamma": self.gamma, "C": self.C,
                "scaler": self.scaler.to_dict(), "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d) -> "SVMModel":
        sv = np.asarray(d["support"], dtype=float).reshape(-1, int(d["n_features"]))
        return cls(sv, np.asarray(d["coef"], dtype=float),
                   float(d["bias"]), float(d["gamma"]), float(d["C"]),
                   Standardizer.from_dict(d["scaler"]), int(d.get("iterations", 0)))


def _bias(alpha, G, y, C) -> float:
    """libsvm's rho; the decision bias is ``-rho``."""
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return -float(yG[free].mean())
    at_ub = ((y > 0) & (alpha <= 0)) | ((y < 0) & (alpha >= C))
    at_lb = ((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0))
    ub = yG[at_ub].min(initial=np.inf)
    lb = yG[at_lb].max(initial=-np.inf)
    if not np.isfinite(ub) or not np.isfinite(lb):
        return -float(ub if np.isfinite(ub) else lb)
    return -0.5 * float(ub + lb)


def train_svm(X, y, config: SVMConfig | None = None) -> SVMModel:
    """Solve the soft-margin dual with an RBF kernel.

    Inputs are standardized with training-set statistics unless
    ``config.standardize`` is off; the scaler is part of the model.
    ``d(x) = sum_i alpha_i y_i k(x_i, x) + b``; the solver stops when the
    largest violation of the optimality conditions drops below ``config.tol``.
    """
    config = config or SVMConfig()
    X, y01 = require_two_classes(X, y)
    scaler = Standardizer.fit(X) if config.standardize else Standardizer.identity(X.shape[1])
    X = scaler.transform(X)
    ys = np.where(y01 == 1, 1.0, -1.0)
    K = rbf_kernel(X, X, config.gamma)
    alpha, G, it = _kernels.smo_solve(K, ys, float(config.C), float(config.tol),
                                      int(config.max_iter))
    if not np.all(np.isfinite(alpha)) or not np.all(np.isfinite(G)):
        raise NumericalError("SMO produced non-finite multipliers")
    b = _bias(alpha, G, ys, config.C)
    sv = alpha > 0
    return SVMModel(X[sv].copy(), (alpha * ys)[sv], b, float(config.gamma),
                    float(config.C), scaler, int(it))
