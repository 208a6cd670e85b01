"""Feature datasets shared by the classifiers and the evaluation harness."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..features import FEATURE_NAMES, FeatureVector

N_FEATURES = len(FEATURE_NAMES)
SYMMETRIC, ASYMMETRIC = 0, 1


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (n, 7), labels ``y`` in {0, 1}, row ``ids``.

    ``degenerate`` flags rows whose hemithorax pair had an empty side.
    """
    X: np.ndarray
    y: np.ndarray
    ids: tuple
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise InputError(f"feature matrix must have shape (n, {N_FEATURES}), got {X.shape}")
        if y.shape != (X.shape[0],) or len(self.ids) != X.shape[0]:
            raise InputError("labels, ids and feature rows must have equal length")
        if not np.all(np.isfinite(X)) or X.min(initial=0) < 0 or X.max(initial=0) > 1:
            raise InputError("feature entries must be finite and lie in [0, 1]")
        if not np.all(np.isin(y, (0, 1))):
            raise InputError("labels must be 0 (symmetric) or 1 (asymmetric)")
        if len(set(self.ids)) != len(self.ids):
            raise InputError("row ids must be unique")
        deg = np.zeros(X.shape[0], dtype=bool) if self.degenerate is None \
            else np.asarray(self.degenerate, dtype=bool)
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "degenerate", deg)

    def __len__(self):
        return self.X.shape[0]

    @classmethod
    def from_rows(cls, rows) -> "Dataset":
        """Build from ``(id, FeatureVector, label)`` triples; every label must be set."""
        rows = list(rows)
        if any(label is None for _, _, label in rows):
            raise InputError("every row needs a label to build a training dataset")
        X = np.array([fv.values() for _, fv, _ in rows], dtype=float).reshape(-1, N_FEATURES)
        return cls(X, np.array([lab for _, _, lab in rows], dtype=np.int64),
                   tuple(pid for pid, _, _ in rows),
                   np.array([fv.degenerate for _, fv, _ in rows], dtype=bool))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], tuple(self.ids[i] for i in index),
                       self.degenerate[index])

    def vectors(self):
        return [FeatureVector.from_values(x, bool(d)) for x, d in zip(self.X, self.degenerate)]

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.y.sum())
        return len(self) - pos, pos


def require_two_classes(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InputError("feature matrix and labels disagree in length")
    if not np.all(np.isfinite(X)):
        raise InputError("features must be finite")
    if not np.all(np.isin(y, (0, 1))):
        raise InputError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise InputError("training data must contain both classes")
    return X, y.astype(np.int64)


def logistic(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
