"""Majority-vote ensemble of the SVM, MLP and boosted-tree classifiers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import InputError
from ..features import FeatureVector
from .data import ASYMMETRIC, SYMMETRIC, Dataset, require_two_classes
from .gbc import GBCConfig, GBCModel, train_gbc
from .mlp import MLPConfig, MLPModel, train_mlp
from .svm import SVMConfig, SVMModel, train_svm

SCHEMA_VERSION = 1
MEMBERS = ("svm", "mlp", "gbc")
LABEL_NAMES = {SYMMETRIC: "symmetric", ASYMMETRIC: "asymmetric"}


def _strict(cls, d, where: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise InputError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise InputError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise InputError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class EnsembleConfig:
    svm: SVMConfig = field(default_factory=SVMConfig)
    mlp: MLPConfig = field(default_factory=MLPConfig)
    gbc: GBCConfig = field(default_factory=GBCConfig)

    @classmethod
    def from_dict(cls, d) -> "EnsembleConfig":
        d = d or {}
        if not isinstance(d, dict):
            raise InputError("classifier config must be a mapping")
        unknown = sorted(set(d) - set(MEMBERS))
        if unknown:
            raise InputError(f"classifier config: unknown keys {unknown}")
        return cls(_strict(SVMConfig, d.get("svm"), "svm"),
                   _strict(MLPConfig, d.get("mlp"), "mlp"),
                   _strict(GBCConfig, d.get("gbc"), "gbc"))

    def to_dict(self) -> dict:
        svm = {f.name: getattr(self.svm, f.name) for f in fields(self.svm)}
        return {"svm": svm, "mlp": self.mlp.to_dict(), "gbc": self.gbc.to_dict()}


@dataclass(frozen=True)
class Prediction:
    label: int
    votes: tuple
    score: float
    member_scores: tuple = ()

    @property
    def name(self) -> str:
        return LABEL_NAMES[self.label]


def majority(votes) -> int:
    votes = np.asarray(votes)
    return int(votes.sum() * 2 > votes.size)


@dataclass(frozen=True)
class TrainedEnsemble:
    svm: SVMModel
    mlp: MLPModel
    gbc: GBCModel
    config: EnsembleConfig
    seed: int

    def members(self):
        return (("svm", self.svm), ("mlp", self.mlp), ("gbc", self.gbc))

    def member_outputs(self, X):
        """Hard labels ``(n, 3)`` and calibrated scores ``(n, 3)`` in member order."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(X)):
            raise InputError("features must be finite")
        votes = np.stack([m.predict(X) for _, m in self.members()], axis=1)
        scores = np.stack([m.score(X) for _, m in self.members()], axis=1)
        return votes, scores

    def predict_batch(self, X, degenerate=None):
        """Labels, ensemble scores, member votes and member scores for each row."""
        votes, scores = self.member_outputs(X)
        labels = (votes.sum(axis=1) >= 2).astype(np.int64)
        score = scores.mean(axis=1)
        if degenerate is not None:
            deg = np.asarray(degenerate, dtype=bool)
            labels[deg] = ASYMMETRIC
            score[deg] = 1.0
        return labels, score, votes, scores

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "svm": self.svm.to_dict(),
                "mlp": self.mlp.to_dict(), "gbc": self.gbc.to_dict(),
                "config": self.config.to_dict(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "TrainedEnsemble":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InputError(f"unsupported model schema version {d.get('schema_version')!r}")
        missing = [k for k in (*MEMBERS, "config", "seed") if k not in d]
        if missing:
            raise InputError(f"model artifact is missing sections {missing}")
        return cls(SVMModel.from_dict(d["svm"]), MLPModel.from_dict(d["mlp"]),
                   GBCModel.from_dict(d["gbc"]), EnsembleConfig.from_dict(d["config"]),
                   int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrainedEnsemble":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"{path}: cannot read model ({exc})") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not a JSON model artifact ({exc})") from None
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}: malformed model artifact ({exc})") from None


def train_ensemble(X, y, config: EnsembleConfig | None = None, seed: int = 0) -> TrainedEnsemble:
    """Train the three members on the same rows."""
    config = config or EnsembleConfig()
    X, y = require_two_classes(X, y)
    return TrainedEnsemble(train_svm(X, y, config.svm), train_mlp(X, y, config.mlp, seed),
                           train_gbc(X, y, config.gbc), config, int(seed))


def train_on_dataset(data: Dataset, config: EnsembleConfig | None = None,
                     seed: int = 0) -> TrainedEnsemble:
    return train_ensemble(data.X, data.y, config, seed)


def predict(model: TrainedEnsemble, fv: FeatureVector) -> Prediction:
    """Majority label and mean calibrated score for one feature vector.

    Degenerate vectors (an empty hemithorax) are asymmetric with score 1.
    """
    if fv.degenerate:
        return Prediction(ASYMMETRIC, (ASYMMETRIC,) * 3, 1.0, (1.0,) * 3)
    votes, scores = model.member_outputs(fv.values()[None, :])
    v = tuple(int(t) for t in votes[0])
    s = tuple(float(t) for t in scores[0])
    return Prediction(majority(v), v, float(np.mean(s)), s)
