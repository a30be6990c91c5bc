"""Deterministic from-scratch binary classifiers behind one fit/predict_proba contract."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from . import mlp as _mlp
from . import svm as _svm
from .mlp import mlp_gradient
from .tree import Tree, grow_forest, grow_tree


class LearnerError(ValueError):
    pass


class Kind(str, Enum):
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    LINEAR_SVM = "linear_svm"
    MLP = "mlp"
    MLP_LARGE = "mlp_large"

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    Kind.DECISION_TREE: "Decision-Tree",
    Kind.RANDOM_FOREST: "Random-Forest",
    Kind.LINEAR_SVM: "SVM",
    Kind.MLP: "MLP",
    Kind.MLP_LARGE: "MLP-Large",
}

HIDDEN = {Kind.MLP: (64,), Kind.MLP_LARGE: (256, 64)}

DEFAULT_GRIDS: dict[Kind, dict[str, list]] = {
    Kind.DECISION_TREE: {"max_depth": [2, 4, 8], "min_samples_leaf": [1, 3, 5]},
    Kind.RANDOM_FOREST: {"n_trees": [100, 300], "min_samples_leaf": [1, 3]},
    Kind.LINEAR_SVM: {"lam": [1e-3, 1e-2, 1e-1]},
    Kind.MLP: {"lr": [1e-3, 1e-2], "l2": [0.0, 1e-4]},
    Kind.MLP_LARGE: {"lr": [1e-3, 1e-2], "l2": [0.0, 1e-4]},
}

_pos_int = lambda v: isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1
_pos_real = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) and v > 0
_nonneg_real = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) and v >= 0
_flag = lambda v: isinstance(v, bool)

# name -> (validator, default)
_HYPER: dict[Kind, dict[str, tuple]] = {
    Kind.DECISION_TREE: {"max_depth": (_pos_int, 4), "min_samples_leaf": (_pos_int, 1)},
    Kind.RANDOM_FOREST: {"n_trees": (_pos_int, 100), "min_samples_leaf": (_pos_int, 1)},
    Kind.LINEAR_SVM: {
        "lam": (_pos_real, 1e-2),
        "iterations": (_pos_int, 2000),
        "eta0": (_pos_real, 1.0),
        "class_weight": (_flag, False),
    },
    Kind.MLP: {
        "lr": (_pos_real, 1e-2),
        "l2": (_nonneg_real, 0.0),
        "epochs": (_pos_int, 500),
        "momentum": (lambda v: _nonneg_real(v) and v < 1, 0.9),
        "class_weight": (_flag, False),
    },
}
_HYPER[Kind.MLP_LARGE] = _HYPER[Kind.MLP]


@dataclass(frozen=True)
class ClassifierSpec:
    kind: Kind
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        allowed = _HYPER[self.kind]
        for name, value in self.hyperparameters.items():
            if name not in allowed:
                raise LearnerError(f"{self.kind.value}: unknown hyperparameter {name!r}")
            if not allowed[name][0](value):
                raise LearnerError(f"{self.kind.value}: invalid value {value!r} for {name!r}")

    def param(self, name: str):
        return self.hyperparameters.get(name, _HYPER[self.kind][name][1])


def grid_candidates(kind: Kind, grid: Mapping[str, list] | None = None) -> list[dict]:
    """Expand a grid into candidate dicts, ordered by their sorted hyperparameter tuples."""
    grid = DEFAULT_GRIDS[Kind(kind)] if grid is None else grid
    names = sorted(grid)
    combos = itertools.product(*(sorted(grid[n], key=_order_key) for n in names))
    return [dict(zip(names, c)) for c in combos]


def _order_key(v):
    return (0, float(v)) if isinstance(v, (bool, int, float)) else (1, str(v))


def candidate_key(params: Mapping[str, Any]) -> tuple:
    return tuple(_order_key(params[n]) for n in sorted(params))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.where(std > 0, std, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def _class_weights(y: np.ndarray) -> np.ndarray:
    n = y.size
    n_pos = int(y.sum())
    return np.where(y, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    standardizer: Standardizer
    n_features: int
    trees: list[Tree] | None = None
    weights: np.ndarray | None = None
    bias: float = 0.0
    platt: tuple[float, float] | None = None
    params: list[np.ndarray] | None = None
    mtry: int | None = None

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        Z = self.standardizer.transform(X)
        return Z @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnerError(f"expected {self.n_features} features, got shape {X.shape}")
        kind = self.spec.kind
        if kind is Kind.LINEAR_SVM:
            return _svm.platt_proba(self.decision_function(X), *self.platt)
        Z = self.standardizer.transform(X)
        if kind in (Kind.DECISION_TREE, Kind.RANDOM_FOREST):
            probs = np.zeros(Z.shape[0])
            for t in self.trees:
                probs += t.predict_proba(Z)
            return probs / len(self.trees)
        return _mlp.predict_proba(self.params, Z)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "kind": self.spec.kind.value,
            "hyperparameters": dict(self.spec.hyperparameters),
            "seed": int(self.spec.seed),
            "n_features": self.n_features,
            "standardizer": {"mean": self.standardizer.mean.tolist(), "scale": self.standardizer.scale.tolist()},
        }
        if self.trees is not None:
            d["trees"] = [t.to_dict() for t in self.trees]
            d["mtry"] = self.mtry
        if self.weights is not None:
            d["weights"] = self.weights.tolist()
            d["bias"] = self.bias
            d["platt"] = list(self.platt)
        if self.params is not None:
            d["layers"] = [p.tolist() for p in self.params]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        spec = ClassifierSpec(Kind(d["kind"]), d["hyperparameters"], d["seed"])
        std = Standardizer(np.array(d["standardizer"]["mean"]), np.array(d["standardizer"]["scale"]))
        model = cls(spec, std, d["n_features"])
        if "trees" in d:
            model.trees = [Tree.from_dict(t) for t in d["trees"]]
            model.mtry = d.get("mtry")
        if "weights" in d:
            model.weights = np.array(d["weights"])
            model.bias = d["bias"]
            model.platt = tuple(d["platt"])
        if "layers" in d:
            model.params = [np.array(p, dtype=np.float64) for p in d["layers"]]
        return model


def fit(spec: ClassifierSpec, X, y) -> TrainedModel:
    """Standardize on X, then train the learner described by ``spec``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise LearnerError(f"X shape {X.shape} inconsistent with {y.size} labels")
    if X.shape[0] < 2:
        raise LearnerError("need at least 2 training samples")
    if y.all() or not y.any():
        raise LearnerError("degenerate training labels")
    if not np.all(np.isfinite(X)):
        raise LearnerError("non-finite training features")

    std = Standardizer.fit(X)
    Z = std.transform(X)
    model = TrainedModel(spec, std, X.shape[1])
    kind = spec.kind
    if kind is Kind.DECISION_TREE:
        model.trees = [grow_tree(Z, y, spec.param("max_depth"), spec.param("min_samples_leaf"))]
    elif kind is Kind.RANDOM_FOREST:
        model.trees, model.mtry = grow_forest(
            Z, y, spec.param("n_trees"), spec.param("min_samples_leaf"), spec.seed
        )
    elif kind is Kind.LINEAR_SVM:
        sw = _class_weights(y) if spec.param("class_weight") else None
        model.weights, model.bias = _svm.train_hinge(
            Z, y, spec.param("lam"), spec.param("iterations"), spec.param("eta0"), sw
        )
        model.platt = _svm.platt_fit(Z @ model.weights + model.bias, y)
    else:
        sw = _class_weights(y) if spec.param("class_weight") else None
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        model.params = _mlp.train(
            Z,
            y,
            HIDDEN[kind],
            spec.param("lr"),
            spec.param("l2"),
            rng,
            epochs=spec.param("epochs"),
            momentum=spec.param("momentum"),
            sample_weight=sw,
        )
    return model


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    return model.predict_proba(X)


__all__ = [
    "ClassifierSpec",
    "DEFAULT_GRIDS",
    "Kind",
    "LearnerError",
    "Standardizer",
    "TrainedModel",
    "candidate_key",
    "fit",
    "grid_candidates",
    "mlp_gradient",
    "predict_proba",
]
