"""Nested patient-level cross-validation with pooled outer predictions and an access audit."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..cohort import VIEW_ORDER, Cohort, ViewId
from ..fusion import (
    MissingViewPolicy,
    cross_lung_expand,
    fuse_decisions,
    fused_samples,
    group_units,
    per_view_samples,
)
from ..importance import split_counts
from ..learners import ClassifierSpec, Kind, LearnerError, TrainedModel, fit
from ..temporal import DayPairSample
from .bootstrap import bootstrap_ci
from .config import ExperimentConfig
from .folds import FoldPlan, make_outer_folds
from .metrics import weighted_f1


class EvaluationError(RuntimeError):
    pass


PHASES = ("inner_train", "inner_val", "refit", "standardizer_fit", "test")


@dataclass
class AccessLog:
    """Every materialization of a sample into a matrix, tagged with fold and phase."""

    entries: list[tuple[int, int, str, int, tuple]] = field(default_factory=list)

    def record(self, fold: int, phase: str, rotation: int, samples: Sequence[DayPairSample]):
        for s in samples:
            self.entries.append((len(self.entries), fold, phase, rotation, s.key))

    def violations(self, plan: FoldPlan) -> list[str]:
        """Empty when no outer-test patient was touched outside (or before) its test phase."""
        problems = []
        for fold in range(plan.k):
            test = set(plan.test_patients(fold))
            train = set(plan.train_patients(fold))
            if test & train:
                problems.append(f"fold {fold}: train/test patients overlap {sorted(test & train)}")
            rows = [e for e in self.entries if e[1] == fold]
            first_test = min((e[0] for e in rows if e[2] == "test"), default=None)
            for seq, _, phase, _, key in rows:
                pid = key[0]
                if phase == "test":
                    if pid not in test:
                        problems.append(f"fold {fold}: training patient {pid} in test phase")
                else:
                    if pid in test:
                        problems.append(f"fold {fold}: test patient {pid} accessed in {phase}")
                    if first_test is not None and seq > first_test:
                        problems.append(f"fold {fold}: {phase} access after test predictions began")
        return problems

    def summary(self) -> dict[str, int]:
        out = {p: 0 for p in PHASES}
        for e in self.entries:
            out[e[2]] += 1
        return out


@dataclass(frozen=True)
class Prediction:
    patient_id: str
    view: str
    day_a: int
    day_b: int
    y_true: bool
    proba: float
    y_pred: bool
    fold: int


@dataclass
class FoldResult:
    fold: int
    test_patients: list[str]
    selected: dict[str, Any]
    inner_scores: list[dict[str, Any]]
    n_train_samples: int
    n_test_samples: int


@dataclass
class EvaluationReport:
    config: ExperimentConfig
    predictions: list[Prediction]
    f1: float
    ci: tuple[float, float]
    folds: list[FoldResult]
    plan: FoldPlan
    audit: AccessLog
    notes: list[str]
    feature_dim: int
    runtime_seconds: float = 0.0
    models: list[dict[str, TrainedModel]] = field(default_factory=list, repr=False)
    importance_counts: list[list[int]] | None = None

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        d = {
            "config": self.config.to_dict(),
            "view": self.config.view_name,
            "weighted_f1": self.f1,
            "ci": list(self.ci),
            "cell": format_cell(self.f1, self.ci),
            "n_predictions": len(self.predictions),
            "feature_dim": self.feature_dim,
            "folds": [
                {
                    "fold": f.fold,
                    "test_patients": f.test_patients,
                    "selected": f.selected,
                    "inner_scores": f.inner_scores,
                    "n_train_samples": f.n_train_samples,
                    "n_test_samples": f.n_test_samples,
                }
                for f in self.folds
            ],
            "audit": {"accesses": self.audit.summary(), "violations": self.audit.violations(self.plan)},
            "notes": self.notes,
        }
        if self.importance_counts is not None:
            d["importance_counts"] = self.importance_counts
        if include_timing:
            d["runtime_seconds"] = self.runtime_seconds
        return d

    def write_json(self, path, include_timing: bool = True, extra: dict | None = None):
        d = self.to_dict(include_timing)
        if extra:
            d.update(extra)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=False)
            fh.write("\n")

    def write_predictions(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "view", "day_a", "day_b", "y_true", "proba", "y_pred"])
            for p in self.predictions:
                w.writerow([p.patient_id, p.view, p.day_a, p.day_b, int(p.y_true), repr(p.proba), int(p.y_pred)])


def format_cell(f1: float, ci: tuple[float, float]) -> str:
    return f"{f1:.2f} [{ci[0]:.2f}–{ci[1]:.2f}]"


def task_seed(seed: int, *key: int) -> int:
    """Seed for one (fold, rotation, candidate, view) task, independent of scheduling."""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)).generate_state(1, np.uint64)[0])


REFIT = 99  # rotation index used for outer refits


class _Design:
    """Sample construction for one config: which models exist and what an evaluation unit is."""

    def __init__(self, config: ExperimentConfig, cohort: Cohort):
        self.config = config
        self.notes: list[str] = []
        if config.view is not None:
            views = [config.view]
            if config.cross_lung:
                views.append(config.view.mirror)
            per_view, notes = per_view_samples(cohort, config.day_policy, config.temporal, views)
            self.notes += notes
            self.models = [config.view]
            self.pool = [s for v in views for s in per_view[v]]
            self.units = [{config.view: s} for s in per_view[config.view]]
        elif config.feature_fusion is not None:
            samples, notes = fused_samples(
                cohort, config.day_policy, config.temporal, config.feature_fusion, config.missing_views
            )
            self.notes += notes
            self.models = ["ALL"]
            self.pool = samples
            self.units = [{"ALL": s} for s in samples]
        else:
            per_view, notes = per_view_samples(cohort, config.day_policy, config.temporal)
            self.notes += notes
            self.models = list(VIEW_ORDER)
            self.pool = [s for v in VIEW_ORDER for s in per_view[v]]
            self.units = []
            skipped = 0
            for _, by_view in group_units(per_view).items():
                if len(by_view) < len(VIEW_ORDER) and config.missing_views is MissingViewPolicy.SKIP:
                    skipped += 1
                    continue
                self.units.append(by_view)
            if skipped:
                self.notes.append(f"{skipped} multi-view unit(s) skipped for missing views")
        self.feature_dim = self.pool[0].vector.size if self.pool else 0

    def training_sets(self, patients) -> dict:
        keep = set(patients)
        chosen = [s for s in self.pool if s.patient_id in keep]
        if self.config.cross_lung:
            chosen = cross_lung_expand(chosen, True)
        out = {}
        for m in self.models:
            if m == "ALL":
                out[m] = chosen
            else:
                out[m] = [s for s in chosen if s.view is m]
        return out

    def eval_units(self, patients) -> list[dict]:
        keep = set(patients)
        units = [u for u in self.units if next(iter(u.values())).patient_id in keep]
        flt = self.config.eval_day_filter
        if flt is not None:
            units = [u for u in units if (_first(u).day_a, _first(u).day_b) == tuple(flt)]
        return units


def _first(unit: dict) -> DayPairSample:
    return next(iter(unit.values()))


def _stack(samples):
    return np.stack([s.vector for s in samples]), np.array([s.label for s in samples], dtype=bool)


class _Runner:
    def __init__(self, config: ExperimentConfig, design: _Design, log: AccessLog):
        self.config = config
        self.design = design
        self.log = log

    def train(self, fold, rotation, phase, cand_idx, params, patients) -> dict[Any, TrainedModel]:
        sets = self.design.training_sets(patients)
        models = {}
        for vi, (name, samples) in enumerate(sets.items()):
            if not samples:
                raise LearnerError(f"no training samples for model {name}")
            self.log.record(fold, phase, rotation, samples)
            self.log.record(fold, "standardizer_fit", rotation, samples)
            X, y = _stack(samples)
            spec = ClassifierSpec(self.config.classifier, params, task_seed(self.config.seed, fold, rotation, cand_idx, vi))
            models[name] = fit(spec, X, y)
        return models

    def predict(self, fold, rotation, phase, models, units) -> list[tuple[dict, float, bool]]:
        out = []
        if not units:
            return out
        names = list(models)
        probs = {}
        for name in names:
            members = [u[name] for u in units if name in u]
            if not members:
                continue
            self.log.record(fold, phase, rotation, members)
            X = np.stack([s.vector for s in members])
            probs[name] = iter(models[name].predict_proba(X))
        thr = self.config.threshold
        for u in units:
            per = {name: float(next(probs[name])) for name in names if name in u}
            if self.config.decision_fusion is not None:
                label, p = fuse_decisions(per, self.config.decision_fusion, thr)
                out.append((u, p, bool(label)))
            else:
                p = per[names[0]]
                out.append((u, p, p >= thr))
        return out


def nested_cv(config: ExperimentConfig, cohort: Cohort, keep_models: bool = False) -> EvaluationReport:
    """Outer folds test, inner rotations select hyperparameters by mean weighted F1."""
    t0 = time.perf_counter()
    design = _Design(config, cohort)
    if not design.units:
        raise EvaluationError("no evaluation samples after day-pair and missing-view filtering")
    labels = cohort.labels
    plan = make_outer_folds(list(labels), list(labels.values()), config.outer_folds, config.seed)
    log = AccessLog()
    runner = _Runner(config, design, log)
    candidates = config.candidates

    predictions: list[Prediction] = []
    folds: list[FoldResult] = []
    kept: list[dict] = []
    counts = [] if config.classifier is Kind.RANDOM_FOREST else None

    for fold in range(plan.k):
        train_patients = plan.train_patients(fold)
        train_sets = design.training_sets(train_patients)
        for name, samples in train_sets.items():
            ys = {s.label for s in samples}
            if len(ys) < 2:
                raise EvaluationError(f"outer fold {fold}: training labels for model {name} are single-class")

        scores = []
        for ci, params in enumerate(candidates):
            if len(candidates) == 1:
                # nothing to select; the refit is seeded independently of inner runs
                scores.append({"params": params, "mean": None, "rotations": []})
                break
            per_rot = []
            for r, (inner_train, inner_val) in enumerate(plan.inner_rotations(fold)):
                val_units = design.eval_units(inner_val)
                if not val_units:
                    per_rot.append(None)
                    continue
                try:
                    models = runner.train(fold, r, "inner_train", ci, params, inner_train)
                except LearnerError:
                    per_rot.append(None)
                    continue
                preds = runner.predict(fold, r, "inner_val", models, val_units)
                per_rot.append(
                    weighted_f1([_first(u).label for u, _, _ in preds], [yp for _, _, yp in preds])
                )
            valid = [s for s in per_rot if s is not None]
            mean = float(np.mean(valid)) if valid else float("-inf")
            scores.append({"params": params, "mean": mean, "rotations": per_rot})

        best = 0
        for i, s in enumerate(scores):
            if s["mean"] is not None and s["mean"] > scores[best]["mean"]:
                best = i
        selected = candidates[best]
        models = runner.train(fold, REFIT, "refit", best, selected, train_patients)
        test_units = design.eval_units(plan.test_patients(fold))
        for u, p, yp in runner.predict(fold, REFIT, "test", models, test_units):
            s = _first(u)
            view = s.view_name if len(u) == 1 else "ALL"
            predictions.append(Prediction(s.patient_id, view, s.day_a, s.day_b, bool(s.label), float(p), bool(yp), fold))
        folds.append(
            FoldResult(
                fold,
                plan.test_patients(fold),
                selected,
                [{**s, "mean": s["mean"] if s["mean"] is not None and np.isfinite(s["mean"]) else None} for s in scores],
                sum(len(v) for v in train_sets.values()),
                len(test_units),
            )
        )
        if counts is not None:
            counts.append([int(c) for c in sum(split_counts(m) for m in models.values())])
        if keep_models:
            kept.append(models)

    if not predictions:
        raise EvaluationError("no evaluation samples after filtering")
    y_true = [p.y_true for p in predictions]
    y_pred = [p.y_pred for p in predictions]
    f1 = weighted_f1(y_true, y_pred)
    groups = [p.patient_id for p in predictions] if config.bootstrap_unit == "patient" else None
    ci = bootstrap_ci(y_true, y_pred, weighted_f1, config.n_bootstrap, config.seed, groups)
    return EvaluationReport(
        config=config,
        predictions=predictions,
        f1=f1,
        ci=ci,
        folds=folds,
        plan=plan,
        audit=log,
        notes=design.notes,
        feature_dim=design.feature_dim,
        runtime_seconds=time.perf_counter() - t0,
        models=kept,
        importance_counts=counts,
    )
