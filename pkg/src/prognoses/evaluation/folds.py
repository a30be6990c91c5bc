"""Stratified patient-level outer folds and the rotated inner schedule."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class FoldPlan:
    assignment: dict[str, int]
    k: int

    def test_patients(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f == fold)

    def train_patients(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f != fold)

    def inner_rotations(self, fold: int) -> list[tuple[list[str], list[str]]]:
        """(train, validation) patient lists; each remaining fold validates once."""
        others = [f for f in range(self.k) if f != fold]
        out = []
        for val in others:
            train = sorted(p for p, f in self.assignment.items() if f != fold and f != val)
            out.append((train, self.test_patients(val)))
        return out

    def sizes(self) -> list[int]:
        return [sum(1 for f in self.assignment.values() if f == i) for i in range(self.k)]


def make_outer_folds(patients: Sequence[str], labels: Sequence[bool], k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal positives then negatives round-robin.

    Dealing both classes from one running counter keeps fold sizes within one
    of each other and per-fold positive counts within one.
    """
    patients = list(patients)
    labels = [bool(v) for v in labels]
    if len(patients) != len(labels):
        raise ValueError("patients and labels differ in length")
    if k < 2:
        raise ValueError("need at least two folds")
    if k > len(patients):
        raise ValueError(f"k={k} exceeds patient count {len(patients)}")
    if all(labels) or not any(labels):
        raise ValueError("both classes must be present to stratify folds")
    rng = np.random.default_rng(seed)
    order = sorted(range(len(patients)), key=lambda i: patients[i])
    pos = [patients[i] for i in order if labels[i]]
    neg = [patients[i] for i in order if not labels[i]]
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    assignment = {p: i % k for i, p in enumerate(pos + neg)}
    return FoldPlan(dict(sorted(assignment.items())), k)
