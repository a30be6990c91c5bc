"""Random-forest split-selection frequencies aggregated into biomarker groups."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .learners import Kind, TrainedModel

CANONICAL_GROUPS = (
    "PL Location",
    "B-Line",
    "A-Line",
    "B-Line Origin",
    "PL Thickness",
    "PL Breaks",
    "Consolidation",
    "Effusion",
    "PL Indents",
)

N_BIOMARKERS = 38


def split_counts(model: TrainedModel, mode: str = "count") -> np.ndarray:
    """Per-feature selection frequency over all trees of a forest.

    ``mode``: "count" (internal nodes splitting on the feature), "unique"
    (trees using the feature at least once) or "impurity" (summed weighted
    Gini decrease).
    """
    if model.spec.kind is not Kind.RANDOM_FOREST or model.trees is None:
        raise TypeError("split_counts needs a random forest model")
    out = np.zeros(model.n_features, dtype=np.int64 if mode != "impurity" else np.float64)
    for tree in model.trees:
        used = tree.feature[tree.internal]
        if mode == "count":
            np.add.at(out, used, 1)
        elif mode == "unique":
            out[np.unique(used)] += 1
        elif mode == "impurity":
            np.add.at(out, used, tree.gain[tree.internal])
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


def fold_blocks(counts: Sequence[float], base_dim: int = N_BIOMARKERS) -> np.ndarray:
    """Sum counts over repeated feature blocks (temporal or view concatenation)."""
    counts = np.asarray(counts)
    if counts.size % base_dim:
        raise ValueError(f"length {counts.size} is not a multiple of {base_dim}")
    return counts.reshape(-1, base_dim).sum(axis=0)


@dataclass(frozen=True)
class BiomarkerGrouping:
    groups: dict[int, str]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("grouping is empty")

    @property
    def names(self) -> list[str]:
        present = set(self.groups.values())
        ordered = [g for g in CANONICAL_GROUPS if g in present]
        extra = []
        for idx in sorted(self.groups):
            g = self.groups[idx]
            if g not in CANONICAL_GROUPS and g not in extra:
                extra.append(g)
        return ordered + extra

    @classmethod
    def read(cls, path: str | Path) -> "BiomarkerGrouping":
        groups = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["feature_index", "group_name"]:
                raise ValueError("grouping header must be 'feature_index,group_name'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    idx = int(row[0])
                except (ValueError, IndexError):
                    raise ValueError(f"line {lineno}: bad feature index") from None
                if idx in groups:
                    raise ValueError(f"line {lineno}: feature {idx} assigned twice")
                groups[idx] = row[1].strip()
        return cls(groups)

    @classmethod
    def placeholder(cls) -> "BiomarkerGrouping":
        """The bundled placeholder map of 38 features onto the nine canonical groups."""
        ref = resources.files("prognoses") / "data" / "biomarker_groups.csv"
        with resources.as_file(ref) as p:
            return cls.read(p)


@dataclass(frozen=True)
class ImportanceProfile:
    frequencies: dict[str, float]

    @property
    def maximum(self) -> float:
        return max(self.frequencies.values())

    @property
    def normalized(self) -> dict[str, float]:
        m = self.maximum
        return {g: (v / m if m > 0 else 0.0) for g, v in self.frequencies.items()}


def profile(fold_counts: Sequence[Sequence[float]], grouping: BiomarkerGrouping) -> ImportanceProfile:
    """Per-group sum of member counts, averaged over folds."""
    if not fold_counts:
        raise ValueError("need counts from at least one fold")
    mat = np.asarray(fold_counts, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("fold counts must all have the same length")
    if max(grouping.groups) >= mat.shape[1] or min(grouping.groups) < 0:
        raise ValueError(f"grouping references feature indices outside 0..{mat.shape[1] - 1}")
    mean = mat.mean(axis=0)
    freq = {}
    for name in grouping.names:
        idx = sorted(i for i, g in grouping.groups.items() if g == name)
        freq[name] = float(mean[idx].sum())
    return ImportanceProfile(freq)


def export_radar(prof: ImportanceProfile, path: str | Path) -> None:
    norm = prof.normalized
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "avg_frequency", "normalized"])
        for g, v in prof.frequencies.items():
            w.writerow([g, repr(float(v)), repr(float(norm[g]))])


def read_radar(path: str | Path) -> ImportanceProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return ImportanceProfile({r["group"]: float(r["avg_frequency"]) for r in rows})


def profile_from_report(report: Mapping, grouping: BiomarkerGrouping) -> ImportanceProfile:
    """Profile from a serialized forest run (``importance_counts`` per outer fold)."""
    counts = report.get("importance_counts")
    if not counts:
        raise ValueError("report has no forest importance counts")
    width = max(grouping.groups) + 1
    folded = [fold_blocks(c, width) if len(c) != width else np.asarray(c) for c in counts]
    return profile(folded, grouping)
