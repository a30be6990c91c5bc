"""Sequential day-pairs and their temporal feature representations."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cohort import Cohort, ViewId


class DayPairPolicy(str, Enum):
    FIRST_PAIR = "first_pair"
    ALL_SEQUENTIAL = "all_sequential"


class TemporalMode(str, Enum):
    DIFFERENCE = "difference"
    CONCATENATE = "concatenate"

    def output_dim(self, d: int) -> int:
        return d if self is TemporalMode.DIFFERENCE else 2 * d


# Marker used as the view of multi-view (fused) samples.
ALL_VIEWS = "ALL"


@dataclass(frozen=True)
class DayPair:
    patient_id: str
    day_a: int
    day_b: int
    vec_a: np.ndarray = field(repr=False)
    vec_b: np.ndarray = field(repr=False)
    label: bool


@dataclass(frozen=True)
class DayPairSample:
    """One labeled unit: a (patient, view, day_a < day_b) with its temporal vector.

    ``origin_view`` differs from ``view`` only for cross-lung mirrored copies.
    """

    patient_id: str
    view: ViewId | str
    day_a: int
    day_b: int
    vector: np.ndarray = field(repr=False, compare=False)
    label: bool
    origin_view: ViewId | str | None = None

    def __post_init__(self):
        if self.origin_view is None:
            object.__setattr__(self, "origin_view", self.view)

    @property
    def view_name(self) -> str:
        return self.view.value if isinstance(self.view, ViewId) else str(self.view)

    @property
    def key(self) -> tuple:
        origin = self.origin_view.value if isinstance(self.origin_view, ViewId) else self.origin_view
        return (self.patient_id, self.view_name, self.day_a, self.day_b, origin)


def sequential_pairs(days: list[int], policy: DayPairPolicy) -> list[tuple[int, int]]:
    days = sorted(set(days))
    if policy is DayPairPolicy.FIRST_PAIR:
        return [(1, 2)] if 1 in days and 2 in days else []
    return list(zip(days[:-1], days[1:]))


def build_day_pairs(
    cohort: Cohort, view: ViewId, policy: DayPairPolicy
) -> tuple[list[DayPair], list[str]]:
    """Return the day-pairs for one view plus a list of skip/gap notes."""
    pairs: list[DayPair] = []
    notes: list[str] = []
    gaps = 0
    for pid in cohort.patients:
        days = cohort.days(pid, view)
        if not days:
            notes.append(f"{pid}: view {view.value} absent, skipped")
            continue
        found = sequential_pairs(days, policy)
        if not found:
            want = "days 1 and 2" if policy is DayPairPolicy.FIRST_PAIR else "two days"
            notes.append(f"{pid}: view {view.value} lacks {want}, skipped")
            continue
        y = cohort.label(pid)
        for a, b in found:
            if b - a > 1:
                gaps += 1
            pairs.append(
                DayPair(pid, a, b, cohort.get(pid, view, a).features, cohort.get(pid, view, b).features, y)
            )
    if gaps:
        notes.append(f"view {view.value}: {gaps} non-adjacent day pair(s) included")
    return pairs, notes


def represent(vec_a: np.ndarray, vec_b: np.ndarray, mode: TemporalMode) -> np.ndarray:
    """Temporal representation of an earlier (a) and later (b) scan."""
    vec_a = np.asarray(vec_a, dtype=np.float64)
    vec_b = np.asarray(vec_b, dtype=np.float64)
    if vec_a.shape != vec_b.shape or vec_a.ndim != 1:
        raise ValueError(f"dimension mismatch: {vec_a.shape} vs {vec_b.shape}")
    if mode is TemporalMode.DIFFERENCE:
        return vec_b - vec_a
    return np.concatenate([vec_a, vec_b])


def view_samples(
    cohort: Cohort, view: ViewId, policy: DayPairPolicy, mode: TemporalMode
) -> tuple[list[DayPairSample], list[str]]:
    pairs, notes = build_day_pairs(cohort, view, policy)
    samples = [
        DayPairSample(p.patient_id, view, p.day_a, p.day_b, represent(p.vec_a, p.vec_b, mode), p.label)
        for p in pairs
    ]
    return samples, notes
