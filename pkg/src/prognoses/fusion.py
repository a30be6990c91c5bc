"""Multi-view fusion (feature and decision level) and cross-lung training augmentation."""
from __future__ import annotations

import math
from collections import defaultdict
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .cohort import VIEW_ORDER, Cohort, ViewId
from .temporal import ALL_VIEWS, DayPairPolicy, DayPairSample, TemporalMode, view_samples


class FeatureFusion(str, Enum):
    AVERAGE = "average"
    MAX = "max"
    CONCATENATE = "concatenate"


class DecisionFusion(str, Enum):
    MAX_VOTES = "max_votes"
    AVERAGE_PROBA = "average_proba"


class MissingViewPolicy(str, Enum):
    SKIP = "skip"
    ZERO_IMPUTE = "zero_impute"


def fuse_features(
    per_view: Mapping[ViewId, np.ndarray],
    strategy: FeatureFusion,
    policy: MissingViewPolicy = MissingViewPolicy.SKIP,
) -> np.ndarray | None:
    """Fuse per-view vectors into one; returns None when the sample must be skipped."""
    present = [v for v in VIEW_ORDER if v in per_view]
    if not present:
        raise ValueError("no views present to fuse")
    dims = {np.shape(per_view[v]) for v in present}
    if len(dims) != 1:
        raise ValueError(f"per-view vectors differ in shape: {sorted(dims)}")
    if len(present) < len(VIEW_ORDER) and policy is MissingViewPolicy.SKIP:
        return None
    if strategy is FeatureFusion.CONCATENATE:
        zeros = np.zeros(dims.pop())
        return np.concatenate([np.asarray(per_view[v], dtype=np.float64) if v in per_view else zeros for v in VIEW_ORDER])
    stacked = np.stack([np.asarray(per_view[v], dtype=np.float64) for v in present])
    if strategy is FeatureFusion.AVERAGE:
        return stacked.mean(axis=0)
    return stacked.max(axis=0)


def fuse_decisions(
    per_view_proba: Mapping[ViewId, float],
    strategy: DecisionFusion,
    threshold: float = 0.5,
) -> tuple[int, float]:
    """Combine per-view probabilities into (label, fused probability).

    Max-votes ties are settled by the mean probability against ``threshold``;
    an exact tie there yields the negative class.
    """
    if not per_view_proba:
        raise ValueError("no per-view predictions to fuse")
    probs = np.array(list(per_view_proba.values()), dtype=np.float64)
    if not np.all((probs >= 0) & (probs <= 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    mean = math.fsum(probs) / probs.size
    if strategy is DecisionFusion.AVERAGE_PROBA:
        return int(mean >= threshold), mean
    votes = int(np.sum(probs >= threshold))
    n = probs.size
    if 2 * votes > n:
        label = 1
    elif 2 * votes < n:
        label = 0
    else:
        label = int(mean > threshold)
    return label, votes / n


def cross_lung_expand(train_samples: Sequence[DayPairSample], enabled: bool) -> list[DayPairSample]:
    """Add each single-view sample again under its mirrored view.

    Afterwards the view-v subset is the union of the original v and mirror(v)
    samples. Evaluation data must never be passed through this.
    """
    samples = list(train_samples)
    if not enabled:
        return samples
    out = []
    for s in samples:
        if not isinstance(s.view, ViewId):
            raise ValueError("cross-lung expansion applies to single-view samples only")
        out.append(s)
    for s in samples:
        out.append(
            DayPairSample(s.patient_id, s.view.mirror, s.day_a, s.day_b, s.vector, s.label, origin_view=s.view)
        )
    return out


def per_view_samples(
    cohort: Cohort, policy: DayPairPolicy, mode: TemporalMode, views: Sequence[ViewId] = VIEW_ORDER
) -> tuple[dict[ViewId, list[DayPairSample]], list[str]]:
    out, notes = {}, []
    for v in views:
        out[v], n = view_samples(cohort, v, policy, mode)
        notes.extend(n)
    return out, notes


def group_units(per_view: Mapping[ViewId, Sequence[DayPairSample]]) -> dict[tuple, dict[ViewId, DayPairSample]]:
    """Index per-view samples by (patient, day_a, day_b)."""
    units: dict[tuple, dict[ViewId, DayPairSample]] = defaultdict(dict)
    for v, samples in per_view.items():
        for s in samples:
            units[(s.patient_id, s.day_a, s.day_b)][v] = s
    return dict(sorted(units.items()))


def fused_samples(
    cohort: Cohort,
    policy: DayPairPolicy,
    mode: TemporalMode,
    strategy: FeatureFusion,
    missing: MissingViewPolicy = MissingViewPolicy.SKIP,
) -> tuple[list[DayPairSample], list[str]]:
    per_view, notes = per_view_samples(cohort, policy, mode)
    samples = []
    skipped = 0
    for (pid, a, b), by_view in group_units(per_view).items():
        vec = fuse_features({v: s.vector for v, s in by_view.items()}, strategy, missing)
        if vec is None:
            skipped += 1
            continue
        samples.append(DayPairSample(pid, ALL_VIEWS, a, b, vec, cohort.label(pid)))
    if skipped:
        notes.append(f"{skipped} multi-view unit(s) skipped for missing views")
    return samples, notes
