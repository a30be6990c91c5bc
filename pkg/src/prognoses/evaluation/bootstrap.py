"""Percentile bootstrap confidence intervals over pooled predictions."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .metrics import weighted_f1, weighted_f1_from_counts


def bootstrap_ci(
    y_true,
    y_pred,
    metric: Callable = weighted_f1,
    n_iter: int = 2000,
    seed: int = 0,
    groups: Sequence | None = None,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Resample predictions with replacement and return the alpha/2, 1-alpha/2 percentiles.

    With ``groups`` (e.g. patient ids) whole groups are resampled instead of
    individual predictions. Percentiles use linear interpolation.
    """
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    if y_true.size == 0:
        raise ValueError("empty input")
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    rng = np.random.default_rng(seed)

    if groups is None:
        idx = rng.integers(0, y_true.size, size=(n_iter, y_true.size))
        if metric is weighted_f1:
            t, p = y_true[idx], y_pred[idx]
            stats = weighted_f1_from_counts(
                (t & p).sum(1), (~t & p).sum(1), (t & ~p).sum(1), (~t & ~p).sum(1)
            )
        else:
            stats = np.array([metric(y_true[i], y_pred[i]) for i in idx])
    else:
        groups = np.asarray(groups)
        uniq = np.unique(groups)
        members = [np.nonzero(groups == g)[0] for g in uniq]
        picks = rng.integers(0, uniq.size, size=(n_iter, uniq.size))
        stats = np.empty(n_iter)
        for k, row in enumerate(picks):
            i = np.concatenate([members[j] for j in row])
            stats[k] = metric(y_true[i], y_pred[i])
    lo, hi = np.percentile(stats, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)
