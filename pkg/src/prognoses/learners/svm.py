"""Linear SVM trained by full-batch hinge-loss subgradient descent, with Platt calibration."""
from __future__ import annotations

import numpy as np


def _objective(w, b, X, s, sw, lam):
    margins = s * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(sw * np.maximum(0.0, 1.0 - margins)))


def train_hinge(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    iterations: int = 2000,
    eta0: float = 1.0,
    sample_weight: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize lam/2 |w|^2 + mean(hinge) with step eta0 / (1 + lam t).

    The bias is not regularized. Subgradient steps are not monotone, so the
    iterate with the lowest objective is returned.
    """
    n, d = X.shape
    s = np.where(y, 1.0, -1.0)
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    w = np.zeros(d)
    b = 0.0
    best = (_objective(w, b, X, s, sw, lam), w.copy(), b)
    for t in range(iterations):
        margins = s * (X @ w + b)
        active = (margins < 1.0) * sw * s
        gw = lam * w - (active @ X) / n
        gb = -float(active.sum()) / n
        eta = eta0 / (1.0 + lam * t)
        w = w - eta * gw
        b = b - eta * gb
        obj = _objective(w, b, X, s, sw, lam)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    return best[1], best[2]


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _platt_nll(a, b, f, t):
    z = a * f + b
    # -t log sigmoid(z) - (1-t) log(1-sigmoid(z)) = softplus(z) - t z
    return float(np.sum(np.logaddexp(0.0, z) - t * z))


def platt_fit(margins: np.ndarray, y: np.ndarray, steps: int = 100) -> tuple[float, float]:
    """Fit P(y=1|f) = sigmoid(a f + b) by damped Newton on smoothed targets.

    Targets are (N+ + 1)/(N+ + 2) and 1/(N- + 2), which keeps the fit finite
    when training margins separate the classes.
    """
    f = np.asarray(margins, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 0.0, float(np.log((n_pos + 1.0) / (n_neg + 1.0)))
    fval = _platt_nll(a, b, f, t)
    for _ in range(steps):
        p = _sigmoid(a * f + b)
        d1 = p - t
        g = np.array([f @ d1, d1.sum()])
        if np.max(np.abs(g)) < 1e-10:
            break
        d2 = p * (1.0 - p)
        H = np.array([[f @ (f * d2), f @ d2], [f @ d2, d2.sum()]]) + 1e-12 * np.eye(2)
        step = np.linalg.solve(H, g)
        lr = 1.0
        while lr >= 1e-10:
            na, nb = a - lr * step[0], b - lr * step[1]
            nf = _platt_nll(na, nb, f, t)
            if nf < fval + 1e-4 * lr * float(g @ (-step)):
                a, b, fval = na, nb, nf
                break
            lr /= 2.0
        else:
            break
    return float(a), float(b)


def platt_proba(margins: np.ndarray, a: float, b: float) -> np.ndarray:
    return _sigmoid(a * np.asarray(margins, dtype=np.float64) + b)
