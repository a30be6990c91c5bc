"""ReLU multilayer perceptron with a logistic output unit, trained by full-batch momentum GD."""
from __future__ import annotations

import numpy as np

Params = list  # [W1, b1, W2, b2, ...]; W_k has shape (fan_in, fan_out)


def init_params(sizes: list[int], rng: np.random.Generator) -> Params:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params: Params, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Return output logits and the list of layer inputs (for backprop)."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            return z[:, 0], acts
    raise ValueError("empty parameter list")


def _data_loss_grad(params: Params, X, y, w, out: Params) -> float:
    """Mean weighted cross-entropy; its gradient is written into ``out``."""
    n = X.shape[0]
    logits, acts = forward(params, X)
    loss = float(np.dot(w, np.logaddexp(0.0, logits) - y * logits)) / n
    p = 1.0 / (1.0 + np.exp(-logits))
    delta = (w * (p - y) / n)[:, None]
    for k in reversed(range(len(params) // 2)):
        W = params[2 * k]
        np.matmul(acts[k].T, delta, out=out[2 * k])
        np.sum(delta, axis=0, out=out[2 * k + 1])
        if k > 0:
            delta = (delta @ W.T) * (acts[k] > 0)
    return loss


def _weights(y, sample_weight):
    return np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)


def loss_and_gradient(
    params: Params,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
    sample_weight: np.ndarray | None = None,
) -> tuple[float, Params]:
    """Mean (weighted) cross-entropy plus l2/2 * sum of squared weights, and its gradient.

    Biases are not penalized.
    """
    y = np.asarray(y, dtype=np.float64)
    grads = [np.empty_like(p) for p in params]
    loss = _data_loss_grad(params, X, y, _weights(y, sample_weight), grads)
    if l2:
        for W, g in zip(params[0::2], grads[0::2]):
            loss += 0.5 * l2 * float(np.vdot(W, W))
            g += l2 * W
    return loss, grads


def mlp_gradient(params: Params, X, y, l2: float = 0.0, sample_weight=None) -> Params:
    return loss_and_gradient(params, X, y, l2, sample_weight)[1]


def _layout(params: Params) -> list[tuple[int, int, tuple]]:
    out, pos = [], 0
    for p in params:
        out.append((pos, pos + p.size, p.shape))
        pos += p.size
    return out


def _unflatten(theta: np.ndarray, layout) -> Params:
    return [theta[a:b].reshape(shape) for a, b, shape in layout]


def train(
    X: np.ndarray,
    y: np.ndarray,
    hidden: tuple[int, ...],
    lr: float,
    l2: float,
    rng: np.random.Generator,
    epochs: int = 500,
    momentum: float = 0.9,
    sample_weight: np.ndarray | None = None,
    history: list | None = None,
) -> Params:
    """Full-batch gradient descent with momentum.

    A step that would raise the training loss is rejected: the learning rate
    is halved and momentum reset until the step no longer increases it.
    """
    y = np.asarray(y, dtype=np.float64)
    w = _weights(y, sample_weight)
    init = init_params([X.shape[1], *hidden, 1], rng)
    layout = _layout(init)
    theta = np.concatenate([p.ravel() for p in init])
    # per-coordinate penalty: l2 on weights, 0 on biases
    penalty = np.concatenate([np.full(p.size, l2 if i % 2 == 0 else 0.0) for i, p in enumerate(init)])
    # preallocated flat buffers; large temporaries per epoch dominated the runtime
    grad, new_grad, velocity, new_v, proposal, scratch = (np.zeros_like(theta) for _ in range(6))

    def evaluate(t, g):
        loss = _data_loss_grad(_unflatten(t, layout), X, y, w, _unflatten(g, layout))
        if l2:
            np.multiply(t, penalty, out=scratch)
            g += scratch
            loss += 0.5 * float(np.dot(scratch, t))
        return loss

    loss = evaluate(theta, grad)
    if history is not None:
        history.append(loss)
    for _ in range(epochs):
        while True:
            np.multiply(velocity, momentum, out=new_v)
            np.multiply(grad, lr, out=scratch)
            new_v -= scratch
            np.add(theta, new_v, out=proposal)
            new_loss = evaluate(proposal, new_grad)
            if new_loss <= loss:
                break
            lr /= 2.0
            velocity.fill(0.0)
            if lr < 1e-12:
                return [p.copy() for p in _unflatten(theta, layout)]
        theta, proposal = proposal, theta
        velocity, new_v = new_v, velocity
        grad, new_grad = new_grad, grad
        loss = new_loss
        if history is not None:
            history.append(loss)
        if grad.max() < 1e-9 and grad.min() > -1e-9:
            break
    return [p.copy() for p in _unflatten(theta, layout)]


def predict_proba(params: Params, X: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, X)
    return 1.0 / (1.0 + np.exp(-logits))
