"""Layered ReLU network with per-layer operator-norm caps.

The network's Lipschitz constant is bounded by the product of its layer
norms (ReLU is 1-Lipschitz), so capping layer ``i`` at ``c_i`` certifies the
budget ``prod(c_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..losses import LossFn, make_loss
from ..processes import make_rng
from .spectral import project_spectral, spectral_norm

__all__ = ["SpectralMLP", "init_mlp", "mlp_fit", "mlp_loss_and_grad", "model_lipschitz_bound"]


@dataclass(eq=False)
class SpectralMLP:
    weights: list  # W_i with shape (out, in)
    biases: list
    caps: list
    clip: tuple[float, float] | None = (0.0, 1.0)
    history: dict = field(default_factory=dict)

    @property
    def budget(self) -> float:
        return float(np.prod(self.caps))

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def forward(self, X) -> np.ndarray:
        h = np.asarray(X, dtype=float).reshape(-1, self.in_dim)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def __call__(self, X) -> np.ndarray:
        out = self.forward(X)
        if self.clip is not None:
            out = np.clip(out, *self.clip)
        return out

    def copy(self) -> "SpectralMLP":
        return SpectralMLP([W.copy() for W in self.weights], [b.copy() for b in self.biases], list(self.caps), self.clip)

    def project(self) -> None:
        self.weights = [project_spectral(W, c) for W, c in zip(self.weights, self.caps)]


def model_lipschitz_bound(mlp: SpectralMLP) -> float:
    """Product of the layers' spectral norms."""
    return float(np.prod([spectral_norm(W) for W in mlp.weights]))


def init_mlp(in_dim: int, out_dim: int, layers: int, width: int, budget: float, rng) -> SpectralMLP:
    if layers < 1:
        raise ValidationError("need at least one layer")
    if not budget > 0:
        raise ValidationError("budget must be positive")
    dims = [in_dim] + [width] * (layers - 1) + [out_dim]
    Ws, bs = [], []
    for i in range(layers):
        fan_in = max(dims[i], 1)
        Ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(dims[i + 1], dims[i])))
        bs.append(np.zeros(dims[i + 1]))
    cap = budget ** (1.0 / layers)
    net = SpectralMLP(Ws, bs, [cap] * layers)
    net.project()
    return net


def mlp_loss_and_grad(mlp: SpectralMLP, X, Y, loss: LossFn):
    """Mean loss of the unclipped output and its gradients ``(dW_i, db_i)``."""
    X = np.asarray(X, dtype=float).reshape(-1, mlp.in_dim)
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    N = len(X)
    acts = [X]
    pre = []
    h = X
    last = len(mlp.weights) - 1
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    value = float(loss(h, Y).mean())
    delta = loss.grad(h, Y) / N
    gW = [None] * len(mlp.weights)
    gb = [None] * len(mlp.weights)
    for i in range(last, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ mlp.weights[i]) * (pre[i - 1] > 0)
    return value, gW, gb


def mlp_fit(
    X,
    Y,
    budget: float,
    layers: int = 2,
    width: int = 16,
    epochs: int = 200,
    seed: int = 0,
    *,
    loss: LossFn | None = None,
    lr: float = 1e-2,
    batch_size: int = 64,
    init: SpectralMLP | None = None,
) -> SpectralMLP:
    """Fit a capped network by mini-batch Adam steps, projecting every layer after each step.

    Each layer is capped at ``budget ** (1 / layers)``.  Returns the state with
    the lowest full-sample (clipped) empirical loss seen at the end of any
    epoch.  Deterministic in ``seed``.
    """
    loss = loss or make_loss("squared")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) < 1 or len(X) != len(Y):
        raise ValidationError("need matching, nonempty samples")
    rng = make_rng(seed)
    net = init.copy() if init is not None else init_mlp(X.shape[1], Y.shape[1], layers, width, budget, rng)
    cap = budget ** (1.0 / len(net.weights))
    net.caps = [cap] * len(net.weights)
    net.project()

    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    def empirical(model):
        return float(loss(model(X), Y).mean())

    best, best_loss = net.copy(), empirical(net)
    N = len(X)
    for _ in range(epochs):
        order = rng.permutation(N)
        for s in range(0, N, batch_size):
            idx = order[s : s + batch_size]
            _, gW, gb = mlp_loss_and_grad(net, X[idx], Y[idx], loss)
            step += 1
            grads = gW + gb
            params = net.weights + net.biases
            for k, (p, g) in enumerate(zip(params, grads)):
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                mh = m[k] / (1 - b1**step)
                vh = v[k] / (1 - b2**step)
                p -= lr * mh / (np.sqrt(vh) + eps)
            net.project()
        cur = empirical(net)
        if cur < best_loss:
            best, best_loss = net.copy(), cur
    best.history["empirical_loss"] = best_loss
    return best
