"""Exact optimal risk ``L*`` and per-context optimal actions for finite chains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContextExplosion, UnknownContext, Unsupported, ValidationError
from .losses import LossFn
from .processes import MarkovProcess

__all__ = [
    "OptimalRisk",
    "conditional_distribution",
    "constant_risk",
    "context_law",
    "expected_loss",
    "golden_section",
    "optimal_action",
    "optimal_risk",
]

GOLDEN_TOL = 1e-10
DEFAULT_CONTEXT_CAP = 10**6


@dataclass(frozen=True)
class OptimalRisk:
    value: float
    per_context: dict  # context tuple -> (action, conditional risk)
    weights: dict  # context tuple -> stationary probability
    d: int


def _check_markov(process) -> None:
    if not isinstance(process, MarkovProcess):
        raise Unsupported("exact optimal risk needs a finite Markov source")


def _validate_context(process: MarkovProcess, context) -> tuple[int, ...]:
    ctx = tuple(int(s) for s in np.atleast_1d(context)) if np.size(context) else ()
    K = process.state_count
    if len(ctx) < process.order or any(not 0 <= s < K for s in ctx):
        raise UnknownContext(f"context {ctx} is not a valid state tuple of length >= {process.order}")
    return ctx


def conditional_distribution(process: MarkovProcess, context) -> np.ndarray:
    """Next-state law given the last ``d`` states (longer contexts use their tail)."""
    _check_markov(process)
    ctx = _validate_context(process, context)
    tail = ctx[len(ctx) - process.order :]
    return np.array(process.kernel[process.context_index(tail)])


def golden_section(f, lo: float = 0.0, hi: float = 1.0, tol: float = GOLDEN_TOL) -> float:
    """Minimizer of a unimodal scalar function on ``[lo, hi]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min((f(a), a), (f(b), b), (f((a + b) / 2), (a + b) / 2))
    return best[1]


def _weighted_quantile(values: np.ndarray, probs: np.ndarray, level: float) -> float:
    order = np.argsort(values, kind="stable")
    v, p = values[order], probs[order]
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, level - 1e-12, side="left"))
    return float(v[min(i, len(v) - 1)])


def _coordinate_action(values, probs, loss: LossFn, method: str) -> float:
    def risk(y):
        return float(probs @ loss.elementwise(y, values))

    if method == "closed":
        if loss.kind == "squared":
            return float(np.clip(probs @ values, 0.0, 1.0))
        return _weighted_quantile(values, probs, loss.quantile)
    y = golden_section(risk)
    # risk is flat to rounding within ~sqrt(eps) of a smooth minimum, so finish
    # by bisecting on the sign of the subgradient; this lands on the smallest
    # minimizer when the minimum is an interval
    def slope(t):
        return float(probs @ loss.grad(np.array([[t]]), values[:, None])[:, 0])

    lo, hi = max(0.0, y - 1e-6), min(1.0, y + 1e-6)
    if slope(lo) >= 0.0:
        lo = 0.0
    if slope(hi) < 0.0:
        hi = 1.0
    if slope(lo) >= 0.0:
        return lo
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    if loss.kind != "squared":
        # piecewise-linear risk: minimizers start at an atom
        best = risk(hi)
        for v in np.sort(values[probs > 0]):
            if v <= hi + 1e-9 and risk(v) <= best + 1e-12:
                return float(v)
    return hi


def _action_and_risk(dist: np.ndarray, embedding: np.ndarray, loss: LossFn, method: str):
    if method not in ("closed", "golden"):
        raise ValidationError(f"unknown method {method!r}")
    y = np.array([_coordinate_action(embedding[:, k], dist, loss, method) for k in range(embedding.shape[1])])
    risk = float(dist @ loss(y[None, :], embedding))
    return y, max(risk, 0.0)


def optimal_action(process: MarkovProcess, loss: LossFn, context, method: str = "closed"):
    """Action minimizing the conditional expected loss, and that minimal risk.

    ``method="closed"`` uses the conditional mean (squared) or conditional
    quantile (absolute, pinball); ``"golden"`` minimizes each coordinate by
    golden-section search.
    """
    dist = conditional_distribution(process, context)
    return _action_and_risk(dist, np.asarray(process.embedding), loss, method)


def context_law(process: MarkovProcess, d: int, cap: int = DEFAULT_CONTEXT_CAP):
    """Stationary law of length-``d`` state windows and the next-state law given each.

    Returns ``(weights, cond)`` with shapes ``(K**d,)`` and ``(K**d, K)``;
    windows are indexed in base ``K``, oldest state most significant.
    """
    _check_markov(process)
    if d < 0:
        raise ValidationError("d must be >= 0")
    K, o = process.state_count, process.order
    w = max(o, d)
    if K**w > cap or K ** (w + 1) > cap * K:
        raise ContextExplosion(f"K^{w} = {K**w} contexts exceeds cap {cap}")
    joint = np.asarray(process.stationary, dtype=float)  # law of length-o windows
    kernel = np.asarray(process.kernel)
    for _ in range(w - o):
        # extend window by one state; the new state's law depends on the last o states
        size = joint.size
        joint = (joint[:, None] * kernel[np.arange(size) % K**o]).reshape(size * K)
    # joint law of the (w-window, next state)
    size = joint.size
    nxt = joint[:, None] * kernel[np.arange(size) % K**o]
    # marginalize the oldest w-d states
    nxt = nxt.reshape(K ** (w - d), K**d, K).sum(axis=0)
    weights = nxt.sum(axis=1)
    cond = np.empty_like(nxt)
    pos = weights > 0
    cond[pos] = nxt[pos] / weights[pos, None]
    if d >= o:
        # Markov property: the law given a zero-mass window is still the kernel row
        cond[~pos] = kernel[np.flatnonzero(~pos) % K**o]
    else:
        cond[~pos] = 1.0 / K
    return weights, cond


def _tuple_of(index: int, K: int, d: int) -> tuple[int, ...]:
    out = []
    for _ in range(d):
        index, r = divmod(index, K)
        out.append(r)
    return tuple(reversed(out))


def optimal_risk(
    process: MarkovProcess,
    loss: LossFn,
    d: int | None = None,
    *,
    method: str = "closed",
    cap: int = DEFAULT_CONTEXT_CAP,
) -> OptimalRisk:
    """Exact optimal long-run average loss over strategies with memory ``d``.

    Enumerates all ``K**d`` contexts, weighting the conditional minimal risk
    by the stationary law of the context.  With ``d`` at least the chain's
    order this is the optimal quantity over all non-anticipating strategies.
    """
    _check_markov(process)
    d = process.order if d is None else int(d)
    weights, cond = context_law(process, d, cap)
    K = process.state_count
    emb = np.asarray(process.embedding)
    per_context, wmap = {}, {}
    total = 0.0
    for i in range(weights.size):
        y, r = _action_and_risk(cond[i], emb, loss, method)
        ctx = _tuple_of(i, K, d)
        per_context[ctx] = (y, r)
        wmap[ctx] = float(weights[i])
        total += float(weights[i]) * r
    return OptimalRisk(total, per_context, wmap, d)


def expected_loss(process: MarkovProcess, loss: LossFn, predictor, d: int) -> float:
    """Exact stationary expected loss ``E u(f(X_{t-d}^{t-1}), X_t)`` of a memory-``d`` predictor."""
    weights, cond = context_law(process, d)
    K, n = process.state_count, process.n
    emb = np.asarray(process.embedding)
    if d == 0:
        ctx_points = np.empty((1, 0))
    else:
        idx = np.arange(K**d)
        digits = np.stack([(idx // K ** (d - 1 - j)) % K for j in range(d)], axis=1)
        ctx_points = emb[digits].reshape(K**d, n * d)
    preds = np.asarray(predictor(ctx_points), dtype=float).reshape(K**d, n)
    # loss of every prediction against every possible next observation
    per = loss(preds[:, None, :], emb[None, :, :])
    return float(weights @ (cond * per).sum(axis=1))


def constant_risk(process: MarkovProcess, loss: LossFn, y) -> float:
    """Exact risk of always playing ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return expected_loss(process, loss, lambda X: np.tile(y, (len(X), 1)), 0)
