"""The online prediction game and the strategies that play it.

Each round ``t > d`` the strategy sees the last ``d`` observations, predicts
``y_t`` in ``[0, 1]^n``, suffers ``u(y_t, x_t)`` and then receives ``x_t``.
The first ``d`` observations are revealed without scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PredictionOutOfRange, ValidationError
from .lipschitz_fit import Schedule, mcshane_fit, mlp_fit, schedule_L
from .losses import LossFn
from .oracle import OptimalRisk, _weighted_quantile, optimal_risk
from .processes import MarkovProcess, Trajectory

__all__ = [
    "ConstantStrategy",
    "HistogramExpertStrategy",
    "LipschitzERMStrategy",
    "OracleStrategy",
    "RetrainPolicy",
    "RunMetrics",
    "Strategy",
    "compare_to_optimal",
    "histogram_expert_strategy",
    "lipschitz_erm_strategy",
    "run_online",
]

_RANGE_TOL = 1e-12


class Strategy:
    """Online forecaster: ``predict`` from the context, then ``update`` with the revealed value."""

    name = "strategy"

    def reset(self, n: int, d: int) -> None:
        self.n = n
        self.d = d
        self.retrain_log = []

    def predict(self, context: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def update(self, x: np.ndarray) -> None:
        pass

    def budget(self) -> float | None:
        return None


@dataclass(frozen=True)
class RetrainPolicy:
    kind: str = "doubling"  # "doubling" or "fixed"
    period: int = 0

    def __post_init__(self):
        if self.kind not in ("doubling", "fixed"):
            raise ValidationError(f"unknown retrain policy {self.kind!r}")
        if self.kind == "fixed" and self.period < 1:
            raise ValidationError("fixed-interval retraining needs a positive period")

    def is_retrain_time(self, t: int) -> bool:
        if self.kind == "doubling":
            return t >= 2 and (t & (t - 1)) == 0
        return t % self.period == 0

    def times(self, T: int) -> list[int]:
        return [t for t in range(1, T + 1) if self.is_retrain_time(t)]

    @classmethod
    def parse(cls, text: str) -> "RetrainPolicy":
        text = text.strip()
        if text == "doubling":
            return cls("doubling")
        if text.startswith("fixed:"):
            return cls("fixed", int(text.split(":", 1)[1]))
        raise ValidationError(f"retrain policy must be 'doubling' or 'fixed:<p>', got {text!r}")

    def __str__(self) -> str:
        return "doubling" if self.kind == "doubling" else f"fixed:{self.period}"


@dataclass
class RunMetrics:
    losses: np.ndarray  # loss of round t = d+1 .. T
    d: int
    checkpoints: list = field(default_factory=list)  # time indices
    averages: list = field(default_factory=list)
    retrains: list = field(default_factory=list)  # (t, budget)
    optimal: float | None = None

    @property
    def T(self) -> int:
        return self.d + len(self.losses)

    @property
    def final_average(self) -> float:
        return float(self.losses.mean()) if len(self.losses) else math.nan

    def average_at(self, t: int) -> float:
        """Mean loss over rounds ``d+1 .. t``."""
        k = t - self.d
        if k < 1 or k > len(self.losses):
            raise ValidationError(f"no scored rounds up to t={t}")
        return float(self.losses[:k].mean())

    def gap_at(self, t: int) -> float:
        if self.optimal is None:
            raise ValidationError("no optimal reference attached")
        return self.average_at(t) - self.optimal

    def budget_at(self, t: int) -> float | None:
        b = None
        for rt, L in self.retrains:
            if rt <= t:
                b = L
        return b


def _checkpoints(d: int, T: int) -> list[int]:
    pts = []
    k = 0
    while 2**k <= T:
        if 2**k > d:
            pts.append(2**k)
        k += 1
    if T > d and (not pts or pts[-1] != T):
        pts.append(T)
    return pts


def run_online(
    trajectory: Trajectory | np.ndarray,
    strategy: Strategy,
    loss: LossFn,
    d: int,
    optimal: float | None = None,
) -> RunMetrics:
    """Play the game over a trajectory; rounds ``1..d`` are revealed unscored."""
    obs = trajectory.observations if isinstance(trajectory, Trajectory) else np.asarray(trajectory, dtype=float)
    obs = np.atleast_2d(obs)
    T, n = obs.shape
    if T < d + 1:
        raise ValidationError(f"trajectory of length {T} is too short for memory d={d}")
    strategy.reset(n, d)
    for t in range(d):
        strategy.update(obs[t].copy())
    losses = np.empty(T - d)
    for t in range(d, T):
        # copy: the strategy must not be able to reach x_t through a view
        context = obs[t - d : t].copy()
        y = np.asarray(strategy.predict(context), dtype=float).reshape(n)
        if not (np.all(y >= -_RANGE_TOL) and np.all(y <= 1.0 + _RANGE_TOL)) or not np.all(np.isfinite(y)):
            raise PredictionOutOfRange(f"round {t + 1}: prediction {y} outside [0, 1]^{n}")
        losses[t - d] = float(loss(y, obs[t]))
        strategy.update(obs[t].copy())
    metrics = RunMetrics(losses, d, retrains=list(getattr(strategy, "retrain_log", [])), optimal=optimal)
    metrics.checkpoints = _checkpoints(d, T)
    csum = np.cumsum(losses)
    metrics.averages = [float(csum[t - d - 1] / (t - d)) for t in metrics.checkpoints]
    return metrics


def compare_to_optimal(metrics: RunMetrics, optimal: OptimalRisk | float):
    """Per-checkpoint gaps ``average loss - L*`` and the final gap."""
    value = optimal.value if isinstance(optimal, OptimalRisk) else float(optimal)
    gaps = [a - value for a in metrics.averages]
    return gaps, metrics.final_average - value


class ConstantStrategy(Strategy):
    name = "constant"

    def __init__(self, value=0.5):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))

    def predict(self, context):
        return np.broadcast_to(self.value, (self.n,)).copy()


class OracleStrategy(Strategy):
    """Plays the exact conditional optimum for the observed context."""

    name = "oracle"

    def __init__(self, process: MarkovProcess, loss: LossFn, d: int | None = None):
        self.process = process
        self.table = optimal_risk(process, loss, d)
        emb = np.asarray(process.embedding)
        self._state_of = {emb[k].tobytes(): k for k in range(process.state_count)}

    def predict(self, context):
        states = tuple(self._state_of[row.tobytes()] for row in np.asarray(context, dtype=float))
        return self.table.per_context[states][0]


class _History:
    def __init__(self, n: int):
        self.buf = np.empty((1024, n))
        self.size = 0

    def append(self, x):
        if self.size == len(self.buf):
            self.buf = np.concatenate([self.buf, np.empty_like(self.buf)])
        self.buf[self.size] = x
        self.size += 1

    @property
    def values(self) -> np.ndarray:
        return self.buf[: self.size]


class LipschitzERMStrategy(Strategy):
    """Refit Lipschitz-constrained ERM on the whole past at retrain times.

    At a retrain time ``t`` (checked after ``x_t`` is revealed) the predictor is
    refit on every pair ``(X_{i-d}^{i-1}, x_i)``, ``i <= t``, with budget
    ``schedule(t)``; it is used from round ``t + 1`` on.  Before the first fit
    the strategy predicts the centre of ``[0, 1]^n``.
    """

    name = "lipschitz_erm"

    def __init__(self, fitter: str, schedule: Schedule, policy: RetrainPolicy, loss: LossFn, d: int, mlp_options=None):
        if fitter not in ("envelope", "mlp"):
            raise ValidationError(f"fitter must be 'envelope' or 'mlp', got {fitter!r}")
        self.fitter = fitter
        self.schedule = schedule
        self.policy = policy
        self.loss = loss
        self.d = d
        self.mlp_options = dict(mlp_options or {})

    def reset(self, n, d):
        if d != self.d:
            raise ValidationError(f"strategy built for d={self.d}, game uses d={d}")
        super().reset(n, d)
        self.history = _History(n)
        self.fn = None
        self.retrain_log = []
        self._cache = {}
        self._budget = None

    def predict(self, context):
        if self.fn is None:
            return np.full(self.n, 0.5)
        key = context.tobytes()
        y = self._cache.get(key)
        if y is None:
            y = np.asarray(self.fn(context.reshape(1, -1)), dtype=float).reshape(self.n)
            if len(self._cache) < 100_000:
                self._cache[key] = y
        return y

    def update(self, x):
        self.history.append(x)
        t = self.history.size
        if t > self.d and self.policy.is_retrain_time(t):
            self._retrain(t)

    def _retrain(self, t: int) -> None:
        obs = self.history.values
        d, n = self.d, self.n
        win = np.lib.stride_tricks.sliding_window_view(obs, (d, n))[:, 0] if d else None
        X = win[: t - d].reshape(t - d, n * d) if d else np.empty((t, 0))
        Y = obs[d:t]
        L = schedule_L(self.schedule, t)
        if self.fitter == "envelope":
            self.fn = mcshane_fit(X, Y, L, self.loss)
        else:
            opts = {"layers": 2, "width": 16, "epochs": 50, "seed": t}
            opts.update(self.mlp_options)
            self.fn = mlp_fit(X, Y, L, loss=self.loss, **opts)
        self._cache = {}
        self._budget = L
        self.retrain_log.append((t, L))

    def budget(self):
        return self._budget


def lipschitz_erm_strategy(fitter, schedule, retrain_policy, loss, d, **kw) -> LipschitzERMStrategy:
    return LipschitzERMStrategy(fitter, schedule, retrain_policy, loss, d, kw or None)


class HistogramExpertStrategy(Strategy):
    """Exponentially weighted mixture of grid-partition experts.

    Expert ``r`` splits the context cube into ``r`` cells per axis and predicts
    the empirical loss minimizer of the past targets seen in the current cell
    (the centre of ``[0, 1]^n`` for an empty cell).
    """

    name = "histogram"

    def __init__(self, resolutions, learning_rate: float, loss: LossFn, d: int):
        resolutions = [int(r) for r in resolutions]
        if not resolutions or any(r < 1 for r in resolutions):
            raise ValidationError("need at least one positive resolution")
        self.resolutions = resolutions
        self.eta = float(learning_rate)
        self.loss = loss
        self.d = d

    def reset(self, n, d):
        super().reset(n, d)
        E = len(self.resolutions)
        self.log_w = np.zeros(E)
        self.weights = np.full(E, 1.0 / E)
        self.cells = [dict() for _ in range(E)]  # cell -> [count, sum, list of targets]
        self._pending = None

    def _cell(self, r: int, context) -> tuple:
        flat = np.asarray(context, dtype=float).reshape(-1)
        return tuple(np.minimum((flat * r).astype(np.int64), r - 1).tolist())

    def _expert_prediction(self, e: int, cell) -> np.ndarray:
        stats = self.cells[e].get(cell)
        if stats is None:
            return np.full(self.n, 0.5)
        count, total, values = stats
        if self.loss.kind == "squared":
            return np.clip(total / count, 0.0, 1.0)
        arr = np.asarray(values)
        probs = np.full(len(arr), 1.0 / len(arr))
        return np.array([_weighted_quantile(arr[:, k], probs, self.loss.quantile) for k in range(self.n)])

    def predict(self, context):
        cells = [self._cell(r, context) for r in self.resolutions]
        preds = np.stack([self._expert_prediction(e, c) for e, c in enumerate(cells)])
        self._pending = (cells, preds)
        return np.clip(self.weights @ preds, 0.0, 1.0)

    def update(self, x):
        if self._pending is not None:
            cells, preds = self._pending
            self.log_w -= self.eta * self.loss(preds, x[None, :])
            w = np.exp(self.log_w - self.log_w.max())
            self.weights = w / w.sum()
            for e, c in enumerate(cells):
                stats = self.cells[e].setdefault(c, [0, np.zeros(self.n), []])
                stats[0] += 1
                stats[1] = stats[1] + x
                if self.loss.kind != "squared":
                    stats[2].append(np.array(x))
            self._pending = None


def histogram_expert_strategy(resolutions, learning_rate, loss, d) -> HistogramExpertStrategy:
    return HistogramExpertStrategy(resolutions, learning_rate, loss, d)
