"""Stationary ergodic sources with exactly known law.

Finite-state Markov chains of order ``d`` carry an exact transition kernel,
stationary law and beta-mixing coefficients.  A clamped autoregressive source
is provided as a continuous-state smoke test; its mixing coefficients are not
available.

Contexts of a chain are length-``d`` state tuples ``(s_1, ..., s_d)`` with
``s_d`` the most recent state.  They are indexed in base ``K`` with the oldest
state as the most significant digit.
"""

from __future__ import annotations

import csv
import itertools
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    NoConvergence,
    NotErgodic,
    RowSumError,
    Unsupported,
    ValidationError,
)

__all__ = [
    "ArProcess",
    "MarkovProcess",
    "Trajectory",
    "beta_coefficient",
    "beta_coefficients",
    "build_ar",
    "build_markov",
    "context_pairs",
    "iid_chain",
    "make_rng",
    "read_trajectory",
    "sample",
    "sample_ar",
    "sample_trajectory",
    "second_eigenvalue_modulus",
    "stationary_distribution",
    "symmetric_chain",
    "write_trajectory",
]

ROW_SUM_TOL = 1e-12


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Counter-based Philox generator from a 64-bit seed or a spawned sequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkovProcess:
    """Order-``d`` chain on ``K`` states embedded into ``[0, 1]^n``.

    ``kernel`` has ``K**d`` rows (one per context) and ``K`` columns.
    """

    kernel: np.ndarray
    embedding: np.ndarray
    order: int
    ergodic: bool = True

    @property
    def state_count(self) -> int:
        return self.embedding.shape[0]

    @property
    def n(self) -> int:
        return self.embedding.shape[1]

    @property
    def context_count(self) -> int:
        return self.kernel.shape[0]

    def context_index(self, states: Sequence[int]) -> int:
        K = self.state_count
        idx = 0
        for s in states:
            idx = idx * K + int(s)
        return idx

    def context_states(self, index: int, length: int | None = None) -> tuple[int, ...]:
        K = self.state_count
        length = self.order if length is None else length
        out = []
        for _ in range(length):
            index, r = divmod(index, K)
            out.append(r)
        return tuple(reversed(out))

    @cached_property
    def context_matrix(self) -> np.ndarray:
        """Transition matrix of the chain lifted to contexts (``K**d`` square)."""
        K, Kd = self.state_count, self.context_count
        Q = np.zeros((Kd, Kd))
        for c in range(Kd):
            for s in range(K):
                Q[c, (c * K + s) % Kd] += self.kernel[c, s]
        Q.setflags(write=False)
        return Q

    @cached_property
    def stationary(self) -> np.ndarray:
        return stationary_distribution(self)

    def describe(self) -> str:
        return f"markov(K={self.state_count},d={self.order},n={self.n})"


@dataclass(frozen=True, eq=False)
class ArProcess:
    """Clamped AR(d): ``x_t = mean + sum_i a_i (x_{t-i} - mean) + U(-h, h)``."""

    coefficients: np.ndarray
    noise: float = 0.0
    mean: float = 0.0
    init: np.ndarray = field(default_factory=lambda: np.zeros(0))
    clamp: tuple[float, float] = (0.0, 1.0)

    @property
    def order(self) -> int:
        return len(self.coefficients)

    @property
    def n(self) -> int:
        return 1

    def describe(self) -> str:
        return f"ar(d={self.order},noise={self.noise!r})"


@dataclass(frozen=True, eq=False)
class Trajectory:
    seed: int | None
    observations: np.ndarray
    states: np.ndarray | None = None
    source: str = ""

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def n(self) -> int:
        return self.observations.shape[1]


def _reachable_power(pattern: np.ndarray, exponent: int) -> np.ndarray:
    """Boolean pattern of ``pattern**exponent`` by repeated squaring."""
    result = np.eye(pattern.shape[0], dtype=bool)
    base = pattern.astype(bool)
    while exponent:
        if exponent & 1:
            result = (result.astype(np.int64) @ base.astype(np.int64)) > 0
        exponent >>= 1
        if exponent:
            base = (base.astype(np.int64) @ base.astype(np.int64)) > 0
    return result


def build_markov(
    kernel,
    embedding,
    d: int = 1,
    n: int | None = None,
    *,
    ergodic: bool = True,
    exponent_cap: int | None = None,
) -> MarkovProcess:
    """Validate and build an order-``d`` Markov source.

    Parameters
    ----------
    kernel : array_like, shape (K**d, K)
        Row-stochastic next-state probabilities per context.
    embedding : array_like, shape (K,) or (K, n)
        Observation emitted for each state.
    d : int
        Order (memory bound) of the chain.
    n : int, optional
        Declared observation dimension; checked against ``embedding``.
    ergodic : bool
        Require the context chain to be primitive.
    exponent_cap : int, optional
        Matrix power tested by the ergodicity check.  The default is at least
        Wielandt's bound ``(N - 1)**2 + 1`` for ``N = K**d`` contexts, so a
        primitive context chain is never rejected.
    """
    if d < 1:
        raise ValidationError("order d must be a positive integer")
    emb = np.asarray(embedding, dtype=float)
    if emb.ndim == 1:
        emb = emb[:, None]
    if emb.ndim != 2 or emb.shape[0] < 1:
        raise ValidationError("embedding must be a nonempty (K, n) array")
    K = emb.shape[0]
    if n is not None and emb.shape[1] != n:
        raise ValidationError(f"embedding has dimension {emb.shape[1]}, declared n={n}")
    if np.any(emb < 0.0) or np.any(emb > 1.0) or not np.all(np.isfinite(emb)):
        raise ValidationError("embedding coordinates must lie in [0, 1]")
    if len({tuple(r) for r in emb.tolist()}) != K:
        raise ValidationError("embedding must be injective")

    P = np.asarray(kernel, dtype=float)
    if P.ndim != 2 or P.shape != (K**d, K):
        raise ValidationError(f"kernel must have shape ({K**d}, {K}) for K={K}, d={d}; got {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0.0):
        bad = int(np.argwhere(~(P >= 0.0))[0][0])
        raise ValidationError(f"kernel row {bad} has a negative or non-finite entry")
    sums = P.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > ROW_SUM_TOL:
            raise RowSumError(i, float(s))

    proc = MarkovProcess(_frozen(P), _frozen(emb), int(d), bool(ergodic))
    if ergodic:
        N = K**d
        cap = exponent_cap if exponent_cap is not None else max(N * K + 1, (N - 1) ** 2 + 1)
        if not np.all(_reachable_power(proc.context_matrix > 0, cap)):
            raise NotErgodic(f"context chain is not primitive: its power {cap} has a zero entry")
    return proc


def iid_chain(probs, embedding) -> MarkovProcess:
    """Order-1 chain whose rows all equal ``probs``."""
    probs = np.asarray(probs, dtype=float)
    return build_markov(np.tile(probs, (len(probs), 1)), embedding, 1)


def symmetric_chain(stay: float, embedding=(0.0, 1.0)) -> MarkovProcess:
    """Two-state chain that keeps its state with probability ``stay``."""
    return build_markov([[stay, 1.0 - stay], [1.0 - stay, stay]], embedding, 1)


def stationary_distribution(process: MarkovProcess, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Stationary law over contexts, ``pi Q = pi``, residual at most ``tol``."""
    Q = np.asarray(process.context_matrix)
    N = Q.shape[0]
    A = np.vstack([Q.T - np.eye(N), np.ones((1, N))])
    b = np.zeros(N + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    for _ in range(max_iter):
        resid = np.max(np.abs(pi @ Q - pi))
        if resid <= tol:
            pi.setflags(write=False)
            return pi
        pi = pi @ Q
        pi /= pi.sum()
    raise NoConvergence(f"stationary residual {resid:.3e} above {tol:.1e} after {max_iter} iterations")


def second_eigenvalue_modulus(process: MarkovProcess) -> float:
    eig = np.sort(np.abs(np.linalg.eigvals(process.context_matrix)))[::-1]
    return float(eig[1]) if len(eig) > 1 else 0.0


def _require_markov(process, what: str) -> None:
    if not isinstance(process, MarkovProcess):
        raise Unsupported(f"{what} requires a finite Markov source")


def beta_coefficients(process: MarkovProcess, m_max: int) -> np.ndarray:
    """Exact ``beta_1 .. beta_{m_max}``.

    For an order-``d`` chain the future beyond a gap ``m`` is generated by the
    context ``m + d - 1`` context-steps after the last past context, so
    ``beta_m = sum_c pi(c) TV(Q^{m+d-1}(c, .), pi)``.
    """
    _require_markov(process, "beta_coefficient")
    if m_max < 1:
        raise ValidationError("m must be >= 1")
    Q = np.asarray(process.context_matrix)
    pi = np.asarray(process.stationary)
    power = np.eye(Q.shape[0])
    for _ in range(process.order - 1):
        power = power @ Q
    out = np.empty(m_max)
    for m in range(m_max):
        power = power @ Q
        tv = 0.5 * np.abs(power - pi[None, :]).sum(axis=1)
        out[m] = min(1.0, max(0.0, float(pi @ tv)))
    return out


def beta_coefficient(process: MarkovProcess, m: int) -> float:
    """Exact absolute-regularity coefficient ``beta_m`` of a Markov source."""
    _require_markov(process, "beta_coefficient")
    if m < 1:
        raise ValidationError("m must be >= 1")
    return float(beta_coefficients(process, m)[-1])


def _draw_context(process: MarkovProcess, rng: np.random.Generator) -> int:
    cum = np.cumsum(process.stationary)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), process.context_count - 1)


def _run_chain(process: MarkovProcess, ctx: int, steps: int, u: np.ndarray) -> list[int]:
    K, Kd = process.state_count, process.context_count
    cum = np.cumsum(process.kernel, axis=1)
    cum[:, -1] = np.inf
    rows = cum.tolist()
    out = []
    for t in range(steps):
        s = bisect_right(rows[ctx], u[t])
        out.append(s)
        ctx = (ctx * K + s) % Kd
    return out


def _sample_states(process: MarkovProcess, T: int, rng: np.random.Generator, start=None) -> np.ndarray:
    d = process.order
    if start is None:
        ctx = _draw_context(process, rng)
    else:
        start = tuple(int(s) for s in np.atleast_1d(start))
        if len(start) != d or any(not 0 <= s < process.state_count for s in start):
            raise ValidationError(f"start context must be {d} valid states")
        ctx = process.context_index(start)
    head = list(process.context_states(ctx))
    u = rng.random(max(T - d, 0))
    states = head + _run_chain(process, ctx, max(T - d, 0), u)
    return np.asarray(states[:T], dtype=np.int64)


def sample_trajectory(process: MarkovProcess, T: int, seed: int, start=None) -> Trajectory:
    """Stationary sample path of length ``T``.

    The first ``d`` states are a context drawn from the stationary law of the
    context chain (or ``start`` when given), so the path is stationary from
    ``t = 1``.
    """
    _require_markov(process, "sample_trajectory")
    if T < 1:
        raise ValidationError("T must be >= 1")
    states = _sample_states(process, int(T), make_rng(seed), start)
    obs = process.embedding[states]
    return Trajectory(seed, obs, states, process.describe())


def build_ar(coefficients, noise: float = 0.0, mean: float = 0.0, init=None) -> ArProcess:
    a = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if a.ndim != 1 or len(a) < 1:
        raise ValidationError("AR coefficients must be a nonempty vector")
    if not np.sum(np.abs(a)) < 1.0:
        raise ValidationError("AR coefficient l1-norm must be strictly below 1")
    if noise < 0:
        raise ValidationError("noise half-width must be nonnegative")
    if init is None:
        init = np.full(len(a), mean)
    init = np.broadcast_to(np.asarray(init, dtype=float), (len(a),)).copy()
    return ArProcess(_frozen(a), float(noise), float(mean), _frozen(init))


def sample_ar(process: ArProcess, T: int, seed: int) -> Trajectory:
    """Clamped AR path; the ``init`` values (time order) are the first ``d`` observations."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    lo, hi = process.clamp
    a = process.coefficients
    d = len(a)
    rng = make_rng(seed)
    steps = max(T - d, 0)
    eps = rng.uniform(-process.noise, process.noise, size=steps) if process.noise > 0 else np.zeros(steps)
    x = np.empty(max(T, d))
    x[:d] = np.clip(process.init, lo, hi)
    mu = process.mean
    for t in range(d, T):
        lagged = x[t - d : t][::-1]  # x_{t-1}, ..., x_{t-d}
        x[t] = min(hi, max(lo, mu + float(a @ (lagged - mu)) + eps[t - d]))
    return Trajectory(seed, x[:T, None].copy(), None, process.describe())


def sample(process, T: int, seed: int) -> Trajectory:
    if isinstance(process, MarkovProcess):
        return sample_trajectory(process, T, seed)
    if isinstance(process, ArProcess):
        return sample_ar(process, T, seed)
    raise Unsupported(f"cannot sample from {type(process).__name__}")


def context_pairs(observations: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened contexts ``X_{t-d}^{t-1}`` (oldest first) and targets ``x_t`` for ``t > d``."""
    obs = np.asarray(observations, dtype=float)
    T, n = obs.shape
    if T <= d:
        return np.empty((0, n * d)), np.empty((0, n))
    if d == 0:
        return np.empty((T, 0)), obs.copy()
    win = np.lib.stride_tricks.sliding_window_view(obs, (d, n))[:, 0]
    return win[: T - d].reshape(T - d, n * d).copy(), obs[d:].copy()


def write_trajectory(path, traj: Trajectory) -> None:
    """CSV with header ``t,x_1,...,x_n`` at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(traj.n)])
        for t, row in enumerate(traj.observations, start=1):
            w.writerow([t] + [f"{v:.17g}" for v in row])


def read_trajectory(path, seed: int | None = None) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if not header or header[0] != "t" or any(h != f"x_{i + 1}" for i, h in enumerate(header[1:])):
        raise ValidationError(f"{path}: bad trajectory header {header!r}")
    body = rows[1:]
    for expect, r in enumerate(body, start=1):
        if int(r[0]) != expect:
            raise ValidationError(f"{path}: row {expect} has t={r[0]}")
    obs = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(header) - 1)
    return Trajectory(seed, obs, None, str(path))


def enumerate_contexts(K: int, d: int):
    return itertools.product(range(K), repeat=d)
