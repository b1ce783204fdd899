"""Independent-block machinery for beta-mixing sequences.

Covers the alternating H/T block partition, resampling of independent
blocks with the exact stationary block law, uniform deviations over finite
predictor families with exact expectations, the ERM deviation inequality, the
Lipschitz-class concentration bound and a Monte Carlo check of the block
decomposition inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Oversized, TooShort, ValidationError
from .lipschitz_fit.envelope import random_lipschitz_fn
from .losses import LossFn
from .oracle import expected_loss
from .processes import (
    MarkovProcess,
    Trajectory,
    _require_markov,
    _sample_states,
    beta_coefficient,
    context_pairs,
    make_rng,
    sample_trajectory,
)

__all__ = [
    "BlockPartition",
    "BoundReport",
    "DeviationBound",
    "IndependentBlocks",
    "YuReport",
    "beta_or_one",
    "block_partition",
    "concentration_bound",
    "default_block_counts",
    "deviation_probability_bound",
    "erm_deviation_check",
    "resample_independent_blocks",
    "uniform_deviation",
    "witness_family",
    "yu_decomposition_check",
]


@dataclass(frozen=True, eq=False)
class BlockPartition:
    T: int
    mu: int
    a: int
    H_blocks: list  # 1-based index arrays
    T_blocks: list
    remainder: np.ndarray

    def table(self) -> list[tuple[str, int, int]]:
        """Rows ``(name, first, last)`` in time order."""
        rows = []
        for j, (h, t) in enumerate(zip(self.H_blocks, self.T_blocks), start=1):
            rows.append((f"H{j}", int(h[0]), int(h[-1])))
            rows.append((f"T{j}", int(t[0]), int(t[-1])))
        return rows


def default_block_counts(T: int) -> tuple[int, int]:
    """``mu = ceil(sqrt(T / 2))`` block pairs of length ``a = floor(T / (2 mu))``.

    When that leaves ``a = 0`` (only ``T = 3``) the pair count drops to
    ``floor(T / 2)`` with ``a = 1``.
    """
    if T < 2:
        raise TooShort(f"T={T}: need at least 2 observations for one block pair")
    mu = math.ceil(math.sqrt(T / 2))
    a = T // (2 * mu)
    if a < 1:
        mu, a = T // 2, 1
    return mu, a


def block_partition(T: int, mu: int, a: int) -> BlockPartition:
    if mu < 1 or a < 1:
        raise ValidationError("mu and a must be positive")
    if 2 * mu * a > T:
        raise Oversized(f"2*mu*a = {2 * mu * a} exceeds T = {T}")
    H = [np.arange(2 * (j - 1) * a + 1, (2 * j - 1) * a + 1) for j in range(1, mu + 1)]
    Tb = [np.arange((2 * j - 1) * a + 1, 2 * j * a + 1) for j in range(1, mu + 1)]
    return BlockPartition(T, mu, a, H, Tb, np.arange(2 * mu * a + 1, T + 1))


@dataclass(frozen=True, eq=False)
class IndependentBlocks:
    """``mu`` independent blocks of length ``a``, each preceded by its ``d``-state context."""

    states: np.ndarray  # (mu, d + a) state indices, context first
    observations: np.ndarray  # (mu, d + a, n)
    d: int
    seed: object = None

    @property
    def mu(self) -> int:
        return self.states.shape[0]

    @property
    def a(self) -> int:
        return self.states.shape[1] - self.d

    def block(self, j: int) -> np.ndarray:
        """Observations of block ``j`` (0-based) without its context."""
        return self.observations[j, self.d :]


def resample_independent_blocks(process: MarkovProcess, partition: BlockPartition, seed) -> IndependentBlocks:
    """Blocks distributed like the H-blocks, drawn from independent RNG streams.

    Each block starts from a context drawn from the stationary law and runs
    the chain ``a`` steps, so by stationarity it has the law of any H-block.
    """
    _require_markov(process, "resample_independent_blocks")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    d = process.order
    states = np.stack(
        [_sample_states(process, d + partition.a, make_rng(child)) for child in ss.spawn(partition.mu)]
    )
    return IndependentBlocks(states, np.asarray(process.embedding)[states], d, seed)


def _loss_terms(data, functions, loss: LossFn, d: int) -> np.ndarray:
    """Per-function loss terms, shape ``(len(functions), n_blocks, terms_per_block)``."""
    if isinstance(data, IndependentBlocks):
        if d > data.d:
            raise ValidationError(f"blocks carry a {data.d}-state context, predictor needs {d}")
        obs = data.observations[:, data.d - d :]
        mu, length, n = obs.shape
        pairs = [context_pairs(obs[j], d) for j in range(mu)]
        X = np.concatenate([p[0] for p in pairs])
        Y = np.concatenate([p[1] for p in pairs])
        shape = (mu, length - d)
    else:
        obs = data.observations if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
        X, Y = context_pairs(obs, d)
        shape = (1, len(X))
    if len(X) == 0:
        raise ValidationError("no loss terms: sample shorter than the context")
    return np.stack([loss(np.asarray(f(X)).reshape(Y.shape), Y).reshape(shape) for f in functions])


def _check_family(functions) -> list:
    functions = list(functions)
    if not functions:
        raise ValidationError("function family must be nonempty")
    return functions


def deviations(data, functions, loss: LossFn, d: int, process: MarkovProcess):
    """Empirical average losses and exact expected losses for each function."""
    functions = _check_family(functions)
    terms = _loss_terms(data, functions, loss, d)
    emp = terms.reshape(len(functions), -1).mean(axis=1)
    exact = np.array([expected_loss(process, loss, f, d) for f in functions])
    return emp, exact


def uniform_deviation(data, functions, loss: LossFn, d: int, process: MarkovProcess) -> float:
    """``max_f |empirical average loss - exact expected loss|`` over a finite family."""
    emp, exact = deviations(data, functions, loss, d, process)
    return float(np.max(np.abs(emp - exact)))


def erm_deviation_check(sample, functions, loss: LossFn, process: MarkovProcess, d: int):
    """Excess risk of the family's empirical minimizer versus twice the uniform deviation.

    Returns ``(lhs, rhs, holds)``; the inequality is deterministic.
    """
    emp, exact = deviations(sample, functions, loss, d, process)
    lhs = float(emp[int(np.argmin(emp))] - np.min(exact))
    rhs = 2.0 * float(np.max(np.abs(emp - exact)))
    return lhs, rhs, lhs <= rhs + 1e-12


@dataclass(frozen=True)
class BoundReport:
    T: float
    epsilon: float
    L: float
    m: int
    C1: float
    C2: float
    D: float
    tail: float  # clamped to [0, 1]
    tail_raw: float
    log_tail: float


def concentration_bound(T, epsilon, L, m, C1=1.0, C2=1.0) -> BoundReport:
    """Uniform tail bound for the ``L``-Lipschitz class on ``[0, 1]^m``.

    ``D = (T / ln T) (eps / (C2 L))^(m + 2)`` and
    ``tail = 2 D^(-m / (m + 2)) exp(-ln T (C1 D - 1))``.
    """
    if not (T >= 2 and epsilon > 0 and L > 0 and C1 > 0 and C2 > 0 and m >= 0):
        raise ValidationError("need T >= 2, m >= 0 and positive epsilon, L, C1, C2")
    lnT = math.log(T)
    # direct products keep D to a few ulps; the tail's condition number is about C1 D ln T
    try:
        D = T / lnT * (epsilon / (C2 * L)) ** (m + 2)
    except OverflowError:
        D = math.inf
    if 0.0 < D < math.inf:
        log_D = math.log(D)
    else:
        log_D = math.log(T) - math.log(lnT) + (m + 2) * (math.log(epsilon) - math.log(C2 * L))
        D = math.exp(log_D) if log_D < 709 else math.inf
    log_tail = math.fsum([math.log(2.0), -(m / (m + 2)) * log_D, -lnT * C1 * D, lnT])
    tail_raw = math.exp(log_tail) if log_tail < 700 else math.inf
    return BoundReport(T, epsilon, L, m, C1, C2, D, min(1.0, max(0.0, tail_raw)), tail_raw, log_tail)


def beta_or_one(process: MarkovProcess, m: int) -> float:
    """``beta_m``, with the trivial bound 1 when the gap ``m`` is not positive."""
    return beta_coefficient(process, m) if m >= 1 else 1.0


@dataclass(frozen=True)
class DeviationBound:
    T: int
    mu: int
    a: int
    beta_a: float
    beta_a_minus_d: float
    D: float
    block_tail: float
    mixing_term: float
    total: float


def deviation_probability_bound(T, epsilon, L, m, process: MarkovProcess, d: int, C1=1.0, C2=1.0) -> DeviationBound:
    """Deviation probability bound for the ERM at horizon ``T``.

    The block term is the concentration bound with ``mu_T`` in place of ``T``;
    the mixing term is ``2 mu_T beta_{a_T - d}``.
    """
    mu, a = default_block_counts(T)
    if mu < 2:
        raise TooShort(f"T={T}: need at least two block pairs")
    rep = concentration_bound(mu, epsilon, L, m, C1, C2)
    ba, bad = beta_or_one(process, a), beta_or_one(process, a - d)
    mixing = 2.0 * mu * bad
    return DeviationBound(T, mu, a, ba, bad, rep.D, rep.tail_raw, mixing, rep.tail_raw + mixing)


def witness_family(seed: int, count: int, L: float, m_eff: int, n_out: int = 1, n_anchors: int = 5) -> list:
    """Finite family of random ``L``-Lipschitz predictors."""
    rng = make_rng(seed)
    return [random_lipschitz_fn(rng, L, m_eff, n_out, n_anchors) for _ in range(count)]


@dataclass(frozen=True)
class YuReport:
    lhs_freq: float
    block_freq: float
    mu: int
    a: int
    beta: float
    rhs_estimate: float
    std_error: float
    holds: bool
    per_seed: list  # (seed, original deviation, blocked deviation)


def yu_decomposition_check(
    process: MarkovProcess,
    functions,
    T: int,
    epsilon: float,
    seeds,
    loss: LossFn,
    d: int | None = None,
) -> YuReport:
    """Monte Carlo check of the block decomposition inequality.

    Left side: frequency over ``seeds`` of ``max_f |mean loss - E loss| > eps``
    on a length-``T`` stationary sample.  Right side: twice the frequency of
    ``max_f |mean_j f_H(Psi_j) - a E loss| > a eps`` over independent blocks,
    plus ``2 mu beta``.  Each loss term looks ``d`` steps back, so consecutive
    H-blocks are separated by a gap of ``a - d + 1`` and ``beta`` is taken at
    that gap (``beta_a`` when ``d = 1``).
    """
    _require_markov(process, "yu_decomposition_check")
    functions = _check_family(functions)
    seeds = list(seeds)
    d = process.order if d is None else d
    mu, a = default_block_counts(T)
    part = block_partition(T, mu, a)
    exact = np.array([expected_loss(process, loss, f, d) for f in functions])
    hits_orig = hits_block = 0
    per_seed = []
    for s in seeds:
        traj = sample_trajectory(process, T + d, s)
        emp = _loss_terms(traj, functions, loss, d).reshape(len(functions), -1).mean(axis=1)
        dev = float(np.max(np.abs(emp - exact)))
        blocks = resample_independent_blocks(process, part, np.random.SeedSequence(int(s), spawn_key=(1,)))
        fH = _loss_terms(blocks, functions, loss, d).sum(axis=2)  # (F, mu)
        bdev = float(np.max(np.abs(fH.mean(axis=1) - a * exact)))
        hits_orig += dev > epsilon
        hits_block += bdev > a * epsilon
        per_seed.append((s, dev, bdev))
    S = len(seeds)
    p_l, p_b = hits_orig / S, hits_block / S
    beta = beta_or_one(process, a - d + 1)
    rhs = 2.0 * p_b + 2.0 * mu * beta
    se = math.sqrt(p_l * (1 - p_l) / S + 4.0 * p_b * (1 - p_b) / S)
    return YuReport(p_l, p_b, mu, a, beta, rhs, se, p_l <= rhs + 3.0 * se, per_seed)
