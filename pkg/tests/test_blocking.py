import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import check_partition
from lipschitz_online.blocking import (
    block_partition,
    concentration_bound,
    default_block_counts,
    deviation_probability_bound,
    erm_deviation_check,
    resample_independent_blocks,
    uniform_deviation,
    witness_family,
    yu_decomposition_check,
)
from lipschitz_online.errors import Oversized, TooShort, Unsupported, ValidationError
from lipschitz_online.losses import make_loss
from lipschitz_online.processes import (
    beta_coefficient,
    build_ar,
    build_markov,
    sample_trajectory,
    stationary_distribution,
)

mpmath = pytest.importorskip("mpmath")

SQ = make_loss("squared")


class TestBlockCounts:
    @pytest.mark.parametrize("T, expected", [(200, (10, 10)), (8, (2, 2)), (10, (3, 1)), (2, (1, 1))])
    def test_examples(self, T, expected):
        assert default_block_counts(T) == expected

    def test_remainder_of_ten(self):
        mu, a = default_block_counts(10)
        part = block_partition(10, mu, a)
        assert part.remainder.tolist() == [7, 8, 9, 10]
        covered = np.concatenate(part.H_blocks + part.T_blocks)
        assert sorted(covered.tolist()) == list(range(1, 7))

    def test_three_falls_back_to_one_pair(self):
        assert default_block_counts(3) == (1, 1)

    @pytest.mark.parametrize("T", [0, 1])
    def test_too_short(self, T):
        with pytest.raises(TooShort):
            default_block_counts(T)

    @given(st.integers(2, 10_000))
    def test_partition_property(self, T):
        mu, a = default_block_counts(T)
        assert a >= 1 and T - 2 * mu * a < 2 * mu or T == 3
        check_partition(T, block_partition(T, mu, a))


class TestBlockPartition:
    def test_eight_table(self):
        part = block_partition(8, 2, 2)
        assert part.table() == [("H1", 1, 2), ("T1", 3, 4), ("H2", 5, 6), ("T2", 7, 8)]
        assert part.remainder.size == 0

    def test_ten_keeps_blocks_and_reports_remainder(self):
        part = block_partition(10, 2, 2)
        assert part.table() == block_partition(8, 2, 2).table()
        assert part.remainder.tolist() == [9, 10]

    def test_single_pair(self):
        part = block_partition(7, 1, 3)
        assert part.H_blocks[0].tolist() == [1, 2, 3]
        assert part.T_blocks[0].tolist() == [4, 5, 6]

    def test_oversized(self):
        with pytest.raises(Oversized):
            block_partition(7, 2, 2)

    def test_nonpositive(self):
        with pytest.raises(ValidationError):
            block_partition(7, 0, 2)


class TestResample:
    def test_two_cycle_blocks_alternate(self, two_cycle):
        blocks = resample_independent_blocks(two_cycle, block_partition(40, 4, 5), 3)
        assert blocks.mu == 4 and blocks.a == 5
        for j in range(blocks.mu):
            s = blocks.states[j]
            assert np.all(s[1:] != s[:-1])

    def test_single_state_chain(self):
        p = build_markov([[1.0]], [0.25], 1)
        blocks = resample_independent_blocks(p, block_partition(12, 3, 2), 0)
        assert np.all(blocks.observations == 0.25)

    def test_block_means_match_stationary_mean(self, stay09):
        part = block_partition(100_000, 10_000, 5)
        blocks = resample_independent_blocks(stay09, part, 11)
        means = np.array([blocks.block(j).mean() for j in range(blocks.mu)])
        exact = float(stationary_distribution(stay09) @ np.asarray(stay09.embedding)[:, 0])
        se = means.std(ddof=1) / math.sqrt(len(means))
        assert abs(means.mean() - exact) <= 3 * se

    def test_blocks_exchangeable(self, stay09):
        part = block_partition(40, 4, 5)
        first, last = [], []
        for seed in range(2000):
            b = resample_independent_blocks(stay09, part, seed)
            first.append(b.block(0).mean())
            last.append(b.block(b.mu - 1).mean())
        first, last = np.array(first), np.array(last)
        se = math.sqrt(first.var(ddof=1) / len(first) + last.var(ddof=1) / len(last))
        assert abs(first.mean() - last.mean()) <= 4 * se

    def test_deterministic_per_seed(self, stay09):
        part = block_partition(40, 4, 5)
        a = resample_independent_blocks(stay09, part, 5)
        b = resample_independent_blocks(stay09, part, 5)
        assert np.array_equal(a.states, b.states)

    def test_ar_unsupported(self):
        with pytest.raises(Unsupported):
            resample_independent_blocks(build_ar([0.5], 0.1, 0.5), block_partition(8, 2, 2), 0)


class TestUniformDeviation:
    def test_two_cycle_exact_on_even_sample(self, two_cycle):
        traj = sample_trajectory(two_cycle, 101, 0)
        fam = witness_family(0, 5, 1.0, 1)
        assert uniform_deviation(traj, fam, SQ, 1, two_cycle) == pytest.approx(0.0, abs=1e-15)

    def test_root_t_rate(self, iid_half):
        fam = [lambda X: np.full((len(X), 1), 0.3)]
        small = np.median([uniform_deviation(sample_trajectory(iid_half, 100, s), fam, SQ, 0, iid_half) for s in range(30)])
        large = np.median(
            [uniform_deviation(sample_trajectory(iid_half, 10_000, s), fam, SQ, 0, iid_half) for s in range(30)]
        )
        assert 0.05 <= (small / large) / math.sqrt(100) <= 20

    def test_empty_family(self, stay09):
        with pytest.raises(ValidationError):
            uniform_deviation(sample_trajectory(stay09, 10, 0), [], SQ, 1, stay09)

    def test_blocks_need_enough_context(self, stay09):
        blocks = resample_independent_blocks(stay09, block_partition(8, 2, 2), 0)
        with pytest.raises(ValidationError):
            uniform_deviation(blocks, witness_family(0, 1, 1.0, 2), SQ, 2, stay09)


class TestErmDeviation:
    def test_singleton(self, stay09):
        traj = sample_trajectory(stay09, 500, 1)
        lhs, rhs, holds = erm_deviation_check(traj, witness_family(1, 1, 1.0, 1), SQ, stay09, 1)
        assert holds and abs(lhs) <= rhs / 2 + 1e-15

    def test_minimizers_agree(self, stay09):
        # the oracle map dominates two poor constants both empirically and in expectation
        fam = [
            lambda X: np.where(X > 0.5, 0.9, 0.1),
            lambda X: np.full_like(X, 0.0),
            lambda X: np.full_like(X, 1.0),
        ]
        traj = sample_trajectory(stay09, 5000, 2)
        lhs, rhs, holds = erm_deviation_check(traj, fam, SQ, stay09, 1)
        assert holds

    @pytest.mark.parametrize("seed", range(5))
    def test_random_family(self, stay09, seed):
        traj = sample_trajectory(stay09, 2000, seed)
        fam = witness_family(seed, 50, 1.0, 1)
        assert erm_deviation_check(traj, fam, SQ, stay09, 1)[2]


class TestConcentrationBound:
    def test_d_example(self):
        rep = concentration_bound(100, 2.0, 2.0, 3)
        assert rep.D == pytest.approx(100 / math.log(100), rel=1e-12)
        assert rep.D == pytest.approx(21.7147, abs=5e-5)

    def test_tail_clamped_raw_kept(self):
        rep = concentration_bound(3, 0.1, 5.0, 2)
        assert rep.tail_raw > 1 and rep.tail == 1.0

    def test_doubling_l_quarters_d(self):
        a = concentration_bound(500, 0.3, 1.0, 0)
        b = concentration_bound(500, 0.3, 2.0, 0)
        assert b.D == pytest.approx(a.D / 4, rel=1e-12)

    def test_tail_nonincreasing_in_t(self):
        Ts = np.arange(50, 5000, 37)
        reps = [concentration_bound(int(T), 0.5, 1.0, 2) for T in Ts]
        tails = [r.log_tail for r, T in zip(reps, Ts) if r.D > 1.0]
        assert len(tails) > 10
        assert np.all(np.diff(tails) <= 1e-12)

    @given(
        st.floats(2.0, 1e6),
        st.floats(1e-3, 10.0),
        st.floats(1e-2, 10.0),
        st.integers(0, 6),
        st.floats(0.1, 3.0),
        st.floats(0.1, 3.0),
    )
    def test_matches_extended_precision(self, T, eps, L, m, C1, C2):
        rep = concentration_bound(T, eps, L, m, C1, C2)
        with mpmath.workdps(40):
            lnT = mpmath.log(T)
            D = T / lnT * (mpmath.mpf(eps) / (C2 * mpmath.mpf(L))) ** (m + 2)
            log_tail = mpmath.log(2) - mpmath.mpf(m) / (m + 2) * mpmath.log(D) - lnT * (C1 * D - 1)
        assert rep.D == pytest.approx(float(D), rel=1e-12)
        assert rep.log_tail == pytest.approx(float(log_tail), rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("args", [(1.5, 1, 1, 1), (100, 0, 1, 1), (100, 1, -1, 1), (100, 1, 1, -1)])
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            concentration_bound(*args)


class TestDeviationProbabilityBound:
    def test_fields(self, stay09):
        tb = deviation_probability_bound(200, 0.5, 1.0, 1, stay09, 1)
        assert (tb.mu, tb.a) == (10, 10)
        assert tb.beta_a == pytest.approx(beta_coefficient(stay09, 10), abs=1e-15)
        assert tb.beta_a_minus_d == pytest.approx(beta_coefficient(stay09, 9), abs=1e-15)
        assert tb.mixing_term == pytest.approx(20 * tb.beta_a_minus_d)
        assert tb.total == pytest.approx(tb.block_tail + tb.mixing_term)

    def test_too_short(self, stay09):
        with pytest.raises(TooShort):
            deviation_probability_bound(3, 0.5, 1.0, 1, stay09, 1)


class TestWitnessFamily:
    def test_members_are_lipschitz_and_bounded(self):
        rng = np.random.default_rng(0)
        for f in witness_family(4, 10, 0.7, 2):
            A, B = rng.random((500, 2)), rng.random((500, 2))
            fa, fb = f(A), f(B)
            assert np.all((fa >= 0) & (fa <= 1))
            assert np.all(np.abs(fa - fb)[:, 0] <= 0.7 * np.linalg.norm(A - B, axis=1) + 1e-12)

    def test_deterministic(self):
        X = np.random.default_rng(1).random((20, 1))
        a = [f(X) for f in witness_family(9, 3, 1.0, 1)]
        b = [f(X) for f in witness_family(9, 3, 1.0, 1)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestYuCheck:
    def test_iid_reduces_to_frequency_comparison(self, iid_half):
        rep = yu_decomposition_check(iid_half, [lambda X: np.full((len(X), 1), 0.3)], 512, 0.01, range(100), SQ, d=1)
        assert rep.beta == pytest.approx(0.0, abs=1e-15)
        assert rep.rhs_estimate == pytest.approx(2 * rep.block_freq, abs=1e-12)
        assert 0 < rep.lhs_freq < 1
        assert rep.holds

    def test_large_epsilon_never_fires(self, stay09):
        rep = yu_decomposition_check(stay09, witness_family(0, 3, 1.0, 1), 256, 10.0, range(100), SQ)
        assert rep.lhs_freq == 0.0 and rep.block_freq == 0.0 and rep.holds

    def test_stay_chain(self, stay09):
        rep = yu_decomposition_check(stay09, [lambda X: np.full((len(X), 1), 0.3)], 512, 0.02, range(100), SQ)
        assert (rep.mu, rep.a) == default_block_counts(512)
        assert rep.holds
        assert len(rep.per_seed) == 100
