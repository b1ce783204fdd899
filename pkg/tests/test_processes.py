import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_beta, random_kernel
from lipschitz_online.errors import NotErgodic, RowSumError, Unsupported, ValidationError
from lipschitz_online.processes import (
    beta_coefficient,
    beta_coefficients,
    build_ar,
    build_markov,
    context_pairs,
    iid_chain,
    read_trajectory,
    sample,
    sample_ar,
    sample_trajectory,
    second_eigenvalue_modulus,
    stationary_distribution,
    symmetric_chain,
    write_trajectory,
)


class TestBuildMarkov:
    def test_symmetric_chain_is_valid(self):
        p = build_markov([[0.9, 0.1], [0.1, 0.9]], [0.0, 1.0], 1)
        assert p.state_count == 2 and p.order == 1 and p.n == 1

    def test_identity_kernel_not_ergodic(self):
        with pytest.raises(NotErgodic):
            build_markov([[1.0, 0.0], [0.0, 1.0]], [0.0, 1.0], 1)

    def test_row_sum_error_names_row(self):
        with pytest.raises(RowSumError) as exc:
            build_markov([[0.9, 0.1], [0.5, 0.49]], [0.0, 1.0], 1)
        assert exc.value.row == 1
        assert "row 1" in str(exc.value)

    def test_periodic_chain_rejected_when_ergodic_required(self):
        with pytest.raises(NotErgodic):
            build_markov([[0.0, 1.0], [1.0, 0.0]], [0.0, 1.0], 1)

    @pytest.mark.parametrize(
        "kernel, emb, d",
        [
            ([[0.5, 0.5]], [0.0, 1.0], 1),  # wrong row count
            ([[0.5, 0.5], [0.5, 0.5]], [0.0, 0.0], 1),  # not injective
            ([[0.5, 0.5], [0.5, 0.5]], [0.0, 1.5], 1),  # outside [0, 1]
            ([[1.2, -0.2], [0.5, 0.5]], [0.0, 1.0], 1),  # negative entry
            ([[0.5, 0.5], [0.5, 0.5]], [0.0, 1.0], 0),
        ],
    )
    def test_invalid_inputs(self, kernel, emb, d):
        with pytest.raises(ValidationError):
            build_markov(kernel, emb, d)

    def test_declared_dimension_checked(self):
        with pytest.raises(ValidationError):
            build_markov([[0.5, 0.5], [0.5, 0.5]], [[0.0, 0.0], [1.0, 1.0]], 1, n=1)

    def test_order_two_context_matrix_is_stochastic(self):
        rng = np.random.default_rng(3)
        p = build_markov(random_kernel(rng, 2, 2), [0.0, 1.0], 2)
        Q = p.context_matrix
        assert Q.shape == (4, 4)
        np.testing.assert_allclose(Q.sum(axis=1), 1.0, atol=1e-12)
        assert p.context_states(p.context_index((1, 0))) == (1, 0)


class TestStationary:
    def test_symmetric(self, stay09):
        np.testing.assert_allclose(stationary_distribution(stay09), [0.5, 0.5], atol=1e-12)

    def test_asymmetric_two_state(self):
        # pi P = pi: pi_0 * 0.1 = pi_1 * 0.5, so pi = (5/6, 1/6)
        p = build_markov([[0.9, 0.1], [0.5, 0.5]], [0.0, 1.0], 1)
        np.testing.assert_allclose(stationary_distribution(p), [5 / 6, 1 / 6], atol=1e-12)

    def test_single_state(self):
        p = build_markov([[1.0]], [0.5], 1)
        np.testing.assert_allclose(stationary_distribution(p), [1.0])

    @given(st.integers(2, 5), st.integers(1, 2), st.integers(0, 2**32 - 1))
    def test_fixed_point_residual(self, K, d, seed):
        p = build_markov(random_kernel(np.random.default_rng(seed), K, d), np.linspace(0, 1, K), d)
        pi = stationary_distribution(p)
        assert np.all(pi >= 0)
        assert abs(pi.sum() - 1) < 1e-12
        assert np.max(np.abs(pi @ p.context_matrix - pi)) <= 1e-12


class TestSampling:
    def test_two_cycle_from_state_zero(self, two_cycle):
        traj = sample_trajectory(two_cycle, 4, seed=11, start=0)
        np.testing.assert_array_equal(traj.observations[:, 0], [0.0, 1.0, 0.0, 1.0])

    def test_reproducible(self, stay09):
        a = sample_trajectory(stay09, 500, seed=2**63 + 5)
        b = sample_trajectory(stay09, 500, seed=2**63 + 5)
        np.testing.assert_array_equal(a.observations, b.observations)
        assert len(a) == 500

    def test_distinct_seeds_differ(self, stay09):
        a = sample_trajectory(stay09, 500, seed=1)
        b = sample_trajectory(stay09, 500, seed=2)
        assert not np.array_equal(a.observations, b.observations)

    def test_constant_chain(self):
        p = build_markov([[1.0]], [0.3], 1)
        traj = sample_trajectory(p, 50, seed=0)
        assert np.all(traj.observations == 0.3)

    def test_empirical_frequencies(self):
        p = build_markov([[0.9, 0.1], [0.5, 0.5]], [0.0, 1.0], 1)
        T = 100_000
        states = sample_trajectory(p, T, seed=7).states
        pi = stationary_distribution(p)
        freq = np.bincount(states, minlength=2) / T
        # the chain is positively correlated, so the i.i.d. band is widened by the
        # asymptotic variance factor (1 + lambda) / (1 - lambda), lambda = 0.4
        band = 3 * np.sqrt(pi * (1 - pi) / T * (1.4 / 0.6))
        assert np.all(np.abs(freq - pi) <= band)

    @given(st.integers(2, 4), st.integers(1, 2), st.integers(0, 2**32 - 1), st.integers(1, 200))
    def test_observations_in_unit_cube(self, K, d, seed, T):
        rng = np.random.default_rng(seed)
        emb = rng.random((K, 2))
        p = build_markov(random_kernel(rng, K, d), emb, d)
        obs = sample_trajectory(p, T, seed).observations
        assert obs.shape == (T, 2)
        assert np.all((obs >= 0) & (obs <= 1))

    def test_bad_start(self, stay09):
        with pytest.raises(ValidationError):
            sample_trajectory(stay09, 10, seed=0, start=(0, 1))


class TestBeta:
    @pytest.mark.parametrize("m, expected", [(1, 0.4), (2, 0.32), (5, 0.5 * 0.8**5)])
    def test_stay09(self, stay09, m, expected):
        assert beta_coefficient(stay09, m) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("m", [1, 3, 10])
    def test_iid_is_zero(self, m):
        p = iid_chain([0.2, 0.3, 0.5], [0.0, 0.5, 1.0])
        assert beta_coefficient(p, m) == pytest.approx(0.0, abs=1e-12)

    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_matches_matrix_powers_and_decays(self, K, seed):
        P = random_kernel(np.random.default_rng(seed), K)
        p = build_markov(P, np.linspace(0, 1, K), 1)
        betas = beta_coefficients(p, 20)
        brute = np.array([brute_beta(P, m) for m in range(1, 21)])
        np.testing.assert_allclose(betas, brute, atol=1e-12)
        assert np.all(np.diff(betas) <= 1e-12)
        # fit c on m <= 20, then check the geometric envelope out of sample
        rho = second_eigenvalue_modulus(p)
        c = max(betas[m - 1] / rho**m for m in range(1, 21)) if rho > 1e-8 else 0.0
        later = beta_coefficients(p, 60)[20:]
        for m, b in enumerate(later, start=21):
            assert b <= c * rho**m + 1e-12

    def test_order_two_uses_shifted_power(self):
        rng = np.random.default_rng(5)
        p = build_markov(random_kernel(rng, 2, 2), [0.0, 1.0], 2)
        Q = np.asarray(p.context_matrix)
        for m in (1, 4):
            assert beta_coefficient(p, m) == pytest.approx(brute_beta(Q, m + 1), abs=1e-12)

    def test_ar_unsupported(self):
        with pytest.raises(Unsupported):
            beta_coefficient(build_ar([0.5]), 1)

    def test_m_must_be_positive(self, stay09):
        with pytest.raises(ValidationError):
            beta_coefficient(stay09, 0)


class TestAr:
    def test_zero_coefficients_constant(self):
        obs = sample_ar(build_ar([0.0], noise=0.0, mean=0.5, init=[0.5]), 20, seed=0).observations
        np.testing.assert_array_equal(obs, 0.5)

    def test_deterministic_recursion(self):
        obs = sample_ar(build_ar([0.5], noise=0.0, init=[1.0]), 5, seed=0).observations[:, 0]
        np.testing.assert_allclose(obs, [1.0, 0.5, 0.25, 0.125, 0.0625])

    def test_clamped(self):
        obs = sample_ar(build_ar([0.9], noise=10.0, mean=0.5), 2000, seed=3).observations
        assert obs.min() >= 0.0 and obs.max() <= 1.0
        assert obs.min() == 0.0 and obs.max() == 1.0

    @pytest.mark.parametrize("coef", [[1.0], [0.6, -0.5], [-1.2]])
    def test_l1_norm_checked(self, coef):
        with pytest.raises(ValidationError):
            build_ar(coef)

    def test_dispatch(self, stay09):
        assert sample(build_ar([0.2], 0.1, 0.5), 10, 1).observations.shape == (10, 1)
        assert sample(stay09, 10, 1).states is not None


def test_context_pairs_oldest_first():
    obs = np.arange(10, dtype=float).reshape(5, 2)
    X, Y = context_pairs(obs, 2)
    np.testing.assert_array_equal(X[0], [0, 1, 2, 3])
    np.testing.assert_array_equal(Y[0], [4, 5])
    assert X.shape == (3, 4) and Y.shape == (3, 2)
    X0, Y0 = context_pairs(obs, 0)
    assert X0.shape == (5, 0)
    np.testing.assert_array_equal(Y0, obs)


def test_trajectory_csv_round_trip(tmp_path):
    p = build_markov([[0.7, 0.3], [0.2, 0.8]], [[0.1, 1 / 3], [0.9, 2 / 7]], 1)
    traj = sample_trajectory(p, 100, seed=9)
    path = tmp_path / "traj.csv"
    write_trajectory(path, traj)
    assert path.read_text().splitlines()[0] == "t,x_1,x_2"
    back = read_trajectory(path)
    np.testing.assert_array_equal(back.observations, traj.observations)
    first = path.read_bytes()
    write_trajectory(path, sample_trajectory(p, 100, seed=9))
    assert path.read_bytes() == first


def test_read_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x\n1,0.5\n")
    with pytest.raises(ValidationError):
        read_trajectory(path)


def test_symmetric_chain_helper():
    p = symmetric_chain(0.75)
    np.testing.assert_allclose(p.kernel, [[0.75, 0.25], [0.25, 0.75]])
