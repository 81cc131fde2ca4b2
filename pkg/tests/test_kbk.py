import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import random_model

from noisykoop.baselines import SnapshotPairs, dmd
from noisykoop.embed import BlockData
from noisykoop.errors import ContractViolation, DegenerateDataError, EMError
from noisykoop.kbk import (
    EMConfig,
    Posterior,
    StateSpaceModel,
    Termination,
    default_init,
    e_step,
    em_fit,
    kalman_filter,
    log_likelihood,
    m_step,
    raw_updates,
    sufficient_statistics,
)


def rotation(theta=0.4, r=0.97):
    return r * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def simulate_lds(A, q, r, Q, seed, z0=None):
    rng = np.random.default_rng(seed)
    M = A.shape[0]
    z = np.ones(M) if z0 is None else np.asarray(z0, float)
    Y = []
    for _ in range(Q):
        Y.append(z + np.sqrt(r) * rng.standard_normal(M))
        z = A @ z + np.sqrt(q) * rng.standard_normal(M)
    return BlockData(np.array(Y))


def scalar_model(a=1.0, q=0.5, r=1.0, mu=0.0, s=0.5):
    e = np.eye(1)
    return StateSpaceModel(a * e, q * e, r * e, np.array([mu]), s * e)


# --- filter behaviour -------------------------------------------------------


def test_huge_measurement_noise_ignores_data(backend):
    model = scalar_model(a=0.9, r=1e12, mu=2.0)
    filt = kalman_filter(model, BlockData(np.full((5, 1), 100.0)), backend)
    assert np.abs(filt.gains).max() < 1e-11
    np.testing.assert_allclose(filt.filtered_means[:, 0], 2.0 * 0.9 ** np.arange(5), rtol=1e-8)


def test_constant_state_gives_running_mean(backend):
    # A = 1, no process noise, flat prior: filtered mean is the sample mean so far
    y = np.array([3.0, 1.0, 2.0, 6.0, -1.0])
    model = scalar_model(q=0.0, r=1.0, s=1e8)
    filt = kalman_filter(model, BlockData(y[:, None]), backend)
    running = np.cumsum(y) / np.arange(1, 6)
    np.testing.assert_allclose(filt.filtered_means[:, 0], running, rtol=1e-6)
    np.testing.assert_allclose(filt.filtered_covs[:, 0, 0], 1 / np.arange(1, 6), rtol=1e-6)


def test_no_process_noise_smoother_is_flat(backend):
    # identical hidden blocks under A = I and R_v = 0 share one posterior mean
    rng = np.random.default_rng(3)
    e = np.eye(2)
    model = StateSpaceModel(e, 0.0 * e, 0.2 * e, np.zeros(2), e)
    post, _ = e_step(model, BlockData(rng.standard_normal((6, 2))), backend)
    np.testing.assert_allclose(post.means, np.broadcast_to(post.means[0], post.means.shape), atol=1e-10)


def test_single_block_likelihood(backend):
    model = scalar_model(mu=1.0, s=0.5, r=1.5)
    ll = log_likelihood(model, BlockData(np.array([[3.0]])), backend)
    assert ll == pytest.approx(-0.5 * (np.log(2 * np.pi * 2.0) + 4.0 / 2.0), rel=1e-14)


def test_inflating_noise_lowers_fit_of_good_model(backend):
    A = rotation()
    data = simulate_lds(A, 1e-4, 1e-4, 40, 0)
    e = np.eye(2)
    good = StateSpaceModel(A, 1e-4 * e, 1e-4 * e, data.blocks[0], 1e-4 * e)
    worse = StateSpaceModel(A, 1e-4 * e, 2e-4 * e, data.blocks[0], 1e-4 * e)
    assert log_likelihood(worse, data, backend) < log_likelihood(good, data, backend)


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        kalman_filter(scalar_model(), BlockData(np.ones((3, 2))))


# --- M-step ------------------------------------------------------------------


def point_posterior(Z):
    Q, M = Z.shape
    return Posterior(Z.copy(), np.zeros((Q, M, M)), np.zeros((Q - 1, M, M)))


def test_m_step_recovers_operator_from_exact_states(rng):
    A = rng.standard_normal((3, 3))
    A *= 0.95 / np.abs(np.linalg.eigvals(A)).max()
    Z = [rng.standard_normal(3)]
    for _ in range(49):
        Z.append(A @ Z[-1])
    Z = np.array(Z)
    R_w, R_v, A_new = raw_updates(point_posterior(Z), BlockData(Z), A)
    np.testing.assert_allclose(A_new, A, atol=1e-10)
    np.testing.assert_allclose(R_w, 0.0, atol=1e-14)
    np.testing.assert_allclose(R_v, 0.0, atol=1e-12)


def test_m_step_projects_and_floors(rng):
    Z = rng.standard_normal((10, 3))
    model = StateSpaceModel(np.eye(3), np.eye(3), np.eye(3), np.zeros(3), np.eye(3))
    new = m_step(point_posterior(Z), BlockData(Z), model)
    np.testing.assert_array_equal(new.R_w, 1e-10 * np.eye(3))
    assert np.count_nonzero(new.R_v - np.diag(np.diag(new.R_v))) == 0
    assert np.all(np.diag(new.R_v) >= 1e-10)
    np.testing.assert_array_equal(new.init_mean, Z[0])
    dense = m_step(point_posterior(Z), BlockData(Z), model, EMConfig(diagonal_covariances=False))
    np.testing.assert_allclose(dense.R_v, dense.R_v.T)
    assert np.linalg.eigvalsh(dense.R_v).min() >= 1e-10 * (1 - 1e-6)


def test_m_step_degenerate_moments():
    Z = np.zeros((5, 2))
    with pytest.raises(DegenerateDataError):
        raw_updates(point_posterior(Z), BlockData(Z), np.eye(2))


def expected_transition_term(A, Rv, H, C):
    """Expected complete-data log-likelihood of the transitions, as a function of A."""
    H0, H1, Cs = H[:-1].sum(0), H[1:].sum(0), C.sum(0)
    S = H1 - A @ Cs.T - Cs @ A.T + A @ H0 @ A.T
    return -0.5 * np.trace(np.linalg.solve(Rv, S))


def test_operator_update_is_stationary(backend):
    rng = np.random.default_rng(11)
    model = random_model(rng, 3)
    data = simulate_lds(model.A, 0.1, 0.2, 30, 1, z0=np.ones(3))
    post, _ = e_step(model, data, backend)
    H, C = sufficient_statistics(post)
    _, _, A_new = raw_updates(post, data, model.A)
    h = 1e-6
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = h
            g = (
                expected_transition_term(A_new + E, model.R_v, H, C)
                - expected_transition_term(A_new - E, model.R_v, H, C)
            ) / (2 * h)
            assert abs(g) < 1e-6 * max(1.0, np.abs(H).max())


def test_noise_updates_are_stationary_for_fixed_operator(backend):
    # with A held at A_prev, the raw R_w and R_v updates match the empirical second moments
    rng = np.random.default_rng(5)
    model = random_model(rng, 2)
    data = simulate_lds(model.A, 0.05, 0.1, 25, 2, z0=np.ones(2))
    post, _ = e_step(model, data, backend)
    H, C = sufficient_statistics(post)
    R_w, R_v, _ = raw_updates(post, data, model.A)
    Y, m, A = data.blocks, post.means, model.A
    ref_w = sum(H[k] - np.outer(m[k], Y[k]) - np.outer(Y[k], m[k]) + np.outer(Y[k], Y[k]) for k in range(25)) / 25
    ref_v = sum(H[k + 1] - C[k] @ A.T - A @ C[k].T + A @ H[k] @ A.T for k in range(24)) / 24
    np.testing.assert_allclose(R_w, ref_w, atol=1e-12)
    np.testing.assert_allclose(R_v, ref_v, atol=1e-12)


# --- EM loop -----------------------------------------------------------------


def test_em_recovers_rotation():
    A = rotation()
    data = simulate_lds(A, 1e-6, 1e-4, 200, 0, z0=[1.0, 0.0])
    model, post, trace = em_fit(data)
    assert np.abs(model.A - A).max() < 2e-2
    assert post.means.shape == (200, 2)
    assert trace.n_iterations >= 1


@pytest.mark.parametrize("seed", range(20))
def test_em_likelihood_monotone(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
    data = simulate_lds(A, 1e-3, 1e-2, 30, seed)
    _, _, trace = em_fit(data, EMConfig(max_iterations=60))
    ll = np.array(trace.log_likelihoods)
    assert np.all(np.diff(ll) >= -1e-8 * (np.abs(ll[1:]) + 1))


def test_em_trace_bookkeeping():
    data = simulate_lds(rotation(), 1e-3, 1e-2, 20, 0)
    _, _, trace = em_fit(data, EMConfig(max_iterations=3))
    assert trace.iterations == [0, 1, 2, 3]
    assert trace.termination_reason is Termination.MaxIterations
    assert trace.delta_A[0] == 0.0 and all(d >= 0 for d in trace.delta_A)
    _, _, trace = em_fit(data, EMConfig(likelihood_rel_tol=1e3))
    assert trace.termination_reason is Termination.Converged and trace.n_iterations == 1


def test_em_deterministic():
    data = simulate_lds(rotation(), 1e-3, 1e-2, 30, 4)
    a = em_fit(data, EMConfig(max_iterations=40))
    b = em_fit(data, EMConfig(max_iterations=40))
    np.testing.assert_array_equal(a[0].A, b[0].A)
    assert a[2].log_likelihoods == b[2].log_likelihoods


def test_em_backends_agree():
    pytest.importorskip("noisykoop._ckernel")
    data = simulate_lds(rotation(), 1e-3, 1e-2, 30, 4)
    a = em_fit(data, EMConfig(max_iterations=30), backend="python")[0].A
    b = em_fit(data, EMConfig(max_iterations=30), backend="cython")[0].A
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)


def test_em_error_carries_iteration():
    data = BlockData(np.ones((4, 2)))
    z = np.zeros((2, 2))
    bad = StateSpaceModel(np.eye(2), z, z, np.zeros(2), z)
    with pytest.raises(EMError) as err:
        em_fit(data, init=bad)
    assert err.value.iteration == 0
    assert str(err.value).startswith("EM iteration 0")


def test_em_rejects_single_block():
    with pytest.raises(ContractViolation):
        em_fit(BlockData(np.ones((1, 2))))


@pytest.mark.parametrize(
    "kwargs",
    [{"likelihood_rel_tol": 0.0}, {"max_iterations": 0}, {"cov_floor": -1.0}],
)
def test_em_config_validation(kwargs):
    with pytest.raises(ContractViolation):
        EMConfig(**kwargs)


# --- initialisation ------------------------------------------------------------


def test_default_init_uses_dmd(rng):
    Y = rng.standard_normal((12, 3))
    model = default_init(BlockData(Y))
    np.testing.assert_array_equal(model.A, dmd(SnapshotPairs.from_blocks(Y)))
    v = 0.1 * np.var(Y)
    for R in (model.R_v, model.R_w, model.init_cov):
        np.testing.assert_allclose(R, v * np.eye(3))
    np.testing.assert_array_equal(model.init_mean, Y[0])


def test_default_init_constant_data():
    model = default_init(BlockData(np.full((4, 2), 3.0)))
    np.testing.assert_array_equal(model.A, np.eye(2))
    np.testing.assert_array_equal(model.R_w, 1e-10 * np.eye(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3))
def test_m_step_output_is_valid_model(seed, M):
    rng = np.random.default_rng(seed)
    model = random_model(rng, M)
    data = simulate_lds(model.A, 0.1, 0.1, 12, seed, z0=np.ones(M))
    post, _ = e_step(model, data)
    new = m_step(post, data, model)
    for R in (new.R_v, new.R_w, new.init_cov):
        assert np.all(np.isfinite(R))
        np.testing.assert_allclose(R, R.T)
        assert np.linalg.eigvalsh(R).min() > 0
    assert np.all(np.isfinite(new.A))
