import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macesim.config import SimConfig
from macesim.geometry import sample_channels
from macesim.pilots import (
    PilotAssignment,
    assemble_block,
    delta_matrix,
    delta_oracle,
    despread,
    despread_all_local,
    despread_central,
    despread_local,
    draw_assignment,
    make_pilot_book,
    stack,
    synthesize_received,
)
from macesim.tracking import true_q_local

from conftest import make_network, rel


@pytest.mark.parametrize("tau", [1, 2, 3, 5, 8, 9])
def test_pilot_book_orthogonal(tau):
    Phi = make_pilot_book(tau).Phi
    G = Phi @ Phi.conj().T
    assert np.max(abs(G - tau * np.eye(tau))) < 1e-12
    np.testing.assert_allclose(np.sum(abs(Phi) ** 2, axis=1), tau, rtol=1e-14)


def test_pilot_book_tau2_exact():
    Phi = make_pilot_book(2).Phi
    np.testing.assert_array_equal(Phi @ Phi.conj().T, 2 * np.eye(2))


def test_assignment_statistics():
    rng = np.random.default_rng(0)
    M, tau = 100_000, 5
    t = np.empty(M, int)
    g = np.empty(M)
    for b in range(M // 100):
        a = draw_assignment(100, tau, rng)
        t[b * 100:(b + 1) * 100], g[b * 100:(b + 1) * 100] = a.t, a.gamma
    freq = np.mean(t == 0)
    assert abs(freq - 0.2) < 3 * np.sqrt(0.2 * 0.8 / M)
    assert abs(g.mean()) < 3 * g.std() / np.sqrt(M)
    assert set(np.unique(g)) == {-1.0, 1.0}


def test_single_pilot_assignment():
    a = draw_assignment(6, 1, np.random.default_rng(0))
    assert np.all(a.t == 0)


def _noiseless(**kw):
    return SimConfig(sigma2=0.0, **kw)


def test_empty_network_receives_nothing():
    cfg = _noiseless(K=0)
    book = make_pilot_book(3)
    a = draw_assignment(0, 3, np.random.default_rng(0))
    blk = synthesize_received(np.zeros((2, 0, 4), complex), a, book, cfg, np.random.default_rng(1))
    assert blk.Y.shape == (2, 4, 3) and not blk.Y.any()


def test_single_ue_rank_one():
    cfg = _noiseless(K=1, tau_p=4)
    book = make_pilot_book(4)
    rng = np.random.default_rng(0)
    h = rng.standard_normal((2, 1, 3)) + 1j * rng.standard_normal((2, 1, 3))
    a = draw_assignment(1, 4, rng)
    blk = synthesize_received(h, a, book, cfg, rng)
    for j in range(2):
        expected = np.sqrt(cfg.p) * a.gamma[0] * np.outer(h[j, 0], book.Phi[a.t[0]])
        np.testing.assert_allclose(blk.Y[j], expected, atol=1e-15)
        assert np.linalg.matrix_rank(blk.Y[j]) == 1


def test_received_reconstructs_from_parts():
    cfg, stats = make_network(seed=2, L=3, N=4, K=5, tau_p=5)
    rng = np.random.default_rng(7)
    book = make_pilot_book(cfg.tau_p)
    a = draw_assignment(cfg.K, cfg.tau_p, rng)
    h = sample_channels(stats, rng)
    blk = synthesize_received(h, a, book, cfg, rng)
    again = assemble_block(blk.channels, a, book, cfg.p, blk.noise)
    np.testing.assert_array_equal(again.Y, blk.Y)


def test_received_covariance_matches_closed_form(small):
    cfg, stats = small
    cfg = cfg.with_(sigma2=stats.beta.mean() * 0.1 * cfg.p)
    Q = true_q_local(stats, cfg)
    rng = np.random.default_rng(11)
    book = make_pilot_book(cfg.tau_p)
    factor = stats.nlos_factor()
    M = 10_000
    acc = np.zeros_like(Q)
    for _ in range(M):
        a = draw_assignment(cfg.K, cfg.tau_p, rng)
        Y = synthesize_received(sample_channels(stats, rng, factor), a, book, cfg, rng).Y
        acc += Y @ np.swapaxes(Y, -1, -2).conj()
    for j in range(cfg.L):
        assert rel(acc[j] / M, Q[j]) < 0.05


def _two_ue(t, gamma):
    rng = np.random.default_rng(4)
    h = rng.standard_normal((1, 2, 3)) + 1j * rng.standard_normal((1, 2, 3))
    cfg = _noiseless(K=2, tau_p=3)
    book = make_pilot_book(3)
    a = PilotAssignment(t=np.array(t), gamma=np.array(gamma, float))
    blk = synthesize_received(h, a, book, cfg, rng)
    return h, a, book, blk, np.sqrt(cfg.p * 3)


def test_despread_single_ue_noiseless():
    rng = np.random.default_rng(4)
    h = rng.standard_normal((2, 1, 3)) + 1j * rng.standard_normal((2, 1, 3))
    cfg = _noiseless(K=1, tau_p=3)
    book = make_pilot_book(3)
    a = draw_assignment(1, 3, rng)
    blk = synthesize_received(h, a, book, cfg, rng)
    np.testing.assert_allclose(despread_local(blk.Y[1], 0, a, book), np.sqrt(cfg.p * 3) * h[1, 0], atol=1e-15)
    np.testing.assert_allclose(despread_central(blk, 0, book), np.sqrt(cfg.p * 3) * h[:, 0].ravel(), atol=1e-15)


def test_despread_shared_pilot_same_sign():
    h, a, book, blk, s = _two_ue([1, 1], [-1, -1])
    np.testing.assert_allclose(despread_local(blk.Y[0], 0, a, book), s * (h[0, 0] + h[0, 1]), atol=1e-14)


def test_despread_orthogonal_pilots():
    h, a, book, blk, s = _two_ue([0, 2], [1, -1])
    np.testing.assert_allclose(despread_local(blk.Y[0], 0, a, book), s * h[0, 0], atol=1e-14)


def test_central_is_stack_of_local():
    cfg, stats = make_network(seed=1, L=3, N=2, K=4, tau_p=3)
    rng = np.random.default_rng(0)
    book = make_pilot_book(3)
    a = draw_assignment(cfg.K, 3, rng)
    blk = synthesize_received(sample_channels(stats, rng), a, book, cfg, rng)
    N = cfg.N
    for k in range(cfg.K):
        yc = despread_central(blk, k, book)
        for j in range(cfg.L):
            assert np.array_equal(yc[j * N:(j + 1) * N], despread_local(blk.Y[j], k, a, book))
    cfg1, stats1 = make_network(seed=1, L=1, N=2, K=2, tau_p=3)
    blk1 = synthesize_received(sample_channels(stats1, rng), a.__class__(a.t[:2], a.gamma[:2]), book, cfg1, rng)
    assert np.array_equal(despread_central(blk1, 1, book), despread_local(blk1.Y[0], 1, blk1.assignment, book))


def test_delta_oracle_cases():
    a = PilotAssignment(t=np.array([0, 1, 0, 0]), gamma=np.array([1.0, 1.0, 1.0, -1.0]))
    assert delta_oracle(a, 1, 0) == 0
    assert delta_oracle(a, 2, 0) == 1
    assert delta_oracle(a, 3, 0) == -1
    with pytest.raises(ValueError):
        delta_oracle(a, 0, 0)
    D = delta_matrix(a)
    for k in range(4):
        for i in range(4):
            assert D[k, i] == (1 if i == k else delta_oracle(a, i, k))


def test_delta_second_moment():
    rng = np.random.default_rng(5)
    tau, M = 5, 100_000
    d = np.empty(M)
    for b in range(M):
        d[b] = delta_oracle(draw_assignment(2, tau, rng), 1, 0)
    sq = d**2
    assert abs(sq.mean() - 1 / tau) < 3 * sq.std() / np.sqrt(M)


@settings(max_examples=25, deadline=None)
@given(L=st.integers(1, 3), N=st.integers(1, 4), K=st.integers(1, 5), tau=st.integers(2, 6), seed=st.integers(0, 10**6))
def test_despread_reconstruction(L, N, K, tau, seed):
    cfg, stats = make_network(seed=seed % 100, L=L, N=N, K=K, tau_p=tau)
    rng = np.random.default_rng(seed)
    book = make_pilot_book(tau)
    a = draw_assignment(K, tau, rng)
    h = sample_channels(stats, rng)
    blk = synthesize_received(h, a, book, cfg, rng)
    s = np.sqrt(cfg.p * tau)
    scale = s * np.max(abs(h)) + np.sqrt(cfg.sigma2) * 10
    for j in range(L):
        for k in range(K):
            n = blk.noise[j] @ (a.gamma[k] * book.Phi[a.t[k]]).conj() / np.sqrt(tau)
            expected = s * h[j, k] + n + sum(s * h[j, i] * delta_oracle(a, i, k) for i in range(K) if i != k)
            assert np.max(abs(despread_local(blk.Y[j], k, a, book) - expected)) < 1e-10 * scale


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), tau=st.integers(1, 6))
def test_despread_linearity(seed, tau):
    rng = np.random.default_rng(seed)
    shape = (2, 3, tau)
    Y1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    Y2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a = draw_assignment(4, tau, rng)
    book = make_pilot_book(tau)
    lhs = despread(Y1 + Y2, a, book)
    rhs = despread(Y1, a, book) + despread(Y2, a, book)
    assert np.max(abs(lhs - rhs)) < 1e-12


def test_despread_noise_covariance():
    cfg = SimConfig(K=3, tau_p=4, sigma2=2.0)
    book = make_pilot_book(4)
    rng = np.random.default_rng(9)
    N, M = 3, 10_000
    acc = np.zeros((N, N), complex)
    h = np.zeros((1, 3, N), complex)
    for _ in range(M):
        blk = synthesize_received(h, draw_assignment(3, 4, rng), book, cfg, rng)
        y = despread_all_local(blk, book)[0, 1]
        acc += np.outer(y, y.conj())
    assert rel(acc / M, 2.0 * np.eye(N)) < 0.05


def test_stack_layout():
    x = np.arange(2 * 3 * 4).reshape(2, 3, 4)
    s = stack(x)
    assert s.shape == (3, 8)
    np.testing.assert_array_equal(s[1], np.concatenate([x[0, 1], x[1, 1]]))
