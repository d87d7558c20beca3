"""Property-based checks of the invariants that hold for every admissible input."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqgopt import control
from lqgopt.agent import epoch_boundaries, epoch_of
from lqgopt.arx import RegressorDataset, confidence_beta, system_markov_params
from lqgopt.ofu import ConfidenceSet, Model, contains
from lqgopt.regret import fit_regret_slope
from lqgopt.sysid import hankelize, param_confidence, sysid

from conftest import random_system

SETTINGS = settings(max_examples=30, deadline=None)
seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 4)


def _system(seed, n, m=1, p=1):
    return random_system(np.random.default_rng(seed), n, m, p, radius=0.85)


@SETTINGS
@given(seeds, dims, st.integers(1, 2), st.integers(1, 2))
def test_dare_residuals(seed, n, m, p):
    sys_ = _system(seed, n, m, p)
    Q, R = np.eye(m), np.eye(p)
    P = control.solve_control_dare(sys_.A, sys_.B, sys_.C, Q, R)
    res = P - control._riccati_map(P, sys_.A, sys_.B, sys_.C.T @ Q @ sys_.C, R)
    assert np.linalg.norm(res) <= 1e-10
    S = control.solve_filter_dare(sys_.A, sys_.C, sys_.sigma_w, sys_.sigma_z)
    res = S - control._riccati_map(S, sys_.A.T, sys_.C.T, np.eye(n), np.eye(m))
    assert np.linalg.norm(res) <= 1e-10
    assert np.linalg.eigvalsh(P).min() >= -1e-10
    assert np.linalg.eigvalsh(S).min() >= -1e-10


@SETTINGS
@given(seeds, dims)
def test_value_iteration_monotone(seed, n):
    sys_ = _system(seed, n)
    Q = sys_.C.T @ sys_.C
    P = np.zeros((n, n))
    for _ in range(60):
        P_next = control._riccati_map(P, sys_.A, sys_.B, Q, np.eye(1))
        assert np.linalg.eigvalsh(P_next - P).min() >= -1e-10
        P = P_next


@SETTINGS
@given(seeds, dims)
def test_closed_loop_stability(seed, n):
    ss = _system(seed, n).steady_state(np.eye(1), np.eye(1))
    sys_ = _system(seed, n)
    assert control.spectral_radius(sys_.A - sys_.B @ ss.K) < 1
    assert control.spectral_radius(ss.A_bar) < 1


@SETTINGS
@given(seeds, dims, st.floats(0.01, 0.3))
def test_cost_consistency(seed, n, scale):
    sys_ = _system(seed, n)
    I1 = np.eye(1)
    ss = sys_.steady_state(I1, I1)
    rng = np.random.default_rng(seed)
    K = ss.K + scale * rng.standard_normal(ss.K.shape)
    L = ss.L + scale * rng.standard_normal(ss.L.shape)
    try:
        J = control.steady_state_cost(sys_, K, L, I1, I1)
    except control.UnstableClosedLoop:
        return
    assert ss.J_star <= J + 1e-9 * abs(J)


@SETTINGS
@given(seeds, dims, st.floats(0.1, 10.0))
def test_scale_covariance(seed, n, c):
    sys_ = _system(seed, n)
    I1 = np.eye(1)
    P1 = control.solve_control_dare(sys_.A, sys_.B, sys_.C, I1, 2 * I1)
    Pc = control.solve_control_dare(sys_.A, sys_.B, sys_.C, c * I1, 2 * c * I1)
    assert np.allclose(Pc, c * P1, rtol=1e-7, atol=1e-9)
    K1 = control.optimal_gain(sys_.A, sys_.B, P1, 2 * I1)
    Kc = control.optimal_gain(sys_.A, sys_.B, Pc, 2 * c * I1)
    assert np.allclose(Kc, K1, rtol=1e-7, atol=1e-9)
    ss = sys_.steady_state(I1, 2 * I1)
    Jc = control.steady_state_cost(sys_, ss.K, ss.L, c * I1, 2 * c * I1)
    assert Jc == pytest.approx(c * ss.J_star, rel=1e-9)


@SETTINGS
@given(seeds, st.integers(1, 4), st.integers(1, 2), st.integers(1, 2), st.integers(0, 60))
def test_dataset_invariants(seed, H, m, p, T):
    rng = np.random.default_rng(seed)
    lam = float(rng.uniform(0.1, 3.0))
    ds = RegressorDataset(m, p, H, lam)
    ds.extend(rng.standard_normal((T, m)), rng.standard_normal((T, p)))
    V = ds.V
    assert np.allclose(V, V.T)
    assert np.linalg.eigvalsh(V).min() >= lam * (1 - 1e-12)
    # data through time t = T-1 gives t - H + 1 rows
    assert ds.N == max(T - H, 0)


@SETTINGS
@given(seeds, st.integers(10, 200))
def test_beta_nondecreasing(seed, T):
    rng = np.random.default_rng(seed)
    ds = RegressorDataset(1, 1, 3, 1.0)
    betas = []
    for t in range(T):
        ds.add(rng.standard_normal(1), rng.standard_normal(1))
        betas.append(confidence_beta(ds.V, 1.0, 0.1, 2.0, 1.5, 3, ds.t, 10**6, 1))
    assert np.all(np.diff(betas) >= -1e-12)


@SETTINGS
@given(seeds, st.integers(1, 3))
def test_sysid_round_trip(seed, n):
    sys_ = _system(seed, n)
    H = 2 * n + 3
    M = system_markov_params(sys_, H)
    est = sysid(M.M, 1, 1, H, n)
    F_hat, G_hat = est.markov_blocks(H)
    for k in range(H):
        assert np.allclose(F_hat[k], M.F_blocks[k], atol=1e-8)
        assert np.allclose(G_hat[k], M.G_blocks[k], atol=1e-8)
    assert np.allclose(est.A_bar + est.F @ est.C, est.A, atol=1e-12)


@SETTINGS
@given(seeds, st.integers(1, 2), st.floats(1e-4, 1e-1))
def test_hankel_perturbation_bounds(seed, n, size):
    sys_ = _system(seed, n)
    H = 2 * n + 5
    M = system_markov_params(sys_, H).M
    rng = np.random.default_rng(seed)
    E = rng.standard_normal(M.shape)
    E *= size / np.linalg.norm(E, 2)
    exact = hankelize(M, 1, 1, H, n=n)
    noisy = hankelize(M + E, 1, 1, H, n=n)
    d1, d2 = exact.d1, exact.d2
    err = np.linalg.norm(E, 2)
    assert np.linalg.norm(exact.H_full - noisy.H_full, 2) <= np.sqrt(min(d1, d2 + 1)) * err * (1 + 1e-9)
    U, s, Vt = np.linalg.svd(noisy.H_minus, full_matrices=False)
    N_hat = (U[:, :n] * s[:n]) @ Vt[:n]
    bound = 2 * np.sqrt(min(d1, d2)) * err
    assert np.linalg.norm(exact.H_minus - N_hat, 2) <= bound * (1 + 1e-9)


@SETTINGS
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.1, 10.0), st.floats(0.01, 5.0))
def test_radii_nondecreasing_in_bound(e1, e2, H_norm, sigma_n):
    lo, hi = sorted((e1, e2))
    a = param_confidence(lo, H_norm + sigma_n, sigma_n, 2, 9)
    b = param_confidence(hi, H_norm + sigma_n, sigma_n, 2, 9)
    for name in ("beta_A", "beta_B", "beta_C", "beta_L"):
        assert getattr(a, name) <= getattr(b, name)
        assert getattr(a, name) >= 0


@SETTINGS
@given(seeds, st.floats(0.0, 1.0))
def test_contains_sign_symmetric(seed, r):
    rng = np.random.default_rng(seed)
    A, B, C, L = (rng.standard_normal((1, 1)) for _ in range(4))
    center = Model(A, B, C, L)
    cset = ConfidenceSet(center, r, r, r, r)
    cand = Model(A + r * rng.uniform(-1, 1), B, C, L)
    flipped = Model(cand.A, -cand.B, -cand.C, -cand.L)
    assert contains(cand, cset, align=True) == contains(flipped, cset, align=True)


@SETTINGS
@given(st.integers(1, 5000), st.integers(2, 200_000))
def test_epoch_doubling(T_w, T):
    bounds = epoch_boundaries(T_w, T)
    assert all(b == T_w * 2**i for i, b in enumerate(bounds))
    assert len(bounds) <= np.log2(max(T / T_w, 1)) + 1
    for i, b in enumerate(bounds):
        assert epoch_of(b, T_w) == i
        assert epoch_of(b - 1, T_w) == i - 1


@SETTINGS
@given(st.floats(0.1, 1.5), st.floats(0.1, 100.0))
def test_power_law_slope(alpha, scale):
    t = np.arange(1, 5001)
    fit = fit_regret_slope(scale * t**alpha)
    assert fit.slope == pytest.approx(alpha, abs=1e-9)
