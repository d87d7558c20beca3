import math

import numpy as np
import pytest

from lqgopt.control import (
    CostWeights,
    LinearSystem,
    kalman_gain,
    optimal_gain,
    predictor_form,
    solve_control_dare,
    solve_filter_dare,
    spectral_radius,
    steady_state_cost,
    structural_checks,
)
from lqgopt.errors import NonConvergence, UnstableClosedLoop, UnstableSystem

from conftest import filter_vi, random_system, riccati_vi

I1 = np.eye(1)
# positive root of P^2 - 0.25 P - 1 = 0
P_SCALAR = (0.25 + math.sqrt(0.25**2 + 4)) / 2


def test_scalar_root_value():
    assert P_SCALAR == pytest.approx(1.132782, abs=1e-6)


def test_control_dare_zero_A():
    P = solve_control_dare([[0.0]], [[1.0]], [[1.0]], I1, I1)
    assert P == pytest.approx(np.eye(1), abs=1e-12)


def test_control_dare_scalar_closed_form(scalar):
    P = solve_control_dare(scalar.A, scalar.B, scalar.C, I1, I1)
    assert P[0, 0] == pytest.approx(P_SCALAR, abs=1e-10)
    assert P == pytest.approx(riccati_vi(scalar.A, scalar.B, I1, I1, iters=200), abs=1e-12)


@pytest.mark.parametrize("method", ["fixed_point", "doubling"])
def test_control_dare_random_3x3(method):
    sys_ = random_system(np.random.default_rng(3), 3, m=2, p=2)
    Q, R = np.eye(2), np.diag([1.0, 2.0])
    P = solve_control_dare(sys_.A, sys_.B, sys_.C, Q, R, method=method)
    oracle = riccati_vi(sys_.A, sys_.B, sys_.C.T @ Q @ sys_.C, R)
    assert np.linalg.norm(P - oracle) < 1e-8


def test_control_dare_nonconvergence():
    sys_ = random_system(np.random.default_rng(0), 3)
    with pytest.raises(NonConvergence):
        solve_control_dare(sys_.A, sys_.B, sys_.C, I1, I1, max_iter=2)


def test_gain_examples(scalar):
    assert optimal_gain(np.zeros((1, 1)), I1, I1, I1) == pytest.approx(np.zeros((1, 1)))
    K = optimal_gain(scalar.A, scalar.B, np.array([[P_SCALAR]]), I1)
    # the exact value is 0.5 P / (1 + P); the approximate 0.265580 quoted for it is 1.6e-5 off
    assert K[0, 0] == pytest.approx(0.5 * P_SCALAR / (1 + P_SCALAR), abs=1e-12)
    assert K[0, 0] == pytest.approx(0.265580, abs=5e-5)


def test_gain_matches_backward_recursion():
    sys_ = random_system(np.random.default_rng(11), 2)
    P = solve_control_dare(sys_.A, sys_.B, sys_.C, I1, I1)
    K = optimal_gain(sys_.A, sys_.B, P, I1)
    # finite-horizon backward recursion: the gain at the first stage of a long horizon
    Pk = np.zeros((2, 2))
    Qx = sys_.C.T @ sys_.C
    for _ in range(10_000):
        Kk = np.linalg.solve(I1 + sys_.B.T @ Pk @ sys_.B, sys_.B.T @ Pk @ sys_.A)
        Pk = Qx + sys_.A.T @ Pk @ (sys_.A - sys_.B @ Kk)
    assert np.linalg.norm(K - Kk) < 1e-8
    assert spectral_radius(sys_.A - sys_.B @ K) < 1


def test_filter_dare_examples(scalar):
    S0 = solve_filter_dare([[0.0]], [[1.0]], 1.0, 1.0)
    assert S0 == pytest.approx(np.eye(1), abs=1e-12)
    S = solve_filter_dare(scalar.A, scalar.C, 1.0, 1.0)
    assert S[0, 0] == pytest.approx(P_SCALAR, abs=1e-10)


@pytest.mark.parametrize("method", ["fixed_point", "doubling"])
def test_filter_dare_random_3x3(method):
    sys_ = random_system(np.random.default_rng(5), 3, m=2, p=1, sigma_w=0.7, sigma_z=1.3)
    S = solve_filter_dare(sys_.A, sys_.C, 0.7, 1.3, method=method)
    assert np.linalg.norm(S - filter_vi(sys_.A, sys_.C, 0.7, 1.3)) < 1e-8


def test_kalman_gain_examples():
    assert kalman_gain(np.eye(1), I1, 1.0) == pytest.approx(0.5 * I1)
    L = kalman_gain(np.array([[P_SCALAR]]), I1, 1.0)
    assert L[0, 0] == pytest.approx(P_SCALAR / (1 + P_SCALAR), abs=1e-12)
    assert L[0, 0] == pytest.approx(0.531155, abs=5e-5)
    assert kalman_gain(np.eye(2), np.zeros((1, 2)), 1.0) == pytest.approx(np.zeros((2, 1)))


def test_predictor_form_examples():
    A_bar, F = predictor_form(np.zeros((1, 1)), 0.5 * I1, I1)
    assert A_bar == pytest.approx(0 * I1) and F == pytest.approx(0 * I1)
    L = P_SCALAR / (1 + P_SCALAR)
    A_bar, F = predictor_form(0.5 * I1, L * I1, I1)
    assert F[0, 0] == pytest.approx(0.5 * L, abs=1e-12)
    assert A_bar[0, 0] == pytest.approx(0.5 - 0.5 * L, abs=1e-12)
    assert F[0, 0] == pytest.approx(0.265578, abs=5e-5)
    assert A_bar[0, 0] == pytest.approx(0.234422, abs=5e-5)


def test_predictor_contraction(canonical):
    ss = canonical.steady_state(I1, I1)
    assert np.linalg.norm(ss.A_bar, 2) <= 0.99
    rng = np.random.default_rng(0)
    for _ in range(20):
        sys_ = random_system(rng, 3)
        ss = sys_.steady_state(I1, I1)
        assert spectral_radius(ss.A_bar) < 1


def test_structural_checks_examples():
    out = structural_checks(0.5 * np.eye(2), np.eye(2), np.eye(2))
    assert out["controllable"] and out["observable"]
    assert out["rho"] == pytest.approx(0.5)
    assert not structural_checks(0.5 * np.eye(2), np.zeros((2, 1)), np.eye(2))["controllable"]
    chain = structural_checks([[0.5, 1.0], [0.0, 0.5]], [[0.0], [1.0]], [[1.0, 0.0]])
    assert chain["controllable"] and chain["observable"]


def test_linear_system_validation():
    with pytest.raises(UnstableSystem):
        LinearSystem(np.array([[1.01]]), I1, I1).validate()
    with pytest.raises(ValueError):
        LinearSystem(0.5 * I1, I1, I1, sigma_w=0.0)
    with pytest.raises(ValueError):
        CostWeights(I1, np.zeros((1, 1)))


def test_cost_decoupled_plant():
    # A = 0 and B = 0: x_t = w_{t-1}, so Sigma_x = sigma_w^2 I
    C = np.array([[1.0, 2.0]])
    sys_ = LinearSystem(np.zeros((2, 2)), np.zeros((2, 1)), C, 0.7, 1.3)
    Q = np.array([[2.0]])
    J = steady_state_cost(sys_, np.zeros((1, 2)), np.zeros((2, 1)), Q, I1)
    assert J == pytest.approx(np.trace(Q @ (0.49 * C @ C.T + 1.69 * I1)), rel=1e-12)


def test_cost_optimal_equals_J_star(scalar):
    ss = scalar.steady_state(I1, I1)
    assert steady_state_cost(scalar, ss.K, ss.L, I1, I1) == pytest.approx(ss.J_star)
    assert ss.J_star == pytest.approx(2.212671, abs=1e-6)


def test_cost_monte_carlo_scalar(scalar):
    # vectorized simulation of the scalar LQG loop, written out by hand
    ss = scalar.steady_state(I1, I1)
    K, L = ss.K[0, 0], ss.L[0, 0]
    seeds, T = 5, 200_000
    rng = np.random.default_rng(2024)
    x = rng.standard_normal(seeds) * math.sqrt(P_SCALAR)
    xh = np.zeros(seeds)
    total = np.zeros(seeds)
    w = rng.standard_normal((T, seeds))
    z = rng.standard_normal((T, seeds))
    for t in range(T):
        y = x + z[t]
        xf = xh + L * (y - xh)
        u = -K * xf
        total += y * y + u * u
        x = 0.5 * x + u + w[t]
        xh = (0.5 - K) * xf
    assert np.mean(total / T) == pytest.approx(ss.J_star, rel=0.01)


def test_cost_suboptimal_gain_is_worse(scalar):
    ss = scalar.steady_state(I1, I1)
    J = steady_state_cost(scalar, ss.K, ss.L, I1, I1)
    for dK in (-0.2, 0.1, 0.3):
        assert steady_state_cost(scalar, ss.K + dK, ss.L, I1, I1) > J


def test_cost_unstable_loop(scalar):
    with pytest.raises(UnstableClosedLoop):
        steady_state_cost(scalar, np.array([[-2.0]]), np.array([[0.5]]), I1, I1)
