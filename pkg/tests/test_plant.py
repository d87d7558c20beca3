import numpy as np
import pytest
import scipy.linalg

from lqgopt.control import LinearSystem
from lqgopt.errors import DivergenceDetected, NonFiniteInput
from lqgopt.plant import (
    NoiseStreams,
    PlantState,
    RunTrace,
    init_steady_state,
    oracle_controller,
    read_trace_csv,
    run_closed_loop,
    step,
    zero_controller,
)

I1 = np.eye(1)
SIGMA_SCALAR = 1.1327822  # filter-DARE root for a = 0.5


def test_init_vanishing_process_noise():
    sys_ = LinearSystem(0.5 * np.eye(2), np.eye(2), np.eye(2), sigma_w=1e-8, sigma_z=1.0)
    x0 = init_steady_state(sys_, seed=1).x
    assert np.linalg.norm(x0) < 1e-6


def test_init_variance_scalar(scalar):
    streams = NoiseStreams.from_seed(7)
    draws = np.array([init_steady_state(scalar, streams=streams).x[0] for _ in range(100_000)])
    assert np.var(draws) == pytest.approx(SIGMA_SCALAR, rel=0.03)


def test_init_deterministic(canonical):
    a = init_steady_state(canonical, seed=42).x
    b = init_steady_state(canonical, seed=42).x
    assert np.array_equal(a, b)
    assert not np.array_equal(a, init_steady_state(canonical, seed=43).x)


def test_step_noiseless_example():
    sys_ = LinearSystem(0.5 * np.eye(2), np.eye(2), np.eye(2))
    state = PlantState(x=np.array([1.0, 0.0]))
    new, y, _ = step(state, np.zeros(2), sys_)
    assert y == pytest.approx([1.0, 0.0])
    assert new.x == pytest.approx([0.5, 0.0])
    assert new.t == 1


def test_step_cost_example():
    sys_ = LinearSystem(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2))
    state = PlantState(x=np.array([1.0, 2.0]))
    _, y, c = step(state, np.array([3.0]), sys_, np.eye(2), I1)
    assert y == pytest.approx([1.0, 2.0])
    assert c == pytest.approx(14.0)


def test_step_rejects_nonfinite(scalar):
    with pytest.raises(NonFiniteInput):
        step(PlantState(x=np.zeros(1)), np.array([np.nan]), scalar)


def _open_loop_output_var(sys_):
    S = scipy.linalg.solve_discrete_lyapunov(sys_.A, sys_.sigma_w**2 * np.eye(sys_.n))
    return sys_.C @ S @ sys_.C.T + sys_.sigma_z**2 * np.eye(sys_.m)


def test_zero_input_output_variance(scalar):
    # under zero input y has the open-loop stationary variance C Sigma_ol C' + sigma_z^2,
    # which differs from the filter quantity C Sigma C' + sigma_z^2
    target = _open_loop_output_var(scalar)[0, 0]
    assert target == pytest.approx(1 / 0.75 + 1)
    assert abs(target - (SIGMA_SCALAR + 1)) > 0.1
    tr = run_closed_loop(scalar, zero_controller(scalar), 200_000, 3, I1, I1)
    assert np.var(tr.y[:, 0]) == pytest.approx(target, rel=0.02)
    assert np.mean(tr.cost) == pytest.approx(target, rel=0.02)


def test_oracle_cost_converges(scalar):
    J = scalar.steady_state(I1, I1).J_star
    tr = run_closed_loop(scalar, oracle_controller(scalar, I1, I1), 200_000, 5, I1, I1)
    assert np.mean(tr.cost) == pytest.approx(J, rel=0.02)


def test_trace_determinism(canonical):
    a = run_closed_loop(canonical, oracle_controller(canonical, I1, I1), 500, 9, I1, I1)
    b = run_closed_loop(canonical, oracle_controller(canonical, I1, I1), 500, 9, I1, I1)
    for name in ("x", "y", "u", "cost"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.cum_cost[-1] == pytest.approx(np.sum(a.cost))
    assert np.all(np.diff(a.t) == 1)
    assert np.all(a.cost >= 0)


def test_divergence_guard(scalar):
    with pytest.raises(DivergenceDetected):
        run_closed_loop(scalar, lambda t, y, rng: 10 * y, 1000, 0, I1, I1)


def test_stationarity_of_oracle_cost(canonical):
    tr = run_closed_loop(canonical, oracle_controller(canonical, I1, I1), 100_000, 11, I1, I1)
    windows = tr.cost.reshape(100, -1).mean(axis=1)
    k = np.arange(len(windows))
    slope, intercept = np.polyfit(k, windows, 1)
    resid = windows - (slope * k + intercept)
    se = np.sqrt(resid @ resid / (len(k) - 2) / np.sum((k - k.mean()) ** 2))
    assert abs(slope) <= 2 * se


def test_innovations_white(canonical):
    ss = canonical.steady_state(I1, I1)
    ctrl = oracle_controller(canonical, I1, I1)
    innov = []

    def policy(t, y, rng):
        innov.append(float((y - canonical.C @ ctrl.xhat)[0]))
        return ctrl(t, y, rng)

    T = 100_000
    run_closed_loop(canonical, policy, T, 13, I1, I1)
    e = np.array(innov) - np.mean(innov)
    assert np.var(e) == pytest.approx(canonical.innovation_cov()[0, 0], rel=0.03)
    for lag in range(1, 11):
        r = (e[:-lag] @ e[lag:]) / (e @ e)
        assert abs(r) < 3 / np.sqrt(T)
    assert ss.J_star > 0


def test_csv_round_trip(tmp_path, canonical):
    tr = run_closed_loop(canonical, oracle_controller(canonical, I1, I1), 50, 1, I1, I1)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    cols = read_trace_csv(path)
    assert tuple(cols) == RunTrace.CSV_COLUMNS
    assert np.array_equal(cols["cost"], tr.cost)
    assert np.array_equal(cols["cum_cost"], tr.cum_cost)
    assert np.allclose(cols["y_norm"], np.abs(tr.y[:, 0]))
    tr.write_summary(tmp_path / "s.json", J_star=1.0)
