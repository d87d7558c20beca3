"""Ground-truth LQG plant simulation and run traces."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected, NonFiniteInput

Y_GUARD = 1e6


@dataclass
class NoiseStreams:
    """Independent generators for x0, w, z and exploration inputs.

    Keeping the streams separate means two controllers run with the same seed
    see exactly the same plant noise.
    """

    init: np.random.Generator
    w: np.random.Generator
    z: np.random.Generator
    explore: np.random.Generator

    @classmethod
    def from_seed(cls, seed):
        ss = np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(4)))


@dataclass
class PlantState:
    x: np.ndarray
    t: int = 0
    streams: NoiseStreams | None = None
    # z_t is drawn once per step so observe() and step() agree
    _z: np.ndarray | None = field(default=None, repr=False)


def _psd_sqrt(S):
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def system_hash(system) -> str:
    h = hashlib.sha256()
    for M in (system.A, system.B, system.C):
        h.update(np.ascontiguousarray(M, dtype=float).tobytes())
    h.update(np.array([system.sigma_w, system.sigma_z]).tobytes())
    return h.hexdigest()[:16]


def init_steady_state(system, seed=None, streams=None) -> PlantState:
    """Draw x_0 ~ N(0, Sigma) with Sigma the filter-DARE solution."""
    if streams is None:
        streams = NoiseStreams.from_seed(seed)
    Sigma = system.filter_cov()
    x0 = _psd_sqrt(Sigma) @ streams.init.standard_normal(system.n)
    return PlantState(x=x0, t=0, streams=streams)


def observe(state, system):
    """Observation y_t = C x_t + z_t for the current step."""
    if state._z is None:
        if state.streams is None:
            state._z = np.zeros(system.m)
        else:
            state._z = system.sigma_z * state.streams.z.standard_normal(system.m)
    return system.C @ state.x + state._z


def stage_cost(y, u, Q, R) -> float:
    return float(y @ Q @ y + u @ R @ u)


def step(state, u, system, Q=None, R=None):
    """Advance one step: emit y_t, apply u_t, evolve to x_{t+1}.

    Returns (new_state, y_t, cost_t); the cost is None when Q or R is omitted.
    A state without noise streams evolves noiselessly.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not np.all(np.isfinite(u)):
        raise NonFiniteInput(f"non-finite input at t={state.t}")
    y = observe(state, system)
    if state.streams is None:
        w = np.zeros(system.n)
    else:
        w = system.sigma_w * state.streams.w.standard_normal(system.n)
    x_next = system.A @ state.x + system.B @ u + w
    cost = None if Q is None or R is None else stage_cost(y, u, Q, R)
    return PlantState(x=x_next, t=state.t + 1, streams=state.streams), y, cost


@dataclass
class RunTrace:
    """Per-step record of one closed-loop run."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    cost: np.ndarray
    epoch: np.ndarray
    xhat_norm: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return len(self.t)

    @property
    def cum_cost(self):
        return np.cumsum(self.cost)

    CSV_COLUMNS = ("t", "epoch", "cost", "cum_cost", "y_norm", "u_norm", "xhat_norm")

    def to_csv(self, path):
        y_norm = np.linalg.norm(self.y, axis=1)
        u_norm = np.linalg.norm(self.u, axis=1)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for row in zip(self.t, self.epoch, self.cost, self.cum_cost, y_norm,
                           u_norm, self.xhat_norm):
                writer.writerow([int(row[0]), int(row[1])] + [repr(float(v)) for v in row[2:]])

    def summary(self, J_star=None, **extra):
        out = {"T": self.T, "meta": self.meta,
               "mean_cost": float(np.mean(self.cost)) if self.T else None}
        if J_star is not None:
            out["J_star"] = float(J_star)
            out["final_regret"] = float(np.sum(self.cost) - self.T * J_star)
        out.update(extra)
        return out

    def write_summary(self, path, J_star=None, **extra):
        with open(path, "w") as fh:
            json.dump(self.summary(J_star, **extra), fh, indent=2, sort_keys=True, default=float)


def read_trace_csv(path):
    """Load the columns written by ``RunTrace.to_csv`` as a dict of arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    if rows.size == 0:
        rows = np.zeros((0, len(header)))
    return {name: rows[:, i] for i, name in enumerate(header)}


def run_closed_loop(system, controller, T, seed, Q, R, guard=Y_GUARD, streams=None):
    """Simulate T steps with ``controller(t, y, rng) -> u``.

    The controller sees y_t before choosing u_t and receives the exploration
    stream as ``rng``.  It may expose ``epoch`` and ``xhat_norm`` attributes,
    which are recorded per step.
    """
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    state = init_steady_state(system, seed=seed, streams=streams)
    rng = state.streams.explore
    n, m, p = system.n, system.m, system.p
    xs = np.empty((T, n))
    ys = np.empty((T, m))
    us = np.empty((T, p))
    costs = np.empty(T)
    epochs = np.zeros(T, dtype=int)
    xhat = np.full(T, np.nan)
    for t in range(T):
        y = observe(state, system)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > guard:
            raise DivergenceDetected(f"|y_t| exceeded {guard:g} at t={t}")
        u = np.atleast_1d(controller(t, y, rng))
        xs[t] = state.x
        state, y, c = step(state, u, system, Q, R)
        ys[t] = y
        us[t] = u
        costs[t] = c
        epochs[t] = getattr(controller, "epoch", 0)
        xhat[t] = getattr(controller, "xhat_norm", np.nan)
    meta = {"seed": seed, "system_hash": system_hash(system)}
    return RunTrace(np.arange(T), xs, ys, us, costs, epochs, xhat, meta)


class LinearFeedback:
    """Steady-state LQG controller with fixed (A, B, C, K, L).

    Implements xhat_{t|t} = (I - L C) xhat_{t|t-1} + L y_t, u_t = -K xhat_{t|t},
    xhat_{t+1|t} = (A - B K) xhat_{t|t}.
    """

    def __init__(self, A, B, C, K, L, xhat0=None):
        self.A, self.B, self.C, self.K, self.L = A, B, C, K, L
        self._Acl = A - B @ K
        self.xhat = np.zeros(A.shape[0]) if xhat0 is None else np.asarray(xhat0, float)
        self.xhat_norm = 0.0
        self.epoch = 0

    def __call__(self, t, y, rng=None):
        x_filt = self.xhat + self.L @ (y - self.C @ self.xhat)
        u = -self.K @ x_filt
        self.xhat = self._Acl @ x_filt
        self.xhat_norm = float(np.linalg.norm(x_filt))
        return u


def oracle_controller(system, Q, R):
    ss = system.steady_state(Q, R)
    return LinearFeedback(system.A, system.B, system.C, ss.K, ss.L)


def zero_controller(system):
    def policy(t, y, rng=None):
        return np.zeros(system.p)
    return policy
