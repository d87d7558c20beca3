"""Confidence sets over (A, B, C, L) and the optimistic model search."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import control
from .arx import build_G_cl
from .errors import LqgError, NoFeasibleCandidate
from .sysid import align_similarity


@dataclass(frozen=True)
class Model:
    """Candidate system in innovations parametrization (A, B, C, L)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray

    @property
    def F(self):
        return self.A @ self.L

    @property
    def A_bar(self):
        return self.A - self.A @ self.L @ self.C

    @classmethod
    def from_estimate(cls, est):
        return cls(est.A, est.B, est.C, est.L)

    def as_system(self, sigma_w=1.0, sigma_z=1.0):
        return control.LinearSystem(self.A, self.B, self.C, sigma_w, sigma_z)


PARAMS = ("A", "B", "C", "L")


@dataclass(frozen=True)
class AdmissibilityConfig:
    """Constants describing the admissible set S.

    rho and upsilon bound the contraction of A - BK and A - ALC; D, Gamma and
    zeta cap ||P||, ||K|| and ||L||; sigma_c is the floor on sigma_min(G^cl).
    With contraction="radius" the contraction is measured by the spectral
    radius, which does not depend on the realization; "norm" uses the
    spectral norm in the candidate's own coordinates.
    """

    rho: float = 0.99
    upsilon: float = 0.99
    D: float = 1e3
    Gamma: float = 1e3
    zeta: float = 1e3
    sigma_c: float = 1e-6
    H: int = 5
    contraction: str = "radius"

    def measure(self, M):
        if self.contraction == "norm":
            return float(np.linalg.norm(M, 2))
        if self.contraction == "radius":
            return control.spectral_radius(M)
        raise ValueError(f"unknown contraction measure {self.contraction!r}")


@dataclass(frozen=True)
class ConfidenceSet:
    center: Model
    beta_A: float
    beta_B: float
    beta_C: float
    beta_L: float

    def radius(self, name):
        return getattr(self, f"beta_{name}")


@dataclass
class Evaluation:
    ok: bool
    reasons: list
    J: float = math.inf
    P: np.ndarray | None = None
    K: np.ndarray | None = None
    sigma_min_Gcl: float | None = None


@dataclass(frozen=True)
class OptimisticModel:
    model: Model
    P: np.ndarray
    K: np.ndarray
    J_tilde: float
    candidate_index: int
    iterations: int
    stats: dict = field(default_factory=dict)


def _within(err, radius):
    return err <= radius * (1 + 1e-12) + 1e-15


def contains(candidate, cset, align=False):
    """Membership of ``candidate`` in the product of spectral-norm balls.

    Checked in the chart of the center (T = I).  With ``align=True`` the
    candidate is also tried after orthogonal Procrustes alignment to the
    center, and for n = 1 after the sign flip T = -1, so that a realization
    differing only by an orthogonal change of basis is accepted.
    """
    c = cset.center

    def check(A, B, C, L):
        return (_within(np.linalg.norm(c.A - A, 2), cset.beta_A)
                and _within(np.linalg.norm(c.B - B, 2), cset.beta_B)
                and _within(np.linalg.norm(c.C - C, 2), cset.beta_C)
                and _within(np.linalg.norm(c.L - L, 2), cset.beta_L))

    if check(candidate.A, candidate.B, candidate.C, candidate.L):
        return True
    if not align:
        return False
    n = c.A.shape[0]
    charts = [align_similarity(c, candidate).T]
    if n == 1:
        charts.append(-np.eye(1))
    for T in charts:
        if check(T.T @ candidate.A @ T, T.T @ candidate.B, candidate.C @ T, T.T @ candidate.L):
            return True
    return False


def admissible(candidate, config, Q, R, innovation_cov=None, short_circuit=False):
    """Check the candidate against the admissible set and compute its cost.

    Every gain is synthesized from the candidate itself: K from its control
    DARE and L as its own filter gain.  Returns an Evaluation; solver failures
    appear as reasons rather than exceptions.  J is the innovations-form cost
    and needs ``innovation_cov``; without it J is left at inf.
    """
    A, B, C, L = candidate.A, candidate.B, candidate.C, candidate.L
    reasons = []
    ev = Evaluation(False, reasons)

    def fail(msg):
        reasons.append(msg)
        return short_circuit

    if not np.all(np.isfinite(np.concatenate([A.ravel(), B.ravel(), C.ravel(), L.ravel()]))):
        fail("non-finite parameters")
        return ev
    rho_A = control.spectral_radius(A)
    if rho_A >= 1 and fail(f"unstable: rho(A)={rho_A:.4g}"):
        return ev
    checks = control.structural_checks(A, B, C)
    if not checks["controllable"] and fail("(A, B) not controllable"):
        return ev
    if not checks["observable"] and fail("(A, C) not observable"):
        return ev
    pred = config.measure(A - A @ L @ C)
    if pred > config.upsilon and fail(f"contraction of A - ALC = {pred:.4g} > upsilon"):
        return ev
    if np.linalg.norm(L, 2) > config.zeta and fail("||L|| > zeta"):
        return ev
    if rho_A >= 1:
        return ev
    try:
        P = control.solve_control_dare(A, B, C, Q, R, method="doubling")
        K = control.optimal_gain(A, B, P, R)
    except LqgError as exc:
        fail(f"control DARE failed: {exc}")
        return ev
    ev.P, ev.K = P, K
    contract = config.measure(A - B @ K)
    if contract > config.rho and fail(f"contraction of A - BK = {contract:.4g} > rho"):
        return ev
    if np.linalg.norm(P, 2) > config.D and fail("||P|| > D"):
        return ev
    if np.linalg.norm(K, 2) > config.Gamma and fail("||K|| > Gamma"):
        return ev
    if innovation_cov is not None:
        try:
            ev.J = control.innovations_cost(A, B, C, K, L, innovation_cov, Q, R)
        except LqgError as exc:
            if fail(f"cost evaluation failed: {exc}"):
                return ev
    _, smin = build_G_cl(control.LinearSystem(A, B, C), K, L, config.H)
    ev.sigma_min_Gcl = smin
    if smin < config.sigma_c and fail(f"sigma_min(G^cl)={smin:.3g} < sigma_c"):
        return ev
    ev.ok = not reasons
    return ev


def _ball_sample(rng, shape, radius):
    if radius <= 0:
        return np.zeros(shape)
    G = rng.standard_normal(shape)
    nrm = np.linalg.norm(G, 2)
    if nrm == 0:
        return np.zeros(shape)
    k = int(np.prod(shape))
    return G / nrm * radius * rng.uniform() ** (1.0 / k)


def _project(delta, radius):
    nrm = np.linalg.norm(delta, 2)
    if nrm > radius:
        return delta * (radius / nrm) if nrm > 0 else delta
    return delta


def find_optimistic(cset, config, Q, R, innovation_cov, seed=0, budget=256, sweeps=16,
                    tolerance=1e-8):
    """Approximately minimize J over the admissible part of the confidence set.

    Candidate 0 is the center; then ``budget`` uniform draws from the balls,
    then coordinate descent around the incumbent with step halving each sweep.
    Ties go to the lowest candidate index.
    """
    rng = np.random.default_rng(seed)
    c = cset.center
    radii = {k: cset.radius(k) for k in PARAMS}
    evaluated = 0
    feasible = 0
    best = None
    best_J = math.inf
    best_idx = -1
    trajectory = []

    def consider(model, idx):
        nonlocal evaluated, feasible, best, best_J, best_idx
        evaluated += 1
        ev = admissible(model, config, Q, R, innovation_cov, short_circuit=True)
        if not ev.ok:
            return False
        feasible += 1
        if ev.J < best_J - tolerance or best is None:
            best, best_J, best_idx = (model, ev), ev.J, idx
            trajectory.append(best_J)
            return True
        return False

    consider(c, 0)
    if all(r == 0 for r in radii.values()):
        budget, sweeps = 0, 0
    for i in range(budget):
        deltas = {k: _ball_sample(rng, getattr(c, k).shape, radii[k]) for k in PARAMS}
        cand = Model(*(getattr(c, k) + deltas[k] for k in PARAMS))
        consider(cand, i + 1)
    idx = budget + 1
    step = 0.5
    for _ in range(sweeps):
        if best is None:
            break
        for name in PARAMS:
            r = radii[name]
            if r == 0:
                continue
            for ij in np.ndindex(getattr(c, name).shape):
                for sign in (1.0, -1.0):
                    inc = best[0]
                    delta = getattr(inc, name) - getattr(c, name)
                    delta = delta.copy()
                    delta[ij] += sign * step * r
                    delta = _project(delta, r)
                    cand = replace(inc, **{name: getattr(c, name) + delta})
                    consider(cand, idx)
                    idx += 1
        step *= 0.5
    stats = {"evaluated": evaluated, "feasible": feasible,
             "feasible_fraction": feasible / max(evaluated, 1),
             "best_J_trajectory": trajectory}
    if best is None:
        raise NoFeasibleCandidate(f"no admissible model among {evaluated} candidates")
    model, ev = best
    return OptimisticModel(model, ev.P, ev.K, best_J, best_idx, evaluated, stats)
