"""Steady-state LQG mathematics: Riccati equations, gains, predictor form and costs.

Conventions follow the plant

    x_{t+1} = A x_t + B u_t + w_t,   w_t ~ N(0, sigma_w^2 I)
    y_t     = C x_t + z_t,           z_t ~ N(0, sigma_z^2 I)

with stage cost c_t = y_t' Q y_t + u_t' R u_t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    IndefiniteResult,
    NonConvergence,
    SingularInnerMatrix,
    UnstableClosedLoop,
    UnstableSystem,
)

DARE_TOL = 1e-10
DARE_MAX_ITER = 100_000
RANK_RTOL = 1e-10


def _as_matrix(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {M.shape}")
    return M


def _sym(M):
    return 0.5 * (M + M.T)


def spectral_radius(A) -> float:
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass(frozen=True)
class CostWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(_sym(Q)).min() < -1e-12:
            raise ValueError("Q must be symmetric positive semidefinite")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(_sym(R)).min() <= 0:
            raise ValueError("R must be symmetric positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class SteadyStateSolution:
    Sigma: np.ndarray
    L: np.ndarray
    F: np.ndarray
    A_bar: np.ndarray
    P: np.ndarray
    K: np.ndarray
    J_star: float


@dataclass(frozen=True)
class LinearSystem:
    """Plant (A, B, C) with isotropic process and measurement noise."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sigma_w: float = 1.0
    sigma_z: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        if not (self.sigma_w > 0 and self.sigma_z > 0):
            raise ValueError("noise scales must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "sigma_w", float(self.sigma_w))
        object.__setattr__(self, "sigma_z", float(self.sigma_z))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def validate(self):
        """Raise UnstableSystem unless the plant is stable and minimal."""
        checks = structural_checks(self.A, self.B, self.C)
        problems = []
        if checks["rho"] >= 1:
            problems.append(f"spectral radius {checks['rho']:.4g} >= 1")
        if not checks["controllable"]:
            problems.append("(A, B) not controllable")
        if not checks["observable"]:
            problems.append("(A, C) not observable")
        if problems:
            raise UnstableSystem("; ".join(problems))
        return self

    def steady_state(self, Q, R) -> SteadyStateSolution:
        """Optimal LQG objects for cost weights (Q, R); cached per weights."""
        Q = _as_matrix(Q, "Q")
        R = _as_matrix(R, "R")
        key = (Q.tobytes(), R.tobytes())
        if key not in self._cache:
            Sigma = self.filter_cov()
            L = kalman_gain(Sigma, self.C, self.sigma_z)
            A_bar, F = predictor_form(self.A, L, self.C)
            P = solve_control_dare(self.A, self.B, self.C, Q, R)
            K = optimal_gain(self.A, self.B, P, R)
            J = steady_state_cost(self, K, L, Q, R)
            self._cache[key] = SteadyStateSolution(Sigma, L, F, A_bar, P, K, J)
        return self._cache[key]

    def filter_cov(self) -> np.ndarray:
        """Steady-state a-priori filter covariance Sigma (cached)."""
        if "Sigma" not in self._cache:
            self._cache["Sigma"] = solve_filter_dare(self.A, self.C, self.sigma_w, self.sigma_z)
        return self._cache["Sigma"]

    def innovation_cov(self) -> np.ndarray:
        """Steady-state covariance C Sigma C' + sigma_z^2 I of the innovations."""
        Sigma = self.filter_cov()
        return _sym(self.C @ Sigma @ self.C.T) + self.sigma_z**2 * np.eye(self.m)


def _riccati_map(X, A, B, Q, R):
    AtX = A.T @ X
    G = R + B.T @ X @ B
    return _sym(AtX @ A + Q - AtX @ B @ np.linalg.solve(G, B.T @ X @ A))


def _dare_residual(X, A, B, Q, R):
    return float(np.linalg.norm(X - _riccati_map(X, A, B, Q, R), "fro"))


def _dare_fixed_point(A, B, Q, R, tol, max_iter):
    X = np.zeros_like(Q)
    extra = None
    best, best_step = None, np.inf
    for _ in range(max_iter):
        X_next = _riccati_map(X, A, B, Q, R)
        step = np.linalg.norm(X_next - X, "fro")
        if not np.all(np.isfinite(X_next)):
            break
        if step <= tol and extra is None:
            extra = 0
        if extra is not None:
            # the distance to the fixed point is step / (1 - contraction), so
            # polish past tol until round-off floor or a bounded extra budget
            if step < best_step:
                best, best_step = X_next, step
            extra += 1
            if best_step <= 1e-3 * tol or extra >= 2000:
                return best
        X = X_next
    if best is not None:
        return best
    raise NonConvergence(f"DARE fixed-point iteration did not reach tol={tol:g}")


def _dare_doubling(A, B, Q, R, tol, max_iter):
    # structure-preserving doubling; H_k converges quadratically to the solution
    n = A.shape[0]
    Ak = A.copy()
    Gk = _sym(B @ np.linalg.solve(R, B.T))
    Hk = _sym(Q.copy())
    eye = np.eye(n)
    for _ in range(min(max_iter, 200)):
        W = eye + Gk @ Hk
        WA = np.linalg.solve(W, Ak)
        WG = np.linalg.solve(W, Gk)
        H_next = _sym(Hk + Ak.T @ Hk @ WA)
        Gk = _sym(Gk + Ak @ WG @ Ak.T)
        Ak = Ak @ WA
        done = np.linalg.norm(H_next - Hk, "fro") <= tol * max(1.0, np.linalg.norm(H_next))
        Hk = H_next
        if not np.all(np.isfinite(Hk)):
            break
        if done:
            # a few plain iterations wash out round-off from the doubling steps
            X = Hk
            for _ in range(50):
                X_next = _riccati_map(X, A, B, Q, R)
                step = np.linalg.norm(X_next - X, "fro")
                X = X_next
                if step <= tol:
                    return X
            return X
    raise NonConvergence("DARE doubling iteration did not converge")


def _solve_dare(A, B, Q, R, tol, max_iter, method):
    if method == "fixed_point":
        X = _dare_fixed_point(A, B, Q, R, tol, max_iter)
    elif method == "doubling":
        X = _dare_doubling(A, B, Q, R, tol, max_iter)
    else:
        raise ValueError(f"unknown DARE method {method!r}")
    res = _dare_residual(X, A, B, Q, R)
    if res > tol:
        raise NonConvergence(f"DARE residual {res:.3g} exceeds tol={tol:g}")
    lam_min = np.linalg.eigvalsh(X).min() if X.size else 0.0
    if lam_min < -tol:
        raise IndefiniteResult(f"DARE solution has eigenvalue {lam_min:.3g}")
    return X


def solve_control_dare(A, B, C, Q, R, tol=DARE_TOL, max_iter=DARE_MAX_ITER,
                       method="fixed_point"):
    """Solve P = A'PA + C'QC - A'PB (R + B'PB)^{-1} B'PA.

    The default iterates the Riccati map from P = 0, which is monotone and
    converges for stabilizable/detectable data. ``method="doubling"`` gives
    the same fixed point in O(log) iterations.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    C = _as_matrix(C, "C")
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    return _solve_dare(A, B, _sym(C.T @ Q @ C), R, tol, max_iter, method)


def solve_filter_dare(A, C, sigma_w, sigma_z, tol=DARE_TOL, max_iter=DARE_MAX_ITER,
                      method="fixed_point"):
    """A-priori steady-state error covariance of the Kalman filter."""
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    n, m = A.shape[0], C.shape[0]
    return _solve_dare(A.T, C.T, sigma_w**2 * np.eye(n), sigma_z**2 * np.eye(m),
                       tol, max_iter, method)


def optimal_gain(A, B, P, R):
    G = _as_matrix(R, "R") + B.T @ P @ B
    if np.linalg.cond(G) > 1e12:
        raise SingularInnerMatrix("R + B'PB is numerically singular")
    return np.linalg.solve(G, B.T @ P @ A)


def kalman_gain(Sigma, C, sigma_z):
    C = _as_matrix(C, "C")
    S = C @ Sigma @ C.T + sigma_z**2 * np.eye(C.shape[0])
    return np.linalg.solve(S, C @ Sigma).T


def predictor_form(A, L, C):
    """Return (A_bar, F) with F = A L and A_bar = A - F C."""
    F = A @ L
    return A - F @ C, F


def _rank(M):
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def controllability_matrix(A, B, k=None):
    k = A.shape[0] if k is None else k
    blocks = [B]
    for _ in range(k - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C, k=None):
    k = A.shape[0] if k is None else k
    blocks = [C]
    for _ in range(k - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def structural_checks(A, B, C):
    A = _as_matrix(A, "A")
    n = A.shape[0]
    return {
        "controllable": _rank(controllability_matrix(A, _as_matrix(B, "B"))) == n,
        "observable": _rank(observability_matrix(A, _as_matrix(C, "C"))) == n,
        "rho": spectral_radius(A),
    }


def closed_loop_matrices(system, K, L, model=None):
    """Augmented dynamics of s_t = [x_t; xhat_{t|t-1}] under the LQG controller.

    The controller runs a filter with gain L on ``model`` (defaults to the plant
    itself) and applies u_t = -K xhat_{t|t}.  Returns (Phi, Psi, Cy, Dy, Cu, Du)
    with s_{t+1} = Phi s_t + Psi [w_t; z_t], y_t = Cy s_t + Dy z_t and
    u_t = Cu s_t + Du z_t.
    """
    A, B, C = system.A, system.B, system.C
    if model is None:
        Am, Bm, Cm = A, B, C
    else:
        Am, Bm, Cm = model.A, model.B, model.C
    n, nm = A.shape[0], Am.shape[0]
    m = C.shape[0]
    Acl = Am - Bm @ K
    I_LC = np.eye(nm) - L @ Cm
    Phi = np.block([
        [A - B @ K @ L @ C, -B @ K @ I_LC],
        [Acl @ L @ C, Acl @ I_LC],
    ])
    Psi = np.block([
        [np.eye(n), -B @ K @ L],
        [np.zeros((nm, n)), Acl @ L],
    ])
    Cy = np.hstack([C, np.zeros((m, nm))])
    Dy = np.eye(m)
    Cu = np.hstack([-K @ L @ C, -K @ I_LC])
    Du = -K @ L
    return Phi, Psi, Cy, Dy, Cu, Du


def closed_loop_cost(system, K, L, Q, R, model=None, return_cov=False):
    """Stationary average cost of the plant under an LQG-structured controller."""
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    Phi, Psi, Cy, Dy, Cu, Du = closed_loop_matrices(system, K, L, model)
    rho = spectral_radius(Phi)
    if rho >= 1 - 1e-9:
        raise UnstableClosedLoop(f"closed-loop spectral radius {rho:.6g}")
    W = scipy.linalg.block_diag(system.sigma_w**2 * np.eye(system.n),
                                system.sigma_z**2 * np.eye(system.m))
    S = _sym(scipy.linalg.solve_discrete_lyapunov(Phi, Psi @ W @ Psi.T))
    Vz = system.sigma_z**2 * np.eye(system.m)
    cov_y = Cy @ S @ Cy.T + Dy @ Vz @ Dy.T
    cov_u = Cu @ S @ Cu.T + Du @ Vz @ Du.T
    J = float(np.trace(Q @ cov_y) + np.trace(R @ cov_u))
    if return_cov:
        return J, {"state": S, "y": cov_y, "u": cov_u}
    return J


def steady_state_cost(system, K, L, Q, R):
    """Average cost J of the plant when the controller uses its own matrices.

    With the optimal (K, L) of the same system this is J*(system).
    """
    return closed_loop_cost(system, K, L, Q, R)


def innovations_cost(A, B, C, K, L, innovation_cov, Q, R):
    """Average cost of a model given in innovations form.

    The model is xhat_{t+1|t} = A xhat_{t|t} + B u_t, y_t = C xhat_{t|t-1} + e_t
    with e_t ~ N(0, innovation_cov), xhat_{t|t} = xhat_{t|t-1} + L e_t and
    u_t = -K xhat_{t|t}.  Unlike ``steady_state_cost`` this only depends on the
    model up to similarity, so it applies to identified realizations.
    """
    Acl = A - B @ K
    rho = spectral_radius(Acl)
    if rho >= 1 - 1e-9:
        raise UnstableClosedLoop(f"A - BK has spectral radius {rho:.6g}")
    Le = L @ innovation_cov @ L.T
    # S = Acl (S + Le) Acl'
    S = _sym(scipy.linalg.solve_discrete_lyapunov(Acl, Acl @ Le @ Acl.T))
    cov_y = C @ S @ C.T + innovation_cov
    cov_xf = S + Le
    return float(np.trace(Q @ cov_y) + np.trace(R @ K @ cov_xf @ K.T))
