"""Truncated ARX model: regressors, regularized least squares, confidence radius.

The regressor at time t stacks the last H outputs and inputs, most recent
first within each block,

    phi_t = [y_{t-1}; ...; y_{t-H}; u_{t-1}; ...; u_{t-H}],

and the model is y_t = M phi_t + e_t with

    M = [C F, C Abar F, ..., C Abar^{H-1} F, C B, C Abar B, ..., C Abar^{H-1} B].
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .control import kalman_gain, predictor_form, solve_filter_dare
from .errors import DomainError, InsufficientHistory


@dataclass(frozen=True)
class MarkovParams:
    M: np.ndarray
    H: int
    m: int
    p: int

    @property
    def F_blocks(self):
        return [self.M[:, k * self.m:(k + 1) * self.m] for k in range(self.H)]

    @property
    def G_blocks(self):
        off = self.m * self.H
        return [self.M[:, off + k * self.p:off + (k + 1) * self.p] for k in range(self.H)]


def markov_params(A_bar, B, C, F, H) -> MarkovParams:
    """Truncated ARX matrix of a predictor-form model (A_bar, B, C, F)."""
    m, p = C.shape[0], B.shape[1]
    F_blocks, G_blocks = [], []
    CAk = C
    for _ in range(H):
        F_blocks.append(CAk @ F)
        G_blocks.append(CAk @ B)
        CAk = CAk @ A_bar
    return MarkovParams(np.hstack(F_blocks + G_blocks), H, m, p)


def system_markov_params(system, H) -> MarkovParams:
    """ARX matrix of a plant, using its steady-state Kalman predictor."""
    Sigma = solve_filter_dare(system.A, system.C, system.sigma_w, system.sigma_z)
    L = kalman_gain(Sigma, system.C, system.sigma_z)
    A_bar, F = predictor_form(system.A, L, system.C)
    return markov_params(A_bar, system.B, system.C, F, H)


def build_regressor(y, u, t, H):
    """phi_t from output/input histories indexed from time 0."""
    if t < H:
        raise InsufficientHistory(f"need t >= H={H}, got t={t}")
    y = np.asarray(y, float).reshape(len(y), -1)
    u = np.asarray(u, float).reshape(len(u), -1)
    return np.concatenate([y[t - H:t][::-1].ravel(), u[t - H:t][::-1].ravel()])


def regressor_matrix(y, u, H, start=None, stop=None):
    """Rows phi_t' and targets y_t' for t in [start, stop), start >= H."""
    y = np.asarray(y, float).reshape(len(y), -1)
    u = np.asarray(u, float).reshape(len(u), -1)
    start = H if start is None else start
    stop = len(y) if stop is None else stop
    if start < H:
        raise InsufficientHistory(f"need start >= H={H}, got {start}")
    N = max(stop - start, 0)
    m, p = y.shape[1], u.shape[1]
    Phi = np.empty((N, (m + p) * H))
    for k in range(1, H + 1):
        Phi[:, (k - 1) * m:k * m] = y[start - k:stop - k]
        Phi[:, m * H + (k - 1) * p:m * H + k * p] = u[start - k:stop - k]
    return Phi, y[start:stop].copy()


class RegressorDataset:
    """Running sums V_t = lambda I + sum phi phi' and sum phi y' for the ARX fit.

    Feed one (y_t, u_t) pair per step with ``add``; rows start once H pairs of
    history exist.  With ``store=True`` the rows are also kept, which the
    excitation diagnostics need.
    """

    def __init__(self, m, p, H, lam=1.0, store=True):
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.m, self.p, self.H, self.lam = m, p, H, float(lam)
        d = (m + p) * H
        self.gram = np.zeros((d, d))
        self.phiY = np.zeros((d, m))
        self.yy = np.zeros((m, m))
        self.N = 0
        self.t = 0
        self._ybuf = np.zeros((H, m))
        self._ubuf = np.zeros((H, p))
        self.store = store
        self._rows = []
        self._targets = []

    @classmethod
    def from_arrays(cls, y, u, H, lam=1.0, store=True):
        y = np.asarray(y, float).reshape(len(y), -1)
        u = np.asarray(u, float).reshape(len(u), -1)
        ds = cls(y.shape[1], u.shape[1], H, lam, store)
        ds.extend(y, u)
        return ds

    @property
    def dim(self):
        return (self.m + self.p) * self.H

    @property
    def V(self):
        return self.gram + self.lam * np.eye(self.dim)

    @property
    def Phi(self):
        if not self.store:
            raise ValueError("dataset was built with store=False")
        if not self._rows:
            return np.zeros((0, self.dim))
        return np.vstack(self._rows)

    @property
    def Y(self):
        if not self.store:
            raise ValueError("dataset was built with store=False")
        if not self._targets:
            return np.zeros((0, self.m))
        return np.vstack(self._targets)

    def current_regressor(self):
        if self.t < self.H:
            raise InsufficientHistory(f"need t >= H={self.H}, got t={self.t}")
        return np.concatenate([self._ybuf.ravel(), self._ubuf.ravel()])

    def add(self, y, u):
        y = np.atleast_1d(np.asarray(y, float))
        u = np.atleast_1d(np.asarray(u, float))
        if self.t >= self.H:
            phi = self.current_regressor()
            self.gram += np.outer(phi, phi)
            self.phiY += np.outer(phi, y)
            self.yy += np.outer(y, y)
            self.N += 1
            if self.store:
                self._rows.append(phi[None, :])
                self._targets.append(y[None, :])
        self._ybuf = np.roll(self._ybuf, 1, axis=0)
        self._ubuf = np.roll(self._ubuf, 1, axis=0)
        self._ybuf[0] = y
        self._ubuf[0] = u
        self.t += 1

    def extend(self, y, u):
        """Batch version of ``add`` over aligned arrays."""
        T = len(y)
        if T == 0:
            return
        y = np.asarray(y, float).reshape(T, -1)
        u = np.asarray(u, float).reshape(len(u), -1)
        # splice the buffered history in front of the new block; with that
        # prefix the first complete regressor always sits at local index H
        hist = min(self.t, self.H)
        yy = np.vstack([self._ybuf[:hist][::-1], y])
        uu = np.vstack([self._ubuf[:hist][::-1], u])
        if len(yy) > self.H:
            Phi, Y = regressor_matrix(yy, uu, self.H)
            self.gram += Phi.T @ Phi
            self.phiY += Phi.T @ Y
            self.yy += Y.T @ Y
            self.N += len(Phi)
            if self.store:
                self._rows.append(Phi)
                self._targets.append(Y)
        k = min(len(yy), self.H)
        self._ybuf[:k] = yy[-k:][::-1]
        self._ubuf[:k] = uu[-k:][::-1]
        self.t += T


def estimate_M(dataset):
    """Regularized least squares M_hat' = (Phi'Phi + lambda I)^{-1} Phi'Y."""
    V = dataset.V
    cond = np.linalg.cond(V)
    if cond > 1e12:
        warnings.warn(f"ill-conditioned Gram matrix (cond={cond:.3g})", RuntimeWarning)
    return np.linalg.solve(V, dataset.phiY).T


def residual_cov(dataset, M_hat):
    """Sample covariance of the ARX residuals y_t - M_hat phi_t."""
    if dataset.N == 0:
        return np.zeros((dataset.m, dataset.m))
    G, PY = dataset.gram, dataset.phiY
    S = dataset.yy - M_hat @ PY - PY.T @ M_hat.T + M_hat @ G @ M_hat.T
    return 0.5 * (S + S.T) / dataset.N


def log_det_ratio(V, lam):
    """log(det(V)^{1/2} / det(lam I)^{1/2}) via a Cholesky factor."""
    try:
        Lc = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Gram matrix is not positive definite") from exc
    return float(np.sum(np.log(np.diag(Lc)))) - 0.5 * V.shape[0] * math.log(lam)


def confidence_beta(V, lam, delta, S, noise_norm, H, t, T, m):
    """Squared radius of the self-normalized ellipsoid around M_hat.

    beta_t = (sqrt(m * noise_norm * log(det(V_t)^{1/2} / (delta det(lam I)^{1/2})))
              + S sqrt(lam) + t sqrt(H) / T^2)^2
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    arg = log_det_ratio(V, lam) - math.log(delta)
    if arg <= 0:
        raise DomainError(f"log-det argument {arg:.3g} is not positive")
    root = math.sqrt(m * noise_norm * arg) + S * math.sqrt(lam) + t * math.sqrt(H) / T**2
    return root**2


@dataclass(frozen=True)
class ArxConfidence:
    M_hat: np.ndarray
    beta_t: float
    two_norm_bound: float
    lambda_min_V: float


def arx_confidence(dataset, delta, S, noise_norm, T, M_hat=None):
    """M_hat with its ellipsoid radius and the implied spectral-norm bound.

    tr((M_hat - M) V (M_hat - M)') <= beta_t gives
    ||M_hat - M|| <= sqrt(beta_t / lambda_min(V_t)).
    """
    if M_hat is None:
        M_hat = estimate_M(dataset)
    V = dataset.V
    beta = confidence_beta(V, dataset.lam, delta, S, noise_norm, dataset.H,
                           dataset.t, T, dataset.m)
    lam_min = float(np.linalg.eigvalsh(V)[0])
    return ArxConfidence(M_hat, beta, math.sqrt(beta / lam_min), lam_min)


def ellipsoid_distance(M_hat, M, V):
    """tr((M_hat - M) V (M_hat - M)'), the statistic bounded by beta_t."""
    D = M_hat - M
    return float(np.trace(D @ V @ D.T))


def choose_H(T, upsilon, c_H=1.0, m=1, lam=1.0, n=1):
    """Truncation length making the ARX bias of order 1/T^2."""
    if not 0 < upsilon < 1:
        raise ValueError("upsilon must lie in (0, 1)")
    bias_len = math.log(c_H * T**2 * math.sqrt(m) / math.sqrt(lam)) / math.log(1 / upsilon)
    return max(2 * n + 1, math.ceil(bias_len))


def gram_excitation(Phi, checkpoints=None, floor=1e-6, n_checkpoints=32, start=0):
    """lambda_min(sum phi phi') / t along a data stream.

    ``Phi`` holds regressor rows in time order; ``t`` counts rows from
    ``start``.  The stream is flagged persistent when the ratio stays above
    ``floor`` and varies by less than 20% over the final half of the stream
    (checkpoints t >= N/2).
    """
    Phi = np.asarray(Phi, float)[start:]
    N = len(Phi)
    if N == 0:
        return {"checkpoints": [], "history": [], "lambda_min_over_t": 0.0,
                "relative_variation": float("inf"), "persistent": False}
    if checkpoints is None:
        lo = max(1, min(N, Phi.shape[1]))
        checkpoints = np.geomspace(lo, N, n_checkpoints).astype(int)
        checkpoints = np.unique(np.append(checkpoints, max(N // 2, 1)))
    G = np.zeros((Phi.shape[1], Phi.shape[1]))
    prev = 0
    history = []
    for c in checkpoints:
        block = Phi[prev:c]
        G += block.T @ block
        prev = c
        history.append(max(float(np.linalg.eigvalsh(G)[0]), 0.0) / c)
    history = np.array(history)
    cps = np.asarray(checkpoints)
    tail = history[cps >= cps[-1] / 2]
    scale = float(np.mean(tail))
    variation = float((tail.max() - tail.min()) / scale) if scale > 0 else float("inf")
    return {
        "checkpoints": [int(c) for c in checkpoints],
        "history": history.tolist(),
        "lambda_min_over_t": float(history[-1]),
        "relative_variation": variation,
        "persistent": bool(scale > floor and tail.min() > floor and variation < 0.2),
    }


def _sigma_min_rows(G):
    # smallest of the min(rows, cols) singular values; 0 for a wide matrix of
    # deficient row rank
    s = np.linalg.svd(G, compute_uv=False)
    if G.shape[0] > G.shape[1]:
        return 0.0
    return float(s[-1]) if len(s) == G.shape[0] else 0.0


def open_loop_block(system, H):
    """G^o: maps (w_s, z_s, u_s) for s = t, t-1, ..., t-H+1 to f_t = [y_t; u_t]."""
    A, B, C = system.A, system.B, system.C
    n, m, p = system.n, system.m, system.p
    k = n + m + p
    Go = np.zeros((m + p, H * k))
    Go[:m, n:n + m] = np.eye(m)
    Go[m:, n + m:k] = np.eye(p)
    CAk = C
    for j in range(1, H):
        Go[:m, j * k:j * k + n] = CAk
        Go[:m, j * k + n + m:(j + 1) * k] = CAk @ B
        CAk = CAk @ A
    return Go


def build_G_ol(system, H):
    """Open-loop noise-evolution matrix G^ol and its smallest singular value.

    Row block j (j = 1..H) holds f_{t-j}; column group g (g = 1..2H) holds
    (w_{t-g}, z_{t-g}, u_{t-g}).  Each row block is G^o shifted by one group.
    """
    Go = open_loop_block(system, H)
    k = system.n + system.m + system.p
    r = system.m + system.p
    G = np.zeros((r * H, 2 * H * k))
    for j in range(H):
        G[j * r:(j + 1) * r, j * k:(j + H) * k] = Go
    return G, _sigma_min_rows(G)


def closed_loop_blocks(system, K, L):
    """(G1, Gamma, G2, G3) of the LQG closed loop with gains (K, L)."""
    A, B, C = system.A, system.B, system.C
    n, m = system.n, system.m
    p = K.shape[0]
    I = np.eye(n)
    G1 = np.block([[C, np.eye(m)], [-K @ L @ C, -K @ L]])
    Gamma = np.block([[C, np.zeros((m, n))], [np.zeros((p, n)), -K]])
    G2 = np.block([[A, -B @ K],
                   [L @ C @ A, (I - L @ C) @ (A - B @ K) - L @ C @ B @ K]])
    G3 = np.block([[I, np.zeros((n, m))], [L @ C, L]])
    return G1, Gamma, G2, G3


def build_G_cl(system, K, L, H):
    """Closed-loop noise-evolution matrix G^cl and its smallest singular value.

    Gbar = [G1, Gamma G2 G3, ..., Gamma G2^{H-1} G3] maps nu_s = [w_{s-1}; z_s]
    for s = t, ..., t-H+1 to f_t; G^cl stacks Gbar shifted one group per row
    block over nu_{t-1}, ..., nu_{t-2H}.
    """
    K = np.atleast_2d(K)
    L = np.atleast_2d(L)
    G1, Gamma, G2, G3 = closed_loop_blocks(system, K, L)
    blocks = [G1]
    G2k = G2
    for _ in range(1, H):
        blocks.append(Gamma @ G2k @ G3)
        G2k = G2k @ G2
    Gbar = np.hstack(blocks)
    k = system.n + system.m
    r = system.m + K.shape[0]
    G = np.zeros((r * H, 2 * H * k))
    for j in range(H):
        G[j * r:(j + 1) * r, j * k:(j + H) * k] = Gbar
    return G, _sigma_min_rows(G)


def permute_to_interleaved(phi, m, p, H):
    """Reorder phi_t into [y_{t-1}; u_{t-1}; ...; y_{t-H}; u_{t-H}]."""
    ys = phi[:m * H].reshape(H, m)
    us = phi[m * H:].reshape(H, p)
    return np.hstack([ys, us]).ravel()
