"""Hankel-based recovery of (A, B, C, F, L) from the truncated ARX matrix."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, RankDeficient, SingularAhat


@dataclass(frozen=True)
class HankelPair:
    H_full: np.ndarray
    H_minus: np.ndarray
    H_plus: np.ndarray
    d1: int
    d2: int
    m: int
    p: int


@dataclass(frozen=True)
class SystemEstimate:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    L: np.ndarray
    A_bar: np.ndarray
    singular_values: np.ndarray
    O: np.ndarray
    ctrl: np.ndarray

    @property
    def n(self):
        return self.A.shape[0]

    def markov_blocks(self, H):
        """C A_bar^k F and C A_bar^k B for k < H."""
        F_blocks, G_blocks = [], []
        CAk = self.C
        for _ in range(H):
            F_blocks.append(CAk @ self.F)
            G_blocks.append(CAk @ self.B)
            CAk = CAk @ self.A_bar
        return F_blocks, G_blocks


@dataclass(frozen=True)
class ParamConfidence:
    beta_A: float
    beta_B: float
    beta_C: float
    beta_L: float
    H_norm: float
    sigma_n: float
    H: int
    n: int
    M_error_bound: float


def default_split(H, n):
    """Balanced (d1, d2) with d1 + d2 + 1 = H and both at least n."""
    d1 = (H - 1) // 2
    d2 = H - 1 - d1
    if d1 < n or d2 < n:
        raise DimensionMismatch(f"H={H} too short for order n={n}; need H >= 2n+1")
    return d1, d2


def hankelize(M_hat, m, p, H, d1=None, d2=None, n=1) -> HankelPair:
    """Block Hankel matrices [H_F, H_G] with (i, j) block F_{i+j-1} / G_{i+j-1}.

    H_minus drops block columns d2+1 and 2d2+2; H_plus drops 1 and d2+2.
    """
    M_hat = np.atleast_2d(M_hat)
    if M_hat.shape != (m, (m + p) * H):
        raise DimensionMismatch(f"M has shape {M_hat.shape}, expected {(m, (m + p) * H)}")
    if d1 is None or d2 is None:
        d1, d2 = default_split(H, n)
    if d1 + d2 + 1 != H or d1 < 1 or d2 < 1:
        raise DimensionMismatch(f"need d1 + d2 + 1 = H, got d1={d1}, d2={d2}, H={H}")
    F = [M_hat[:, k * m:(k + 1) * m] for k in range(H)]
    G = [M_hat[:, m * H + k * p:m * H + (k + 1) * p] for k in range(H)]
    HF = np.block([[F[i + j] for j in range(d2 + 1)] for i in range(d1)])
    HG = np.block([[G[i + j] for j in range(d2 + 1)] for i in range(d1)])
    H_full = np.hstack([HF, HG])
    H_minus = np.hstack([HF[:, :m * d2], HG[:, :p * d2]])
    H_plus = np.hstack([HF[:, m:], HG[:, p:]])
    return HankelPair(H_full, H_minus, H_plus, d1, d2, m, p)


def _fix_signs(U, Vt):
    # largest-magnitude entry of each left singular vector made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def extract(hankel, n, perturbation=None, ahat_rtol=1e-10) -> SystemEstimate:
    """Rank-n factorization of H_minus and recovery of the system matrices.

    ``perturbation`` is an estimate of ||N - N_hat||; a warning is issued when
    sigma_n(H_minus) is below twice that value.
    """
    m, p, d2 = hankel.m, hankel.p, hankel.d2
    U, s, Vt = np.linalg.svd(hankel.H_minus, full_matrices=False)
    if len(s) < n or s[0] == 0 or s[n - 1] < 1e-12 * s[0]:
        raise RankDeficient(f"sigma_{n} of H_minus is numerically zero")
    if perturbation is not None and s[n - 1] < 2 * perturbation:
        warnings.warn(f"sigma_n={s[n - 1]:.3g} below twice the perturbation "
                      f"{perturbation:.3g}; estimates may be unreliable", RuntimeWarning)
    U, Vt = _fix_signs(U[:, :n], Vt[:n])
    root = np.sqrt(s[:n])
    O = U * root
    ctrl = root[:, None] * Vt
    C_F, C_B = ctrl[:, :m * d2], ctrl[:, m * d2:]
    C_hat = O[:m]
    F_hat = C_F[:, :m]
    B_hat = C_B[:, :p]
    O_pinv = np.linalg.pinv(O)
    A_bar = O_pinv @ hankel.H_plus @ np.linalg.pinv(ctrl)
    A_hat = A_bar + F_hat @ C_hat
    sA = np.linalg.svd(A_hat, compute_uv=False)
    if sA[-1] < ahat_rtol * max(sA[0], 1.0):
        raise SingularAhat("A_hat is numerically singular; L cannot be recovered")
    L_hat = (np.linalg.pinv(A_hat) @ O_pinv @ hankel.H_minus)[:, :m]
    return SystemEstimate(A_hat, B_hat, C_hat, F_hat, L_hat, A_bar, s, O, ctrl)


def sysid(M_hat, m, p, H, n, d1=None, d2=None, perturbation=None):
    return extract(hankelize(M_hat, m, p, H, d1, d2, n), n, perturbation)


def param_confidence(M_error_bound, H_norm, sigma_n, n, H, c1=1.0, c2=1.0, c3=1.0, c_B=1.0):
    """Spectral-norm radii around the identified (A, B, C, L).

    c1, c2, c3 are the problem-dependent constants of the A and L radii; c_B
    scales the shared B and C radius (1.0 gives the worst-case analysis value).
    """
    eps = float(M_error_bound)
    core = math.sqrt(n * H) * (H_norm + sigma_n)
    beta_A = c1 * core / sigma_n**2 * eps
    beta_B = c_B * math.sqrt(20 * n * H / sigma_n) * eps
    beta_L = c2 * H_norm / math.sqrt(sigma_n) * beta_A + c3 * core / sigma_n**1.5 * eps
    return ParamConfidence(beta_A, beta_B, beta_B, beta_L, float(H_norm), float(sigma_n),
                           H, n, eps)


def hankel_spectra(hankel, n):
    """(||H||, sigma_n(H)) of the concatenated Hankel matrix."""
    s = np.linalg.svd(hankel.H_full, compute_uv=False)
    return float(s[0]), float(s[n - 1])


@dataclass(frozen=True)
class Alignment:
    T: np.ndarray
    err_A: float
    err_B: float
    err_C: float
    err_L: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray


def align_similarity(estimate, truth, H=None) -> Alignment:
    """Orthogonal T bringing ``truth`` into the chart of ``estimate``.

    T minimizes the Frobenius mismatch between the stacked observability and
    controllability factors, O_est ~ O_true T and ctrl_est ~ T' ctrl_true.
    Both arguments need A, B, C, L and A_bar attributes (SystemEstimate or a
    duck-typed equivalent); the aligned truth is (T'AT, T'B, CT, T'L).
    """
    n = estimate.A.shape[0]
    depth = H if H is not None else max(2 * n, 2)

    def factors(sys_):
        Ab = sys_.A_bar
        F = sys_.A @ sys_.L
        obs, ctl = [sys_.C], [np.hstack([F, sys_.B])]
        for _ in range(depth - 1):
            obs.append(obs[-1] @ Ab)
            ctl.append(Ab @ ctl[-1])
        return np.vstack(obs), np.hstack(ctl)

    O_t, K_t = factors(truth)
    O_e, K_e = factors(estimate)
    X = np.vstack([O_t, K_t.T])
    Y = np.vstack([O_e, K_e.T])
    T, _ = scipy.linalg.orthogonal_procrustes(X, Y)
    A = T.T @ truth.A @ T
    B = T.T @ truth.B
    C = truth.C @ T
    L = T.T @ truth.L
    return Alignment(
        T,
        float(np.linalg.norm(estimate.A - A, 2)),
        float(np.linalg.norm(estimate.B - B, 2)),
        float(np.linalg.norm(estimate.C - C, 2)),
        float(np.linalg.norm(estimate.L - L, 2)),
        A, B, C, L,
    )
