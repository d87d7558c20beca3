import numpy as np
import pytest

from lqgopt.control import LinearSystem, structural_checks


def random_system(rng, n, m=1, p=1, radius=0.8, sigma_w=1.0, sigma_z=1.0):
    """Controllable, observable system with spectral radius ``radius``."""
    while True:
        A = rng.standard_normal((n, n))
        A *= radius / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.standard_normal((n, p))
        C = rng.standard_normal((m, n))
        chk = structural_checks(A, B, C)
        if chk["controllable"] and chk["observable"]:
            return LinearSystem(A, B, C, sigma_w, sigma_z)


def riccati_vi(A, B, Q, R, iters=10_000):
    """Plain value iteration of the control Riccati map from zero."""
    P = np.zeros_like(A)
    for _ in range(iters):
        G = np.linalg.inv(R + B.T @ P @ B)
        P = A.T @ P @ A + Q - A.T @ P @ B @ G @ B.T @ P @ A
    return P


def filter_vi(A, C, sigma_w, sigma_z, iters=10_000):
    """Covariance recursion of the Kalman predictor from sigma_w^2 I."""
    n, m = A.shape[0], C.shape[0]
    S = sigma_w**2 * np.eye(n)
    for _ in range(iters):
        G = np.linalg.inv(C @ S @ C.T + sigma_z**2 * np.eye(m))
        S = A @ S @ A.T + sigma_w**2 * np.eye(n) - A @ S @ C.T @ G @ C @ S @ A.T
    return S


@pytest.fixture
def scalar():
    return LinearSystem(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]))


@pytest.fixture
def canonical():
    from lqgopt.experiment import canonical_plant
    return canonical_plant()
