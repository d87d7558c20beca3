"""Empirical fit of the radius constants c1, c2, c3 and c_B."""
from __future__ import annotations

import math

import numpy as np

from .arx import RegressorDataset, arx_confidence, estimate_M, residual_cov, system_markov_params
from .plant import run_closed_loop
from .sysid import align_similarity, extract, hankel_spectra, hankelize


def _shapes(eps, H_norm, sigma_n, n, H):
    core = math.sqrt(n * H) * (H_norm + sigma_n)
    shape_A = core / sigma_n**2 * eps
    shape_B = math.sqrt(20 * n * H / sigma_n) * eps
    return shape_A, shape_B, core / sigma_n**1.5 * eps, H_norm / math.sqrt(sigma_n)


def calibration_samples(plant, config, seeds, T_max, checkpoints=None):
    """Aligned SysId errors and radius shapes under exploration inputs.

    For each seed, data come from an open-loop run with N(0, sigma_u^2) inputs;
    at every checkpoint t the ARX fit, SysId and the bound on ||M_hat - M|| are
    recomputed from the first t samples.  Returns a list of dicts.
    """
    n = config.n or plant.n
    H = config.resolve_H(T_max, plant.m, n)
    if checkpoints is None:
        checkpoints = []
        t = config.T_w
        while t <= T_max:
            checkpoints.append(t)
            t *= 2
    Mt = system_markov_params(plant, H).M
    truth_est = {}
    out = []
    sigma_u = config.sigma_u
    Q, R = np.eye(plant.m), np.eye(plant.p)

    def policy(t, y, rng):
        return sigma_u * rng.standard_normal(plant.p)

    for seed in seeds:
        tr = run_closed_loop(plant, policy, int(max(checkpoints)), seed, Q, R)
        ds = RegressorDataset(plant.m, plant.p, H, config.lam, store=False)
        fed = 0
        for t in checkpoints:
            ds.extend(tr.y[fed:t], tr.u[fed:t])
            fed = t
            M_hat = estimate_M(ds)
            noise = config.noise_norm if config.noise_norm is not None else float(
                np.linalg.norm(residual_cov(ds, M_hat), 2))
            eps = arx_confidence(ds, config.delta, config.S, noise, T_max, M_hat).two_norm_bound
            hk = hankelize(M_hat, plant.m, plant.p, H, n=n)
            est = extract(hk, n)
            key = (hk.d1, hk.d2)
            if key not in truth_est:
                truth_est[key] = extract(hankelize(Mt, plant.m, plant.p, H, *key, n), n)
            al = align_similarity(est, truth_est[key])
            H_norm, sigma_n = hankel_spectra(hk, n)
            sA, sB, sL3, kL2 = _shapes(eps, H_norm, sigma_n, n, H)
            out.append({"seed": seed, "t": t, "eps": eps, "err_A": al.err_A, "err_B": al.err_B,
                        "err_C": al.err_C, "err_L": al.err_L, "shape_A": sA, "shape_B": sB,
                        "shape_L3": sL3, "kappa_L2": kL2})
    return out


def fit_constants(samples, quantile):
    """Smallest constants covering ``quantile`` of the samples per parameter.

    c2 and c3 share one scale s, so beta_L = s (kappa c1 shape_A + shape_L3).
    """
    rA = np.array([s["err_A"] / s["shape_A"] for s in samples])
    c1 = float(np.quantile(rA, quantile))
    rB = np.array([max(s["err_B"], s["err_C"]) / s["shape_B"] for s in samples])
    c_B = float(np.quantile(rB, quantile))
    rL = np.array([s["err_L"] / (s["kappa_L2"] * c1 * s["shape_A"] + s["shape_L3"])
                   for s in samples])
    sL = float(np.quantile(rL, quantile))
    return {"c1": c1, "c2": sL, "c3": sL, "c_B": c_B}


def coverage(samples, constants):
    """Fraction of samples whose aligned errors all fall inside the radii."""
    c1, c2, c3, cB = (constants[k] for k in ("c1", "c2", "c3", "c_B"))
    hits = 0
    for s in samples:
        bA = c1 * s["shape_A"]
        bB = cB * s["shape_B"]
        bL = c2 * s["kappa_L2"] * bA + c3 * s["shape_L3"]
        hits += (s["err_A"] <= bA and s["err_B"] <= bB and s["err_C"] <= bB
                 and s["err_L"] <= bL)
    return hits / max(len(samples), 1)


def calibrate(plant, config, seeds, T_max, holdout_seeds=None, quantile=None):
    """Fit the constants on ``seeds`` and report coverage on ``holdout_seeds``.

    The default quantile 1 - delta/4 splits the miss budget over the four
    parameters, so joint coverage is at least 1 - delta by a union bound.
    """
    q = 1 - config.delta / 4 if quantile is None else quantile
    train = calibration_samples(plant, config, seeds, T_max)
    consts = fit_constants(train, q)
    report = {"constants": consts, "quantile": q, "n_train": len(train),
              "train_coverage": coverage(train, consts)}
    if holdout_seeds:
        test = calibration_samples(plant, config, holdout_seeds, T_max)
        report["n_holdout"] = len(test)
        report["holdout_coverage"] = coverage(test, consts)
    return report
