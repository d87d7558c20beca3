"""The LqgOpt control loop, its baselines and run diagnostics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import control
from .arx import (RegressorDataset, arx_confidence, choose_H, estimate_M, residual_cov,
                  system_markov_params)
from .errors import (ConfigError, DegradedEpoch, LqgError, NoFeasibleCandidate,
                     NonFiniteState)
from .ofu import AdmissibilityConfig, ConfidenceSet, Model, admissible, contains, find_optimistic
from .plant import LinearFeedback, oracle_controller, run_closed_loop
from .regret import regret
from .sysid import align_similarity, hankel_spectra, hankelize, extract, param_confidence

MODES = ("lqgopt", "ce", "commit")


@dataclass
class AgentConfig:
    """Knobs of the adaptive controller.

    H=None picks the truncation with ``choose_H`` from T and ``upsilon_H``.
    noise_norm=None uses the norm of the residual covariance of each fit.
    sigma_dither adds N(0, sigma_dither^2 I) to the control input after the
    warm-up; the default 0 plays the certainty-equivalent input unchanged.
    """

    T_w: int = 2000
    sigma_u: float = 1.0
    H: int | None = 20
    upsilon_H: float = 0.9
    c_H: float = 1.0
    n: int | None = None
    lam: float = 1.0
    delta: float = 0.1
    S: float = 5.0
    noise_norm: float | None = None
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c_B: float = 1.0
    budget: int = 256
    sweeps: int = 16
    admissibility: AdmissibilityConfig = field(default_factory=AdmissibilityConfig)
    guard_factor: float = 50.0
    sigma_dither: float = 0.0

    def resolve_H(self, T, m=1, n=1):
        if self.H is not None:
            return int(self.H)
        return choose_H(T, self.upsilon_H, self.c_H, m, self.lam, n)

    def validate(self, T=None, n=1, m=1):
        errs = []
        if self.T_w < 1:
            errs.append("T_w: must be positive")
        if self.sigma_u < 0:
            errs.append("sigma_u: must be non-negative")
        if not 0 < self.delta < 1:
            errs.append("delta: must lie in (0, 1)")
        if self.lam <= 0:
            errs.append("lam: must be positive")
        if self.S <= 0:
            errs.append("S: must be positive")
        if self.H is not None and self.H < 2 * n + 1:
            errs.append(f"H: must be at least 2n+1 = {2 * n + 1}")
        if self.H is None and not 0 < self.upsilon_H < 1:
            errs.append("upsilon_H: must lie in (0, 1)")
        if T is not None and not errs and self.T_w < self.resolve_H(T, m, n) + 1:
            errs.append("T_w: must be at least H + 1")
        if self.budget < 0 or self.sweeps < 0:
            errs.append("budget/sweeps: must be non-negative")
        if self.guard_factor <= 0:
            errs.append("guard_factor: must be positive")
        if self.sigma_dither < 0:
            errs.append("sigma_dither: must be non-negative")
        if errs:
            raise ConfigError(errs)
        return self

    def to_dict(self):
        return asdict(self)


def epoch_boundaries(T_w, T):
    """Start times T_w * 2^i of the control epochs below T."""
    out = []
    b = T_w
    while b < T:
        out.append(b)
        b *= 2
    return out


def epoch_of(t, T_w):
    """Epoch index of step t; -1 during warm-up."""
    if t < T_w:
        return -1
    return int(math.floor(math.log2(t / T_w) + 1e-12))


def warmup(plant, config, seed, T_w=None, H=None):
    """Open-loop Gaussian exploration; returns (dataset, y, u)."""
    T_w = config.T_w if T_w is None else T_w
    H = config.resolve_H(max(T_w, 2)) if H is None else H
    rng_sigma = config.sigma_u

    def policy(t, y, rng):
        return rng_sigma * rng.standard_normal(plant.p)

    tr = run_closed_loop(plant, policy, T_w, seed, np.eye(plant.m), np.eye(plant.p))
    ds = RegressorDataset(plant.m, plant.p, H, config.lam, store=True)
    ds.extend(tr.y, tr.u)
    return ds, tr.y, tr.u


def filter_update(model, x_hat, y):
    """Measurement update x_{t|t} = (I - LC) x_{t|t-1} + L y_t."""
    return x_hat + model.L @ (y - model.C @ x_hat)


def filter_step(model, K, x_hat, y):
    """One controller step with model (A, B, C, L) and gain K.

    Returns (u_t, x_hat_{t+1|t}).
    """
    x_filt = filter_update(model, x_hat, y)
    if not np.all(np.isfinite(x_filt)):
        raise NonFiniteState("filter state left the finite range")
    u = -K @ x_filt
    return u, (model.A - model.B @ K) @ x_filt


def _predictor_init(model, y, u, H):
    """x_hat_{t|t-1} from the last H samples through the model's predictor."""
    A_bar, F = model.A_bar, model.F
    x = np.zeros(model.A.shape[0])
    for yk, uk in zip(y[-H:], u[-H:]):
        x = A_bar @ x + model.B @ uk + F @ yk
    return x


def oracle_guards(plant, Q, R, factor):
    """factor times the oracle's stationary RMS of ||y_t|| and ||x_hat_{t|t}||."""
    ss = plant.steady_state(Q, R)
    _, cov = control.closed_loop_cost(plant, ss.K, ss.L, Q, R, return_cov=True)
    n = plant.n
    LC = ss.L @ plant.C
    G = np.hstack([LC, np.eye(n) - LC])
    cov_xf = G @ cov["state"] @ G.T + plant.sigma_z**2 * ss.L @ ss.L.T
    return factor * math.sqrt(np.trace(cov["y"])), factor * math.sqrt(np.trace(cov_xf))


class LqgOptPolicy:
    """Adaptive controller callable as ``policy(t, y, rng) -> u``.

    mode "lqgopt" plays the optimistic model of each epoch, "ce" the center
    estimate, and "commit" the center estimate from the warm-up data forever.
    ``truth`` (the simulated plant) only feeds diagnostics: containment of the
    aligned true parameters and the optimism check.  ``inject_truth`` replaces
    the estimate by the true system with zero radii.
    """

    def __init__(self, config, T, Q, R, m, p, seed=0, mode="lqgopt", truth=None,
                 inject_truth=False, guards=(math.inf, math.inf)):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.cfg = config
        self.T = T
        self.Q, self.R = np.atleast_2d(Q), np.atleast_2d(R)
        self.m, self.p = m, p
        self.seed = seed
        self.mode = mode
        self.truth = truth
        self.inject_truth = inject_truth
        self.n = config.n if config.n is not None else (truth.n if truth is not None else 1)
        self.H = config.resolve_H(T, m, self.n)
        self.tolerance = max(1.0 / T, 1e-8)
        self.boundaries = set(epoch_boundaries(config.T_w, T))
        self.dataset = RegressorDataset(m, p, self.H, config.lam, store=False)
        self._y, self._u = [], []
        self._fed = 0
        self.epoch = -1
        self.model = None
        self.K = None
        self.x_hat = None
        self.xhat_norm = math.nan
        self.y_guard, self.x_guard = guards
        self.max_y = 0.0
        self.max_xhat = 0.0
        self.guard_violations = []
        self.epochs = []
        self._truth_est = None
        self._truth_J = None
        if truth is not None:
            self._truth_J = truth.steady_state(self.Q, self.R).J_star

    # epoch processing

    def _truth_in_chart(self, d1, d2):
        if self._truth_est is None:
            Mt = system_markov_params(self.truth, self.H).M
            self._truth_est = extract(hankelize(Mt, self.m, self.p, self.H, d1, d2, self.n),
                                      self.n)
        return self._truth_est

    def _identify(self):
        cfg = self.cfg
        ds = self.dataset
        M_hat = estimate_M(ds)
        Sigma_e = residual_cov(ds, M_hat)
        noise = cfg.noise_norm if cfg.noise_norm is not None else float(
            np.linalg.norm(Sigma_e, 2))
        conf = arx_confidence(ds, cfg.delta, cfg.S, noise, self.T, M_hat)
        hk = hankelize(M_hat, self.m, self.p, self.H, n=self.n)
        est = extract(hk, self.n)
        H_norm, sigma_n = hankel_spectra(hk, self.n)
        radii = param_confidence(conf.two_norm_bound, H_norm, sigma_n, self.n, self.H,
                                 cfg.c1, cfg.c2, cfg.c3, cfg.c_B)
        center = Model.from_estimate(est)
        cset = ConfidenceSet(center, radii.beta_A, radii.beta_B, radii.beta_C, radii.beta_L)
        info = {"M_bound": conf.two_norm_bound, "beta_t": conf.beta_t, "H_norm": H_norm,
                "sigma_n": sigma_n, "noise_norm": noise,
                "radii": [radii.beta_A, radii.beta_B, radii.beta_C, radii.beta_L]}
        if self.truth is not None:
            Mt = system_markov_params(self.truth, self.H).M
            info["M_error"] = float(np.linalg.norm(M_hat - Mt, 2))
            tr = self._truth_in_chart(hk.d1, hk.d2)
            al = align_similarity(est, tr)
            info["aligned_errors"] = [al.err_A, al.err_B, al.err_C, al.err_L]
            info["contains_truth"] = bool(contains(Model(al.A, al.B, al.C, al.L), cset))
        return cset, Sigma_e, info

    def _start_epoch(self, t):
        cfg = self.cfg
        self.dataset.extend(np.array(self._y[self._fed:t]), np.array(self._u[self._fed:t]))
        self._fed = t
        self.epoch = epoch_of(t, cfg.T_w)
        log = {"epoch": self.epoch, "t_start": t, "H": self.H, "degraded": False}
        if self.mode == "commit" and self.model is not None:
            log["committed"] = True
            self.epochs.append(log)
            return
        prev = (self.model, self.K)
        try:
            if self.inject_truth:
                ss = self.truth.steady_state(self.Q, self.R)
                center = Model(self.truth.A, self.truth.B, self.truth.C, ss.L)
                cset = ConfidenceSet(center, 0.0, 0.0, 0.0, 0.0)
                Sigma_e = self.truth.innovation_cov()
                info = {"radii": [0.0] * 4, "contains_truth": True}
            else:
                cset, Sigma_e, info = self._identify()
            log.update(info)
            center_ev = admissible(cset.center, cfg.admissibility, self.Q, self.R, Sigma_e)
            log["J_center"] = center_ev.J
            log["center_admissible"] = center_ev.ok
            if self.mode == "lqgopt":
                try:
                    opt = find_optimistic(cset, cfg.admissibility, self.Q, self.R, Sigma_e,
                                          seed=_epoch_seed(self.seed, self.epoch),
                                          budget=cfg.budget, sweeps=cfg.sweeps,
                                          tolerance=self.tolerance)
                    self.model, self.K = opt.model, opt.K
                    log["J_tilde"] = opt.J_tilde
                    log["search"] = {k: opt.stats[k] for k in ("evaluated", "feasible",
                                                               "feasible_fraction")}
                    log["best_J_trajectory"] = opt.stats["best_J_trajectory"]
                except NoFeasibleCandidate as exc:
                    raise DegradedEpoch(str(exc)) from exc
            else:
                if not center_ev.ok:
                    raise DegradedEpoch("center estimate inadmissible: "
                                        + "; ".join(center_ev.reasons))
                self.model, self.K = cset.center, center_ev.K
                log["J_tilde"] = center_ev.J
            if self.truth is not None and self.model is not None:
                log["J_played"] = _played_cost(self.truth, self.model, self.K, self.Q, self.R)
            if self._truth_J is not None and "J_tilde" in log:
                log["J_star"] = self._truth_J
                log["optimism_ok"] = bool(log["J_tilde"] <= self._truth_J + self.tolerance)
        except LqgError as exc:
            log["degraded"] = True
            log["reason"] = f"{type(exc).__name__}: {exc}"
            if (self.mode == "lqgopt" and isinstance(exc, DegradedEpoch)
                    and log.get("center_admissible")):
                self.model, self.K = cset.center, center_ev.K
                log["fallback"] = "center"
                log["J_tilde"] = center_ev.J
            else:
                self.model, self.K = prev
                log["fallback"] = "previous" if prev[0] is not None else "explore"
        if self.model is not None and self.model is not prev[0]:
            self.x_hat = _predictor_init(self.model, self._y[:t], self._u[:t], self.H)
        self.epochs.append(log)

    # control loop

    def __call__(self, t, y, rng):
        if t in self.boundaries:
            self._start_epoch(t)
        y = np.atleast_1d(np.asarray(y, float))
        ny = float(np.linalg.norm(y))
        if self.model is None:
            u = self.cfg.sigma_u * rng.standard_normal(self.p)
            self.xhat_norm = math.nan
        else:
            x_filt = filter_update(self.model, self.x_hat, y)
            if not np.all(np.isfinite(x_filt)):
                raise NonFiniteState(f"filter state left the finite range at t={t}")
            u = -self.K @ x_filt
            if self.cfg.sigma_dither > 0:
                u = u + self.cfg.sigma_dither * rng.standard_normal(self.p)
            self.x_hat = self.model.A @ x_filt + self.model.B @ u
            self.xhat_norm = float(np.linalg.norm(x_filt))
            self.max_y = max(self.max_y, ny)
            self.max_xhat = max(self.max_xhat, self.xhat_norm)
            if ny > self.y_guard or self.xhat_norm > self.x_guard:
                self.guard_violations.append(t)
        self._y.append(y)
        self._u.append(np.atleast_1d(u))
        return u

    def diagnostics(self):
        return {
            "mode": self.mode,
            "H": self.H,
            "n": self.n,
            "epochs": self.epochs,
            "guards": {"y": self.y_guard, "xhat": self.x_guard},
            "monitors": {"max_y": self.max_y, "max_xhat": self.max_xhat,
                         "violations": len(self.guard_violations),
                         "first_violation": (self.guard_violations[0]
                                             if self.guard_violations else None)},
        }


def _played_cost(plant, model, K, Q, R):
    """Stationary cost on the true plant of the controller built from ``model``."""
    try:
        return control.closed_loop_cost(plant, K, model.L, Q, R, model=model)
    except LqgError:
        return math.inf


def _epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([int(seed), int(epoch) + 1]).generate_state(1)[0])


def run_lqgopt(plant, Q, R, config, T, seed, mode="lqgopt", inject_truth=False):
    """Run the adaptive controller on ``plant`` for T steps.

    Returns (trace, diagnostics).  Noise streams depend only on ``seed``, so
    runs in different modes are paired.
    """
    plant.validate()
    config.validate(T, config.n or plant.n, plant.m)
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    guards = oracle_guards(plant, Q, R, config.guard_factor)
    policy = LqgOptPolicy(config, T, Q, R, plant.m, plant.p, seed, mode, truth=plant,
                          inject_truth=inject_truth, guards=guards)
    trace = run_closed_loop(plant, policy, T, seed, Q, R)
    J_star = plant.steady_state(Q, R).J_star
    reg = regret(trace, J_star, start=config.T_w)
    diag = policy.diagnostics()
    diag.update({"seed": seed, "T": T, "T_w": config.T_w, "J_star": J_star,
                 "final_regret": reg.total,
                 "adaptive_slope": reg.fit.slope if reg.fit else None,
                 "adaptive_slope_stderr": reg.fit.stderr if reg.fit else None,
                 "adaptive_shift": reg.fit.shift if reg.fit else None})
    trace.meta.update({"agent": mode, "T_w": config.T_w})
    return trace, diag


def run_oracle(plant, Q, R, T, seed):
    ctrl = oracle_controller(plant, Q, R)
    trace = run_closed_loop(plant, ctrl, T, seed, Q, R)
    trace.meta["agent"] = "oracle"
    return trace


AGENTS = ("lqgopt", "oracle", "ce", "commit")


def run_agent(name, plant, Q, R, config, T, seed):
    """(trace, diagnostics) for one of AGENTS on matched noise streams."""
    if name == "oracle":
        trace = run_oracle(plant, Q, R, T, seed)
        J_star = plant.steady_state(Q, R).J_star
        reg = regret(trace, J_star, start=config.T_w)
        return trace, {"mode": "oracle", "seed": seed, "T": T, "J_star": J_star,
                       "final_regret": reg.total,
                       "adaptive_slope": reg.fit.slope if reg.fit else None}
    if name not in MODES:
        raise ValueError(f"unknown agent {name!r}")
    return run_lqgopt(plant, Q, R, config, T, seed, mode=name)


def baseline_agents(plant, Q, R, config, T, seed):
    """Oracle, certainty-equivalence and non-adaptive commit on shared noise."""
    return {name: run_agent(name, plant, Q, R, config, T, seed)
            for name in ("oracle", "ce", "commit")}


__all__ = ["AgentConfig", "LqgOptPolicy", "LinearFeedback", "baseline_agents", "epoch_boundaries",
           "epoch_of", "filter_step", "filter_update", "oracle_guards", "run_agent",
           "run_lqgopt", "run_oracle", "warmup"]
