"""Scenario configs, multi-seed sweeps and aggregate reports."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import fields
from multiprocessing import Pool

import numpy as np
import yaml

from . import __version__
from .agent import AGENTS, AgentConfig, run_agent
from .arx import gram_excitation, regressor_matrix, system_markov_params
from .control import CostWeights, LinearSystem, structural_checks
from .errors import ConfigError, LqgError
from .ofu import AdmissibilityConfig, Model, admissible
from .regret import fit_loglog, fit_regret_slope, geometric_checkpoints

NAMED_PLANTS = ("scalar", "chain-2", "canonical", "random-stable")


def named_plant(name, sigma_w=1.0, sigma_z=1.0, seed=0, n=2, m=1, p=1, radius=0.9):
    """Built-in test plants.

    scalar: a=0.5, b=c=1.  chain-2: A=[[0.5,1],[0,0.5]], B=[0;1], C=[1 0].
    canonical: A=[[0.9,0.1],[0,0.8]], B=[0;1], C=[1 0].  random-stable: Gaussian
    matrices with A rescaled to spectral radius ``radius``, redrawn until
    controllable and observable.
    """
    if name == "scalar":
        A, B, C = [[0.5]], [[1.0]], [[1.0]]
    elif name == "chain-2":
        A, B, C = [[0.5, 1.0], [0.0, 0.5]], [[0.0], [1.0]], [[1.0, 0.0]]
    elif name == "canonical":
        A, B, C = [[0.9, 0.1], [0.0, 0.8]], [[0.0], [1.0]], [[1.0, 0.0]]
    elif name == "random-stable":
        rng = np.random.default_rng(seed)
        for _ in range(1000):
            A = rng.standard_normal((n, n))
            A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
            B = rng.standard_normal((n, p))
            C = rng.standard_normal((m, n))
            chk = structural_checks(A, B, C)
            if chk["controllable"] and chk["observable"]:
                break
        else:
            raise ConfigError(["plant: could not draw a controllable, observable system"])
    else:
        raise ConfigError([f"plant.name: unknown plant {name!r}; choose from {NAMED_PLANTS}"])
    return LinearSystem(np.array(A, float), np.array(B, float), np.array(C, float),
                        sigma_w, sigma_z)


def canonical_plant():
    return named_plant("canonical")


def _matrix(value, size, field_name, errs):
    try:
        M = np.atleast_2d(np.asarray(value, float))
    except (TypeError, ValueError):
        errs.append(f"{field_name}: not a numeric matrix")
        return None
    if M.shape == (1, 1) and size > 1:
        M = M[0, 0] * np.eye(size)
    if M.shape != (size, size):
        errs.append(f"{field_name}: expected {size}x{size}, got {M.shape[0]}x{M.shape[1]}")
        return None
    return M


_AGENT_FIELDS = {f.name for f in fields(AgentConfig)} - {"admissibility"}
_ADMISSIBLE_FIELDS = {f.name for f in fields(AdmissibilityConfig)}


class ScenarioConfig:
    """A validated scenario: plant, cost, agent knobs, horizon, seeds, agents.

    Build from a mapping (``from_dict``) or a YAML file (``load``).  All
    defaults are filled in, and ``resolved`` returns the complete tree that
    goes into the manifest.
    """

    def __init__(self, name, plant, plant_spec, Q, R, agent, T, seeds, agents):
        self.name = name
        self.plant = plant
        self.plant_spec = plant_spec
        self.Q, self.R = Q, R
        self.agent = agent
        self.T = T
        self.seeds = seeds
        self.agents = agents

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([f"config: invalid YAML: {exc}"]) from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError(["config: top level must be a mapping"])
        raw = copy.deepcopy(raw)
        errs = []
        known = {"name", "plant", "cost", "agent", "T", "seeds", "agents"}
        errs += [f"{k}: unknown field" for k in sorted(set(raw) - known)]
        name = str(raw.get("name", "scenario"))

        plant_raw = raw.get("plant", {"name": "canonical"})
        plant, plant_spec = None, None
        if not isinstance(plant_raw, dict):
            errs.append("plant: must be a mapping")
        else:
            plant, plant_spec = cls._plant(plant_raw, errs)

        cost = raw.get("cost", {}) or {}
        Q = R = None
        if plant is not None:
            Q = _matrix(cost.get("Q", 1.0), plant.m, "cost.Q", errs)
            R = _matrix(cost.get("R", 1.0), plant.p, "cost.R", errs)
            if Q is not None and R is not None:
                try:
                    CostWeights(Q, R)
                except (LqgError, ValueError) as exc:
                    errs.append(f"cost: {exc}")

        agent_raw = dict(raw.get("agent", {}) or {})
        auto_S = agent_raw.get("S") == "auto"
        if auto_S:
            agent_raw["S"] = 1.0
        adm_raw = dict(agent_raw.pop("admissibility", {}) or {})
        errs += [f"agent.{k}: unknown field" for k in sorted(set(agent_raw) - _AGENT_FIELDS)]
        errs += [f"agent.admissibility.{k}: unknown field"
                 for k in sorted(set(adm_raw) - _ADMISSIBLE_FIELDS)]
        agent = None
        try:
            adm = AdmissibilityConfig(**{k: v for k, v in adm_raw.items()
                                         if k in _ADMISSIBLE_FIELDS})
            agent = AgentConfig(admissibility=adm, **{k: v for k, v in agent_raw.items()
                                                      if k in _AGENT_FIELDS})
        except TypeError as exc:
            errs.append(f"agent: {exc}")

        T = raw.get("T", 50000)
        if not isinstance(T, int) or isinstance(T, bool) or T <= 0:
            errs.append("T: must be a positive integer")
            T = None
        seeds = cls._seeds(raw.get("seeds"), errs)
        agents = raw.get("agents", ["lqgopt", "commit", "oracle"])
        if not isinstance(agents, list) or not agents:
            errs.append("agents: must be a non-empty list")
        else:
            errs += [f"agents: unknown agent {a!r}" for a in agents if a not in AGENTS]
            if len(set(agents)) != len(agents):
                errs.append("agents: duplicate entries")

        if agent is not None and plant is not None and T is not None:
            if auto_S:
                H = agent.resolve_H(T, plant.m, agent.n or plant.n)
                agent.S = 2 * float(np.linalg.norm(system_markov_params(plant, H).M))
            try:
                agent.validate(T, agent.n or plant.n, plant.m)
            except ConfigError as exc:
                errs += [f"agent.{e}" for e in exc.errors]
        if errs:
            raise ConfigError(errs)
        if plant is not None and not errs:
            cls._check_plant(plant, Q, R, agent, errs)
        if errs:
            raise ConfigError(errs)
        return cls(name, plant, plant_spec, Q, R, agent, T, sorted(seeds), list(agents))

    @staticmethod
    def _plant(raw, errs):
        sw = raw.get("sigma_w", 1.0)
        sz = raw.get("sigma_z", 1.0)
        spec = dict(raw)
        try:
            if "A" in raw:
                extra = set(raw) - {"A", "B", "C", "sigma_w", "sigma_z"}
                errs.extend(f"plant.{k}: unknown field" for k in sorted(extra))
                plant = LinearSystem(np.array(raw["A"], float), np.array(raw["B"], float),
                                     np.array(raw["C"], float), sw, sz)
            else:
                extra = set(raw) - {"name", "sigma_w", "sigma_z", "seed", "n", "m", "p",
                                    "radius"}
                errs.extend(f"plant.{k}: unknown field" for k in sorted(extra))
                kw = {k: raw[k] for k in ("seed", "n", "m", "p", "radius") if k in raw}
                plant = named_plant(raw.get("name", "canonical"), sw, sz, **kw)
        except ConfigError as exc:
            errs.extend(exc.errors)
            return None, spec
        except (LqgError, ValueError, TypeError, KeyError) as exc:
            errs.append(f"plant: {exc}")
            return None, spec
        spec.update({"A": plant.A.tolist(), "B": plant.B.tolist(), "C": plant.C.tolist(),
                     "sigma_w": plant.sigma_w, "sigma_z": plant.sigma_z})
        return plant, spec

    @staticmethod
    def _seeds(raw, errs):
        if raw is None:
            errs.append("seeds: required")
            return []
        if isinstance(raw, dict):
            try:
                start, count = int(raw.get("start", 0)), int(raw["count"])
            except (KeyError, TypeError, ValueError):
                errs.append("seeds: mapping form needs integer 'count' (and optional 'start')")
                return []
            raw = list(range(start, start + count))
        if not isinstance(raw, list) or not raw:
            errs.append("seeds: must be a non-empty list")
            return []
        if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in raw):
            errs.append("seeds: entries must be non-negative integers")
            return []
        if len(set(raw)) != len(raw):
            errs.append("seeds: duplicate entries")
        return list(raw)

    @staticmethod
    def _check_plant(plant, Q, R, agent, errs):
        chk = structural_checks(plant.A, plant.B, plant.C)
        if chk["rho"] >= 1:
            errs.append(f"plant: unstable, spectral radius {chk['rho']:.4g}")
        if not chk["controllable"]:
            errs.append("plant: (A, B) not controllable")
        if not chk["observable"]:
            errs.append("plant: (A, C) not observable")
        if errs:
            return
        ss = plant.steady_state(Q, R)
        ev = admissible(Model(plant.A, plant.B, plant.C, ss.L), agent.admissibility, Q, R,
                        plant.innovation_cov())
        if not ev.ok:
            errs.extend(f"plant: not admissible: {r}" for r in ev.reasons)

    def resolved(self):
        agent = self.agent.to_dict()
        return {"name": self.name, "plant": self.plant_spec,
                "cost": {"Q": self.Q.tolist(), "R": self.R.tolist()},
                "agent": agent, "T": self.T, "seeds": self.seeds, "agents": self.agents}

    def config_hash(self):
        blob = json.dumps(self.resolved(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


def _excitation(trace, H, T_w):
    """lambda_min(sum phi phi')/N on the warm-up rows and on the adaptive rows."""
    out = {}
    Phi, _ = regressor_matrix(trace.y, trace.u, H)
    # row k of Phi belongs to time k + H
    split = max(T_w - H, 0)
    for label, rows in (("warmup", Phi[:split]), ("adaptive", Phi[split:])):
        if len(rows) < 2:
            continue
        ex = gram_excitation(rows, n_checkpoints=16)
        out[label] = {"lambda_min_over_t": ex["lambda_min_over_t"],
                      "relative_variation": ex["relative_variation"],
                      "persistent": ex["persistent"]}
    return out


def run_cell(args):
    """One (agent, seed) run; returns a JSON-ready record, never raises."""
    scenario, agent_name, seed, out_dir = args
    stem = f"{agent_name}_seed{seed}"
    rec = {"agent": agent_name, "seed": seed, "ok": False}
    try:
        trace, diag = run_agent(agent_name, scenario.plant, scenario.Q, scenario.R,
                                scenario.agent, scenario.T, seed)
    except LqgError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    H = diag.get("H") or scenario.agent.resolve_H(scenario.T, scenario.plant.m,
                                                  scenario.agent.n or scenario.plant.n)
    diag["excitation"] = _excitation(trace, H, scenario.agent.T_w)
    trace.meta["config_hash"] = scenario.config_hash()
    if out_dir is not None:
        tdir = os.path.join(out_dir, "traces")
        trace.to_csv(os.path.join(tdir, stem + ".csv"))
        trace.write_summary(os.path.join(tdir, stem + ".json"), diag["J_star"],
                            T_w=scenario.agent.T_w, agent=agent_name,
                            adaptive_slope=diag.get("adaptive_slope"))
        with open(os.path.join(out_dir, "diagnostics", stem + ".json"), "w") as fh:
            json.dump(diag, fh, indent=2, sort_keys=True, default=_json_default)
    J_star = diag["J_star"]
    cum = np.cumsum(trace.cost - J_star)
    rec.update({"ok": True, "J_star": J_star, "final_regret": float(cum[-1]),
                "adaptive_cum": cum[scenario.agent.T_w:] - (cum[scenario.agent.T_w - 1]
                                                           if scenario.agent.T_w else 0.0),
                "diag": diag})
    return rec


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _quantiles(x):
    # non-finite entries (e.g. the variation of an all-zero excitation series)
    # are dropped and counted
    x = np.asarray(x, float)
    bad = int(np.sum(~np.isfinite(x)))
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return {"median": None, "q25": None, "q75": None, "non_finite": bad}
    q25, med, q75 = np.quantile(x, [0.25, 0.5, 0.75])
    out = {"median": float(med), "q25": float(q25), "q75": float(q75)}
    if bad:
        out["non_finite"] = bad
    return out


def aggregate(scenario, records):
    """Seed-order independent summary of a list of run records."""
    T_w, T = scenario.agent.T_w, scenario.T
    records = sorted(records, key=lambda r: (r["agent"], r["seed"]))
    grid = geometric_checkpoints(T_w, T)
    report = {"name": scenario.name, "T": T, "T_w": T_w, "checkpoints": grid.tolist(),
              "agents": {}, "failures": []}
    for name in scenario.agents:
        recs = [r for r in records if r["agent"] == name]
        ok = [r for r in recs if r["ok"]]
        report["failures"] += [{"agent": name, "seed": r["seed"], "error": r["error"]}
                               for r in recs if not r["ok"]]
        entry = {"runs": len(recs), "completed": len(ok)}
        if ok:
            J_star = ok[0]["J_star"]
            entry["J_star"] = J_star
            # cumulative regret at the absolute checkpoints, from the segment data
            rows = []
            for r in ok:
                seg = r["adaptive_cum"]
                base = r["final_regret"] - (seg[-1] if len(seg) else 0.0)
                rows.append([base + (seg[t - T_w - 1] if t > T_w else 0.0) for t in grid])
            rows = np.array(rows)
            entry["regret_at_checkpoints"] = [_quantiles(rows[:, k]) for k in range(len(grid))]
            entry["final_regret"] = _quantiles([r["final_regret"] for r in ok])
            slopes, stderrs, shifts = [], [], []
            for r in ok:
                seg = r["adaptive_cum"]
                if len(seg) >= 8:
                    f = fit_regret_slope(seg)
                    slopes.append(f.slope)
                    stderrs.append(f.stderr)
                    shifts.append(f.shift)
            if slopes:
                s = np.array(slopes)
                entry["adaptive_slope"] = {**_quantiles(s), "per_seed": slopes,
                                           "stderr_per_seed": stderrs,
                                           "shift_per_seed": shifts,
                                           "ci90": [float(np.quantile(s, 0.05)),
                                                    float(np.quantile(s, 0.95))]}
            entry.update(_epoch_summary(ok))
            entry["excitation"] = _excitation_summary(ok)
            entry["monitors"] = _monitor_summary(ok)
        report["agents"][name] = entry
    return report


def _epoch_summary(records):
    epochs = [e for r in records for e in r["diag"].get("epochs", [])]
    if not epochs:
        return {}
    out = {"epochs": len(epochs),
           "degraded_epochs": sum(bool(e.get("degraded")) for e in epochs)}
    cont = [e["contains_truth"] for e in epochs if "contains_truth" in e]
    if cont:
        out["containment_frequency"] = float(np.mean(cont))
    opt = [e["optimism_ok"] for e in epochs if e.get("contains_truth") and "optimism_ok" in e]
    if opt:
        out["optimism_frequency_given_containment"] = float(np.mean(opt))
    pts = [(e["t_start"], e["M_error"]) for e in epochs if "M_error" in e]
    if len({t for t, _ in pts}) >= 2:
        t, err = np.array(pts, float).T
        lt, le = np.log(t), np.log(err)
        slope, icpt = np.polyfit(lt, le, 1)
        out["estimation_error_fit"] = {"slope": float(slope), "intercept": float(icpt),
                                       "points": len(pts)}
    return out


def _excitation_summary(records):
    out = {}
    for phase in ("warmup", "adaptive"):
        vals = [r["diag"]["excitation"][phase] for r in records
                if phase in r["diag"].get("excitation", {})]
        if vals:
            out[phase] = {
                "lambda_min_over_t": _quantiles([v["lambda_min_over_t"] for v in vals]),
                "relative_variation": _quantiles([v["relative_variation"] for v in vals]),
                "persistent_fraction": float(np.mean([v["persistent"] for v in vals])),
            }
    return out


def _monitor_summary(records):
    mons = [r["diag"]["monitors"] for r in records if "monitors" in r["diag"]]
    if not mons:
        return {}
    return {"max_y": max(m["max_y"] for m in mons),
            "max_xhat": max(m["max_xhat"] for m in mons),
            "violating_runs": sum(m["violations"] > 0 for m in mons)}


def run_scenario(config, out_dir=None, jobs=1):
    """Run every (agent, seed) cell and write traces, diagnostics and reports.

    ``config`` is a path, a mapping or a ScenarioConfig.  Returns the aggregate
    report; failed cells are listed in it and the sweep continues.
    """
    if isinstance(config, ScenarioConfig):
        scenario = config
    elif isinstance(config, dict):
        scenario = ScenarioConfig.from_dict(config)
    else:
        scenario = ScenarioConfig.load(config)
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "diagnostics"), exist_ok=True)
    cells = [(scenario, a, s, out_dir) for a in scenario.agents for s in scenario.seeds]
    if jobs > 1:
        with Pool(jobs) as pool:
            records = pool.map(run_cell, cells)
    else:
        records = [run_cell(c) for c in cells]
    report = aggregate(scenario, records)
    if out_dir is not None:
        manifest = {"config_hash": scenario.config_hash(), "version": __version__,
                    "config": scenario.resolved(),
                    "files": sorted(f"traces/{a}_seed{s}.csv" for a in scenario.agents
                                    for s in scenario.seeds)}
        _write_json(os.path.join(out_dir, "manifest.json"), manifest)
        _write_json(os.path.join(out_dir, "aggregate.json"), report)
    return report


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def estimation_rate(plant, seeds, t_grid, H, sigma_u=1.0, lam=1.0):
    """Log-log slope of ||M_hat_t - M|| against t under exploration inputs.

    Returns (per-seed slopes, errors array of shape (seeds, len(t_grid))).
    """
    from .arx import RegressorDataset, estimate_M
    from .plant import run_closed_loop

    Mt = system_markov_params(plant, H).M
    t_grid = np.asarray(t_grid, int)

    def policy(t, y, rng):
        return sigma_u * rng.standard_normal(plant.p)

    slopes, errs = [], []
    for seed in seeds:
        tr = run_closed_loop(plant, policy, int(t_grid[-1]), seed, np.eye(plant.m),
                             np.eye(plant.p))
        ds = RegressorDataset(plant.m, plant.p, H, lam, store=False)
        fed = 0
        row = []
        for t in t_grid:
            ds.extend(tr.y[fed:t], tr.u[fed:t])
            fed = t
            row.append(float(np.linalg.norm(estimate_M(ds) - Mt, 2)))
        errs.append(row)
        slopes.append(fit_loglog(t_grid, row).slope)
    return np.array(slopes), np.array(errs)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


__all__ = ["NAMED_PLANTS", "ScenarioConfig", "aggregate", "canonical_plant", "estimation_rate",
           "named_plant", "run_cell", "run_scenario"]
