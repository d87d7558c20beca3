"""Adaptive LQG control with optimistic model selection (LqgOpt)."""

__version__ = "0.1.0"

from .control import (CostWeights, LinearSystem, SteadyStateSolution, closed_loop_cost,
                      innovations_cost, kalman_gain, optimal_gain, predictor_form,
                      solve_control_dare, solve_filter_dare, steady_state_cost,
                      structural_checks)
from .errors import *  # noqa: F401,F403
from .plant import (LinearFeedback, NoiseStreams, PlantState, RunTrace, init_steady_state,
                    oracle_controller, read_trace_csv, run_closed_loop, step)
from .arx import (MarkovParams, RegressorDataset, arx_confidence, build_G_cl, build_G_ol,
                  build_regressor, choose_H, confidence_beta, estimate_M, gram_excitation,
                  markov_params, system_markov_params)
from .sysid import (HankelPair, ParamConfidence, SystemEstimate, align_similarity, extract,
                    hankelize, param_confidence, sysid)
from .ofu import (AdmissibilityConfig, ConfidenceSet, Model, OptimisticModel, admissible,
                  contains, find_optimistic)
from .agent import (AgentConfig, LqgOptPolicy, baseline_agents, filter_step, run_agent,
                    run_lqgopt, warmup)
from .regret import fit_regret_slope, regret
from .experiment import ScenarioConfig, canonical_plant, named_plant, run_scenario
