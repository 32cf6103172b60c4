"""Bound lattice for weakly coupled stochastic dynamic programs.

Computes and cross-validates five quantities for budget-linked
collections of Markov decision processes: the exact value, the
Lagrangian price bound, the separable linear-programming bound, the
scenario-exact information-relaxation bound, and the decoupled
per-scenario relaxation that scales to many subproblems. Finite-horizon
variants and two benchmark suites (restless bandits, constrained
linear-quadratic control) sit on top.
"""

__version__ = "0.1.0"

from .errors import ConfigError, GuardError, NumericalError
from .model import (BoundEstimate, InitialDistribution, JointSolution,
                    JointSpace, Scenario, Subproblem, WeaklyCoupledModel,
                    build_joint_space, deterministic_transition,
                    enumerate_joint_states, feasible_joint_actions,
                    joint_value_iteration, load_model, model_fingerprint,
                    model_from_dict, model_to_dict, project_uniforms,
                    random_weakly_coupled, sample_scenario, save_model,
                    scenario_seed, simulate_policy, state_index, state_tuple,
                    validate_model)
from .lp import LinearProgram, LpSolution, solve_lp
from .penalty import (JointTablePenalty, SeparablePenalty, SubproblemPairs,
                      build_subproblem_pairs, joint_value)
from .lagrangian import (AlpBound, GreedyPolicy, LagrangianBound,
                         SubgradientConfig, TightnessCertificate, alp_bound,
                         greedy_policy, lagrangian_bound,
                         lagrangian_tightness_certificate, optimal_lambda_lp,
                         optimal_lambda_subgradient, priced_rewards,
                         solve_subproblem)
from .inforelax import (GreedyConsistencyReport, InnerResult,
                        JointInnerEvaluator, SupersolutionReport,
                        default_tau_cap, draw_scenario, estimate_info_bound,
                        greedy_consistency_certificate, inner_exact,
                        replay_actions, sample_tau, supersolution_check)
from .practical import (GapCertificate, InnerLpResult, RelaxedEvaluator,
                        RelaxedResult, UniformGammaReport,
                        estimate_practical_bound, estimate_truncated_bound,
                        gap_certificate, inner_lp_oracle, minimize_mu,
                        relaxed_inner_eval, truncation_chain,
                        uniform_gamma_check)
from .finite_horizon import (FhGapCertificate, FhJointPenalty,
                             FhLagrangianBound, FhModel, FhRelaxedEvaluator,
                             FhSeparablePenalty, FhSolution, FhSubproblem,
                             fh_gap_certificate, fh_info_bound,
                             fh_lagrangian, fh_lambda_search,
                             fh_model_fingerprint, fh_practical_bound,
                             fh_value, load_fh_model, random_fh_model,
                             save_fh_model, validate_fh_model)
from .bandit import (bandit_index_policy, bandit_row, generate_bandit,
                     run_bandit_table, write_bandit_csv)
from .lqc import (LqcModel, estimate_lqc_info_bound, generate_lqc,
                  lqc_bound_value, lqc_inner_ascent, lqc_lambda_search,
                  lqc_relaxed_inner, lqc_row, projection_policy_value,
                  riccati, run_lqc_table, write_lqc_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
