from .detsolver import DetProblem, brute_force_det_npv, solve_det_npv
from .evpi import ev_pi, run_dyn, solve_rigid
from .mdp import exact_mdp_enpv

__all__ = ["DetProblem", "brute_force_det_npv", "ev_pi", "exact_mdp_enpv", "run_dyn", "solve_det_npv", "solve_rigid"]
