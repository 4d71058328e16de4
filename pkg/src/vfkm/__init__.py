"""Variance-reduced fast Krasnoselskii-Mann methods for finite-sum
co-coercive equations and inclusions."""
from .operators import (CocoercivityCertificate, FiniteSumProblem, MinimaxSpec,
                        NotCocoerciveError, OracleCounter, SingularSystemError,
                        certify_cocoercivity, eval_component, eval_full,
                        generate_minimax, load_problem, reference_solution, save_problem)
from .estimators import FullBatch, LooplessSvrg, Saga, constants, make_estimator
from .solver import (Constant, DivergenceError, SolverTrace, Sublinear, lyapunov,
                     plan_step_size, rate_bound, run, step)
from .inclusion import (AffineCoHypo, InclusionProblem, SimplexNormalCone, ZeroOperator,
                        bfs_cocoercivity, bfs_eval, fbs_residual, make_inclusion,
                        resolvent, run_inclusion)
from .baselines import run_det_fkm, run_og, run_plain_vr_forward

__version__ = "0.1.0"
