"""Most probable transition pathways and tube probabilities for degenerate Levy-driven systems."""
from .levy import (AlphaStableMeasure, JumpTrain, k_alpha, path_rng, sample_jumps,
                   small_jump_mean, tail_mass, truncated_small_mean)
from .model import (ConstraintViolation, DegenerateModel, GridTooCoarse, LangevinModel, Path,
                    action, action_gradient, double_well_langevin, om_function,
                    quadratic_langevin, read_path_csv, variational_residual, write_path_csv)
from .pathways import (BoundaryProblem, SolverConfig, optimize_boundary_velocities,
                       quadratic_analytic_mptp, quadratic_global_mptp, solve_el4_bvp,
                       solve_hp_bvp)
from .shooting import IntegrationFailure, NoConvergence
from .simulate import (SamplePath, TubeEstimate, estimate_tube_probability, om_ratio_check,
                       simulate_bridge_ensemble, simulate_ensemble, simulate_sde)

__version__ = "0.1.0"
