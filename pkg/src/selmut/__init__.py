"""Large-population limit of a lattice selection-mutation model.

Simulates the rescaled discrete model on the log scale, solves the limiting
obstacle Hamilton-Jacobi equation, and checks the estimates linking them.
"""

from .analysis import (ConvergenceRecord, SweepConfig, convergence_sweep, run_checks,
                       sup_error)
from .dynamics import IntegratorConfig, Trajectory, hopf_cole, mass_norm, rhs_n, rhs_u, simulate
from .hj import (HJGridConfig, HamiltonianEval, hamiltonian_source, inf_convolution_time,
                 lipschitz_envelope, solve_hj)
from .kernel import (KernelSpec, MomentResult, abs_exp_moment, alpha_bound, cosine_modulated_kernel,
                     discrete_exp_sum, eval_density, exp_moment, exponential_kernel, make_kernel,
                     skewed_kernel)
from .rates import InitialDataSpec, RateSpec, make_initial, make_rates, validate_initial
from .report import CheckReport
from .scaling import (Explicit, LatticeField, PowerLaw, ScalingParams, TraitWindow, interpolate,
                      make_scaling, sample_field)

__version__ = "0.1.0"
