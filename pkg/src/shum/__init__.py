"""Semi-discrete stochastic fourth-order parabolic control toolkit.

Staggered finite-difference calculus, Carleman weights, an exact binary
noise tree, forward/backward solvers, penalized HUM controls and numerical
observability estimates.
"""
from .calculus import (
    IDENTITIES, BiharmonicOperator, IdentityReport, apply_Ah, apply_Ah_pow, apply_Dh, apply_Dh_pow,
    assemble_biharmonic, check_identities, identity_suite,
)
from .config import ConfigError, ExperimentConfig, Expression
from .hum import (
    CertificateError, ConvergenceError, HUMReport, conjugate_gradient, control_cost,
    control_experiment, exponential_eps, extract_controls, free_terminal, gramian_apply, minimize_Jeps,
)
from .mesh import (
    GridFunction, Mesh, NodeSet, boundary_signatures, build_mesh, dual_sets, integrate,
    integrate_boundary, outward_normal, trace,
)
from .noise_tree import (
    AdaptedField, NoiseTree, build_tree, cond_expectation, expect_inner, expectation, martingale_rep,
)
from .observability import ObservabilityReport, estimate_Cobs, observability_quotient
from .solvers import (
    CoefficientField, ControlPair, SchemeConfig, control_pairing, duality_gap, solve_backward,
    solve_forward,
)
from .weights import (
    CarlemanProbe, CarlemanTable, PsiFunction, RegimeError, WeightOverflowError, WeightParams,
    asymptotic_h_list, build_psi, carleman_functionals, eval_theta, eval_weights, probe_from_backward,
    regime_check, remainder_order, stencil_remainder_order,
)

__version__ = "0.1.0"
