"""Degenerate complex Monge-Ampere equations on the flat torus.

Solvers for ``(omega + dd^c phi)^n = e^{t phi} f omega^n`` together with the
discrete capacity, domination and decay tools used to check bounds on their
solutions.
"""

__version__ = "0.1.0"

from .field import (GridSpec, HessianField, PeriodicField, ReferenceForm, complex_hessian, integrate,
                    ma_measure, norm, translate)
from .density import (AlgebraicDensitySpec, Density, KltSpec, Singularity, algebraic_density,
                      integrability_quadrature, klt_check, lp_estimate, normalize)
from .capacity import (DecayProfile, DecayReport, HConditionReport, cap_omega, comparison_check,
                       decay_iterate, h_condition, relative_extremal, sublevel_profile, verify_h_alpha_b)
from .solver import SolveReport, SolverConfig, normalize_sup, solve, solve_exponential, solve_fixed_rhs
from .experiments import (holder_estimate, linf_bound_audit, stability_experiment, uniqueness_probe)

__all__ = [
    "GridSpec", "HessianField", "PeriodicField", "ReferenceForm", "complex_hessian", "integrate",
    "ma_measure", "norm", "translate",
    "AlgebraicDensitySpec", "Density", "KltSpec", "Singularity", "algebraic_density",
    "integrability_quadrature", "klt_check", "lp_estimate", "normalize",
    "DecayProfile", "DecayReport", "HConditionReport", "cap_omega", "comparison_check", "decay_iterate",
    "h_condition", "relative_extremal", "sublevel_profile", "verify_h_alpha_b",
    "SolveReport", "SolverConfig", "normalize_sup", "solve", "solve_exponential", "solve_fixed_rhs",
    "holder_estimate", "linf_bound_audit", "stability_experiment", "uniqueness_probe",
]
