"""Minimum time functions and non-Lipschitz sets for normal control systems."""

from .catalog import catalog, closed_form_double_integrator, names
from .planar import PlanarSystem, load_planar, planar_mintime, singular_arcs
from .pmp import bang_bang_from_costate, endpoint, hamiltonian, integrate_trajectory, verify_compham
from .probe import classify, eval_grid, holder_fit, quotient_scan
from .reach import membership, mintime_bisection, mintime_shooting, support
from .singular import box_dimension, sample_singular, singular_point, stratify_slice, verify_singular
from .system import LinearSystem, load_system, make_system

__version__ = "0.1.0"

__all__ = [
    "LinearSystem",
    "PlanarSystem",
    "bang_bang_from_costate",
    "box_dimension",
    "catalog",
    "classify",
    "closed_form_double_integrator",
    "endpoint",
    "eval_grid",
    "hamiltonian",
    "holder_fit",
    "integrate_trajectory",
    "load_planar",
    "load_system",
    "make_system",
    "membership",
    "mintime_bisection",
    "mintime_shooting",
    "names",
    "planar_mintime",
    "quotient_scan",
    "sample_singular",
    "singular_arcs",
    "singular_point",
    "stratify_slice",
    "support",
    "verify_compham",
    "verify_singular",
]
