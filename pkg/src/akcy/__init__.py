"""Almost-Kahler tensor calculus and a Calabi-Yau volume-form solver on T^4."""

from .errors import (AkcyError, ConfigError, Degenerate, DimensionMismatch,
                     InconsistentRHS, LinearSolveFailure, LostPositivity,
                     NewtonDivergence, NonPositiveDensity, NonZeroMean,
                     NotAlmostKahler, NotCompatible, NotTaming, PathStalled,
                     ScenarioInvalid)
from .fields import (ACStructure, Metric, OneForm, ScalarField, TensorField,
                     TwoForm, standard_j, standard_omega)
from .grid import Grid4, deriv, grad_all, random_bandlimited, solve_flat_poisson_array
from .calculus import (Projectors, hodge_star2, integrate, integrate_density,
                       lp_norm, proj_p, proj_q, wedge22)
from .structures import (AKTriple, CompatReport, check_compatibility,
                         compatible_j_from_metric, metric_from_pair, nijenhuis,
                         nijenhuis_norms, standard_triple)
from .connection import (christoffel, covariant_deriv_02, covariant_deriv_11,
                         harmonicity_trace, laplacian_metric_form, lemma32_check,
                         nijenhuis_ak_form, riemann, riemann_norm)
from .hodge import (Geometry, HarmonicBasis, dplus_apply, dplus_solve,
                    harmonic_selfdual_basis, kernel_singular_values,
                    random_compatible_gprime)
from .potentials import (Decomposition, class_coefficients, decompose,
                         oneform_completion, potential)
from .solver import (Anchor, PathResult, Problem, SolverConfig, SolverState,
                     c_of_t, continuity_path, make_anchor, newton_solve_at_t,
                     normalize_f, pairing_matrix, phi_map, uniqueness_test)
from .diagnostics import DiagnosticsRecord, diagnostics
from .scenarios import RunConfig, build_scenario, load_config
from .io import dump_field, load_field

__version__ = "0.1.0"
