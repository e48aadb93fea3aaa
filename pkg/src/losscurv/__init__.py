"""Riemannian curvature of loss landscapes viewed as graphs of functions."""

__version__ = "0.1.0"

from .errors import (DegenerateTrace, DivergedTraining, EvaluationFailure, ExpansionFitWarning,
                     GeodesicFailure, IntegrationUnstable, InvalidInput, LossCurvError,
                     NotPositiveSemidefinite)
from .fields import (ScalarField, finite_diff_gradient, finite_diff_hessian, make_flat_field,
                     make_linear_field, make_paraboloid_field, make_quadratic_field,
                     make_random_smooth_field, make_saddle_field, saddle_analytics)
from .geometry import (christoffel_at, christoffel_contraction, exp_map, geodesic_ball_volume,
                       metric_at, norm_identity, ricci_at, riemann_at, reparam_hessian,
                       scalar_curvature, scalar_curvature_at, scalar_curvature_at_min,
                       volume_deficit_coefficient, QuadratureSpec)
from .linalg import eig_sym, matrix_norms, sqrt_psd
from .estimators import hutchinson_trace, overparam_ratio, sc_min_estimate, trace_h2_estimate
from .experiments import minibatch_analysis, ou_escape, perturbation_sweep, saddle_grid
