"""Numerical verification of the third-order equation
nabla^3 lam + 2 d lam (x) g + ... = 0, its trace, metric cones over
pseudo-Riemannian charts, and the null-geodesic reduction of E_p equations."""

from .chart_fields import (ANALYTIC, CENTRAL_FD, Box, ChartMetric, DerivativeConfig, TensorField,
                           constant_field, eval_metric, metric_inverse, partial_derivatives)
from .cone import (ConeMetric, HatTensorParts, assemble_hat_tensor, build_parallel_from_solution,
                   cone_metric, hat_parallel_residual, split_hat_tensor, verify_cone_christoffels)
from .connection import (ChristoffelAt, christoffel, covariant_derivative, covariant_power, laplacian)
from .equations import (GallotCoefficients, ResidualReport, gallot_residual, lemma1_residuals,
                        reconstruct_lambda, tanno_residual, tanno_table, trace_residual)
from .geodesics import (GeodesicState, GeodesicTrace, PolyFit, fit_polynomial, integrate_geodesic,
                        null_direction, pullback_derivative_residual)
from .models import CATALOG, get_model, list_catalog, make_flat_torus, make_harmonic, make_round_sphere
from .suites import RunReport, SuiteConfig, run_suite

__version__ = "0.1.0"
