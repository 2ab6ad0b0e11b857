"""Monotone finite-difference solution and verification toolkit for fully
nonlinear uniformly elliptic Dirichlet problems F(D^2 u, x) = f(x)."""

from .mesh import (
    Ball,
    Box,
    Mesh,
    MeshFunction,
    build_mesh,
    distance_to_boundary,
    domain_from_config,
    eroded_points,
)
from .fields import (
    MatrixField,
    ScalarField,
    affine_field,
    constant_field,
    cubic_axis,
    field_from_config,
    gaussian_bump,
    identity_coeff,
    iso_affine_coeff,
    matrix_field_from_config,
    quadratic_field,
    sin_product,
)
from .operators import (
    Isaacs,
    LinearVC,
    Nonlinearity,
    Pucci,
    check_ellipticity,
    field_inf,
    field_sup,
    make_isaacs,
    make_linear,
    perturb_inf,
    perturb_sup,
    pucci,
    spectral_norm,
)
from .scheme import (
    DecompositionError,
    DiscreteOperator,
    Stencil,
    assemble,
    consistency_check,
    decompose_matrix,
    delta_y2,
    make_stencil,
    monotonicity_check,
)
from .solver import (
    SolveReport,
    discrete_comparison_test,
    holder_norm,
    manufactured_problem,
    solve_dirichlet,
)
from .regularize import (
    ConvolvedFunction,
    closeness_check,
    inf_convolve,
    magic_point_gap,
    semiconvexity_check,
    sup_convolve,
)
from .viscosity import (
    Paraboloid,
    TouchCertificate,
    concave_envelope,
    delta_solution_check,
    doubling_gap,
    sliding_paraboloid,
    touch,
)
from .harness import (
    ConfigError,
    ProblemConfig,
    RateReport,
    cli_main,
    load_config,
    parse_config,
    run_barrier,
    run_delta,
    run_freeze,
    run_perturb,
    run_rates,
)

__version__ = "0.1.0"
