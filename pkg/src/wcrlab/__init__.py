"""Wasserstein score functions, information matrices and Wasserstein-Cramer-Rao efficiency."""

from .families import (
    GAUSSIAN,
    LAPLACE,
    LOGISTIC,
    UNIFORM,
    ParametricFamily1D,
    from_descriptor,
    make_location,
    make_location_scale,
    make_scale,
    sample,
)
from .numerics import McConfig
from .wscore import closed_form_score_ls, solve_score_1d
from .winfo import info_matrix, w2_distance_1d
from .efficiency import check_affine_in_score, check_e_geodesic, efficiency_gap, wcr_bound

__version__ = "0.1.0"
