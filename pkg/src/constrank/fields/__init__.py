from .grid import GridSpec, PeriodicField, random_band_limited
from .io import dump_field, export_slice_csv, load_field
from .masks import BallMask, ball_average, ball_integral, field_average
from .polynomial import PolynomialField, monomials, operator_matrix, operator_matrix_exact
from .spectral import (
    afree_residual,
    annihilator_residual,
    apply_operator,
    decompose,
    derivative_tensor,
    kernel_projector,
    lift_potential,
    mollify,
    project_afree,
    project_range,
    range_projector,
    riesz_potential,
    symbol_multiplier,
)
