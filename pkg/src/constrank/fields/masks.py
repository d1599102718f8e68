"""
Ball quadrature on periodic grids.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gamma

from ..core.config import get_settings
from ..core.errors import InvalidParameter, RadiusTooSmall
from .grid import GridSpec, PeriodicField

logger = logging.getLogger(__name__)

Pointwise = Callable[[np.ndarray], np.ndarray]


def ball_volume(dim_n: int, radius: float) -> float:
    return float(np.pi ** (dim_n / 2) / gamma(dim_n / 2 + 1) * radius ** dim_n)


@dataclass(frozen=True, eq=False)
class BallMask:
    """Quadrature weights for ∫_{B_R(x₀)} with cell-fraction antialiasing on the boundary shell"""
    grid: GridSpec
    center: tuple
    radius: float
    min_cells: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != self.grid.dim_n:
            raise InvalidParameter(f"center {self.center} is not a point of ℝ^{self.grid.dim_n}")
        floor = self.min_cells if self.min_cells is not None else get_settings().spectral.min_ball_cells
        if self.radius < floor * self.grid.spacing:
            raise RadiusTooSmall(
                f"radius {self.radius} is below {floor} grid cells ({floor * self.grid.spacing})"
            )
        if 2 * self.radius >= self.grid.period:
            raise InvalidParameter(f"ball of radius {self.radius} wraps around the torus")

    @cached_property
    def distance(self) -> np.ndarray:
        offsets = self.grid.periodic_offset(self.grid.coordinates(), self.center)
        return np.linalg.norm(offsets, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        h = self.grid.spacing
        fraction = np.clip((self.radius - self.distance) / h + 0.5, 0.0, 1.0)
        return fraction * self.grid.cell_volume

    @property
    def volume(self) -> float:
        """Σ weights, the discrete |B_R|"""
        return float(self.weights.sum())

    @property
    def exact_volume(self) -> float:
        return ball_volume(self.grid.dim_n, self.radius)

    def offsets(self) -> np.ndarray:
        """x − x₀ (minimal image) at every grid point"""
        return self.grid.periodic_offset(self.grid.coordinates(), self.center)

    def shrink(self, factor: float, min_cells: Optional[float] = None) -> "BallMask":
        return BallMask(self.grid, self.center, self.radius * factor, min_cells=min_cells)


def _values(f: Union[PeriodicField, np.ndarray]) -> np.ndarray:
    return f.values if isinstance(f, PeriodicField) else np.asarray(f)


def ball_integral(f: Union[PeriodicField, np.ndarray], mask: BallMask,
                  phi: Optional[Pointwise] = None) -> float:
    """
    Σ weights·φ(f(x)).

    Args:
        f: Field or raw values shaped (*grid.shape, fiber)
        mask: Ball quadrature
        phi: Pointwise scalar map on fiber vectors; defaults to the Euclidean norm

    Returns:
        The quadrature value
    """
    values = _values(f)
    density = np.linalg.norm(values, axis=-1) if phi is None else phi(values)
    return float(np.sum(mask.weights * density))


def ball_average(f: Union[PeriodicField, np.ndarray], mask: BallMask,
                 phi: Optional[Pointwise] = None) -> float:
    """⨏_{B_R} φ(f)"""
    return ball_integral(f, mask, phi) / mask.volume


def field_average(f: Union[PeriodicField, np.ndarray], mask: BallMask) -> np.ndarray:
    """(f)_{x₀,R}, the vector mean over the ball"""
    values = _values(f)
    return np.tensordot(mask.weights, values, axes=mask.grid.dim_n) / mask.volume


def quadrature_error(mask: BallMask) -> float:
    """|Σ weights − |B_R|| / |B_R|"""
    exact = mask.exact_volume
    return abs(mask.volume - exact) / exact
