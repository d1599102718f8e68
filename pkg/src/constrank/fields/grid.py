"""
Periodic grids and fields on the n-torus.
Values are stored fiber-fastest; spectra are Fourier coefficients normalised so the
zero mode equals the mean.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft

from ..core.config import get_settings
from ..core.errors import InvalidParameter, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid [0, period)^n with points_per_axis points per axis"""
    dim_n: int
    points_per_axis: int
    period: float = 1.0

    def __post_init__(self):
        if not 1 <= self.dim_n <= 3:
            raise InvalidParameter(f"dim_n must lie in 1..3, got {self.dim_n}")
        N = self.points_per_axis
        floor = get_settings().spectral.min_points_per_axis
        if N < floor or N & (N - 1):
            raise InvalidParameter(f"points_per_axis must be a power of two ≥ {floor}, got {N}")
        if self.period <= 0:
            raise InvalidParameter(f"period must be positive, got {self.period}")
        budget = get_settings().grid_budget()
        if self.n_points > budget:
            raise InvalidParameter(f"grid of {self.n_points} points exceeds the memory budget {budget}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim_n

    @property
    def axes(self) -> Tuple[int, ...]:
        return tuple(range(self.dim_n))

    @property
    def n_points(self) -> int:
        return self.points_per_axis ** self.dim_n

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim_n

    @property
    def volume(self) -> float:
        return self.period ** self.dim_n

    def coordinates(self) -> np.ndarray:
        """Grid points, shape (*shape, n)"""
        return _coordinates(self)

    def frequencies(self) -> np.ndarray:
        """Integer frequencies k in FFT order, shape (*shape, n)"""
        return _frequencies(self)

    def wavevectors(self) -> np.ndarray:
        """Physical frequencies k / period"""
        return self.frequencies() / self.period

    def nyquist_mask(self) -> np.ndarray:
        """True where some component of k sits on the Nyquist frequency"""
        k = self.frequencies()
        return np.any(k == -self.points_per_axis // 2, axis=-1)

    def periodic_offset(self, x: np.ndarray, center: Sequence[float]) -> np.ndarray:
        """Minimal-image displacement x − center on the torus"""
        d = x - np.asarray(center, dtype=float)
        return d - self.period * np.round(d / self.period)


@lru_cache(maxsize=16)
def _coordinates(grid: GridSpec) -> np.ndarray:
    ticks = np.arange(grid.points_per_axis) * grid.spacing
    mesh = np.meshgrid(*([ticks] * grid.dim_n), indexing="ij")
    out = np.stack(mesh, axis=-1)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=16)
def _frequencies(grid: GridSpec) -> np.ndarray:
    ticks = np.rint(scipy.fft.fftfreq(grid.points_per_axis, d=1.0 / grid.points_per_axis)).astype(int)
    mesh = np.meshgrid(*([ticks] * grid.dim_n), indexing="ij")
    out = np.stack(mesh, axis=-1)
    out.flags.writeable = False
    return out


def forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return scipy.fft.fftn(values, axes=grid.axes, norm="forward")


def inverse(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    # spectra built here are conjugate-symmetric; drop the round-off imaginary part
    return scipy.fft.ifftn(spectrum, axes=grid.axes, norm="forward").real


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real fiber-valued samples on a periodic grid, values shaped (*grid.shape, fiber_dim)"""
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == self.grid.dim_n:
            values = values[..., None]
        if values.shape[:-1] != self.grid.shape:
            raise ShapeMismatch(f"values of shape {values.shape} do not sit on grid {self.grid.shape}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spectrum: np.ndarray) -> "PeriodicField":
        return cls(grid, inverse(spectrum, grid))

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "PeriodicField":
        """Sample fn(x) with x of shape (*shape, n)"""
        return cls(grid, fn(grid.coordinates()))

    @classmethod
    def constant(cls, grid: GridSpec, vector: Union[float, Sequence[float]]) -> "PeriodicField":
        vector = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(grid, np.broadcast_to(vector, grid.shape + vector.shape).copy())

    @classmethod
    def zeros(cls, grid: GridSpec, fiber_dim: int) -> "PeriodicField":
        return cls(grid, np.zeros(grid.shape + (fiber_dim,)))

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[-1]

    @cached_property
    def spectrum(self) -> np.ndarray:
        coeffs = forward(self.values, self.grid)
        coeffs.flags.writeable = False
        return coeffs

    def with_values(self, values: np.ndarray) -> "PeriodicField":
        return PeriodicField(self.grid, values)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=self.grid.axes)

    def zero_mean(self) -> "PeriodicField":
        return self.with_values(self.values - self.mean())

    def pointwise_norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def sup_norm(self) -> float:
        return float(self.pointwise_norm().max())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) * self.grid.cell_volume))

    def inner(self, other: "PeriodicField") -> float:
        self._check_compatible(other)
        return float(np.sum(self.values * other.values) * self.grid.cell_volume)

    def integral(self, density: Optional[np.ndarray] = None) -> float:
        """∫ density over the torus; defaults to the pointwise norm"""
        density = self.pointwise_norm() if density is None else density
        return float(np.sum(density) * self.grid.cell_volume)

    def component(self, index: int) -> "PeriodicField":
        return self.with_values(self.values[..., index:index + 1])

    def _check_compatible(self, other: "PeriodicField") -> None:
        if other.grid != self.grid or other.fiber_dim != self.fiber_dim:
            raise ShapeMismatch(
                f"fields differ: {self.grid}/{self.fiber_dim} vs {other.grid}/{other.fiber_dim}"
            )

    def __add__(self, other: Union["PeriodicField", float, np.ndarray]) -> "PeriodicField":
        if isinstance(other, PeriodicField):
            self._check_compatible(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other: Union["PeriodicField", float, np.ndarray]) -> "PeriodicField":
        if isinstance(other, PeriodicField):
            self._check_compatible(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, scalar: float) -> "PeriodicField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "PeriodicField":
        return self.with_values(-self.values)

    def __repr__(self) -> str:
        return f"PeriodicField(grid={self.grid}, fiber_dim={self.fiber_dim})"


def random_band_limited(grid: GridSpec, fiber_dim: int, rng: np.random.Generator,
                        max_freq: int = 4, zero_mean: bool = True,
                        amplitude: float = 1.0) -> PeriodicField:
    """
    Smooth random field with Fourier support in |k|_∞ ≤ max_freq.

    Args:
        grid: Target grid
        fiber_dim: Number of components
        rng: Seeded generator
        max_freq: Largest integer frequency per axis
        zero_mean: Drop the constant mode
        amplitude: Sup-norm scale of the result

    Returns:
        PeriodicField with values normalised to the given amplitude
    """
    if max_freq < 1 or max_freq >= grid.points_per_axis // 2:
        raise InvalidParameter(f"max_freq must lie in 1..{grid.points_per_axis // 2 - 1}, got {max_freq}")
    k = grid.frequencies()
    support = np.all(np.abs(k) <= max_freq, axis=-1)
    if zero_mean:
        support &= np.any(k != 0, axis=-1)
    noise = rng.standard_normal(grid.shape + (fiber_dim,)) + 1j * rng.standard_normal(grid.shape + (fiber_dim,))
    spectrum = np.where(support[..., None], noise, 0.0)
    values = inverse(spectrum, grid)
    scale = np.abs(values).max()
    if scale == 0:
        return PeriodicField(grid, values)
    return PeriodicField(grid, amplitude * values / scale)
