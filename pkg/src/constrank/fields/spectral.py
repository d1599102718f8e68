"""
Fourier multipliers on periodic fields.
Operators act through (2πi)^k·𝒜(k/period); projectors are degree-zero symbols evaluated
at the integer frequencies. The constant mode is handled separately everywhere, and every
non-constant multiplier vanishes on the Nyquist planes.
"""

import itertools
import logging
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
import scipy.fft

from ..core.config import get_settings
from ..core.errors import InvalidParameter, NotAFree, RadiusTooSmall, ShapeMismatch
from ..symbols.calculus import check_exactness, pseudo_inverse_symbol, symbol_of
from ..symbols.operators import DiffOperator
from ..symbols.polynomials import PolySymbol
from .grid import GridSpec, PeriodicField, inverse

logger = logging.getLogger(__name__)


def _apply_multiplier(multiplier: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", multiplier, spectrum)


def _drop_nyquist(multiplier: np.ndarray, grid: GridSpec) -> np.ndarray:
    # a mode on a Nyquist plane is stored once for itself and its conjugate partner,
    # so only constant multipliers stay real there
    out = np.array(multiplier)
    out[grid.nyquist_mask()] = 0.0
    return out


def _check_fiber(op: DiffOperator, f: PeriodicField) -> None:
    if f.fiber_dim != op.dim_from or f.grid.dim_n != op.dim_n:
        raise ShapeMismatch(
            f"{op.name} maps {op.dim_from}-dim fields on ℝ^{op.dim_n}; "
            f"got fiber {f.fiber_dim} on a {f.grid.dim_n}-dim grid"
        )


@lru_cache(maxsize=8)
def symbol_multiplier(op: DiffOperator, grid: GridSpec) -> np.ndarray:
    """(2πi)^k 𝒜(k/period) at every grid frequency, shape (*shape, dim_to, dim_from)"""
    values = symbol_of(op).evaluate(grid.wavevectors())
    multiplier = (2j * np.pi) ** op.order * values
    if op.order:
        multiplier = _drop_nyquist(multiplier, grid)
    multiplier.flags.writeable = False
    return multiplier


@lru_cache(maxsize=8)
def kernel_projector(opA: DiffOperator, grid: GridSpec) -> np.ndarray:
    """Id − 𝒜†𝒜 at integer k; the identity on the constant mode and zero on the Nyquist planes"""
    k = grid.frequencies().astype(float)
    dagger = pseudo_inverse_symbol(opA).evaluate(k, zero_fill=True)
    A = symbol_of(opA).evaluate(k)
    projector = _drop_nyquist(np.eye(opA.dim_from) - dagger @ A, grid)
    projector.flags.writeable = False
    return projector


@lru_cache(maxsize=8)
def range_projector(opB: DiffOperator, grid: GridSpec) -> np.ndarray:
    """ℬℬ† at integer k; zero on the constant mode and on the Nyquist planes"""
    k = grid.frequencies().astype(float)
    dagger = pseudo_inverse_symbol(opB).evaluate(k, zero_fill=True)
    projector = _drop_nyquist(symbol_of(opB).evaluate(k) @ dagger, grid)
    projector.flags.writeable = False
    return projector


def apply_operator(op: DiffOperator, f: PeriodicField) -> PeriodicField:
    """
    Apply a homogeneous operator spectrally.

    Args:
        op: Operator with dim_from equal to the field's fiber dimension
        f: Input field

    Returns:
        𝒜f as a PeriodicField with op.dim_to components
    """
    _check_fiber(op, f)
    spectrum = _apply_multiplier(symbol_multiplier(op, f.grid), f.spectrum)
    return PeriodicField.from_spectrum(f.grid, spectrum)


def project_afree(opA: DiffOperator, f: PeriodicField) -> PeriodicField:
    """Orthogonal projection onto 𝒜-free fields; the mean passes through unchanged"""
    _check_fiber(opA, f)
    spectrum = _apply_multiplier(kernel_projector(opA, f.grid), f.spectrum)
    return PeriodicField.from_spectrum(f.grid, spectrum)


def project_range(opB: DiffOperator, f: PeriodicField) -> PeriodicField:
    """Orthogonal projection onto zero-mean fields of the form ℬu"""
    if f.fiber_dim != opB.dim_to:
        raise ShapeMismatch(f"{opB.name} takes values in dimension {opB.dim_to}, field has {f.fiber_dim}")
    spectrum = _apply_multiplier(range_projector(opB, f.grid), f.spectrum)
    return PeriodicField.from_spectrum(f.grid, spectrum)


def afree_residual(opA: DiffOperator, f: PeriodicField) -> float:
    """‖f − Pf‖₂ / ‖f‖₂ with P the kernel projector of 𝒜; scale-free measure of 𝒜f"""
    norm = f.l2_norm()
    if norm == 0:
        return 0.0
    return (f - project_afree(opA, f)).l2_norm() / norm


def decompose(opA: DiffOperator, opB: DiffOperator,
              f: PeriodicField) -> Tuple[PeriodicField, PeriodicField]:
    """
    Split an 𝒜-free field as f = ℬu + S.

    û(k) = ℬ†(k/period) f̂(k) / (2πi)^order for k ≠ 0 and û(0) = 0, so u is the
    representative annihilated by the adjoint of the potential of ℬ.

    Args:
        opA: Constraint operator
        opB: Potential operator for opA
        f: 𝒜-free field

    Returns:
        (u, S) with S = f − ℬu (the mean of f up to round-off)
    """
    check_exactness(opA, opB)
    _check_fiber(opA, f)
    residual = afree_residual(opA, f)
    tol = get_settings().spectral.afree_tol
    if residual > tol:
        raise NotAFree(f"relative 𝒜-residual {residual:.3e} exceeds {tol:.1e}")

    u = lift_potential(opB, f)
    S = f - apply_operator(opB, u)
    logger.debug(f"Decomposed field: |mean|={np.linalg.norm(f.mean()):.3e}, "
                 f"|S − mean|_∞={np.abs(S.values - f.mean()).max():.3e}")
    return u, S


def lift_potential(opB: DiffOperator, f: PeriodicField) -> PeriodicField:
    """u with û(k) = ℬ†(k/period) f̂(k) / (2πi)^order, û(0) = 0; ℬu is the range projection of f"""
    if f.fiber_dim != opB.dim_to:
        raise ShapeMismatch(f"{opB.name} takes values in dimension {opB.dim_to}, field has {f.fiber_dim}")
    grid = f.grid
    dagger = pseudo_inverse_symbol(opB).evaluate(grid.wavevectors(), zero_fill=True)
    multiplier = _drop_nyquist(dagger / (2j * np.pi) ** opB.order, grid)
    return PeriodicField.from_spectrum(grid, _apply_multiplier(multiplier, f.spectrum))


def riesz_potential(s: float, f: PeriodicField) -> PeriodicField:
    """I_s f = ℱ⁻¹(|2πk/period|^{−s} f̂), zero on the constant mode"""
    grid = f.grid
    if s > 0:
        mean = np.abs(f.mean()).max()
        if mean > 1e-10 * max(1.0, np.abs(f.values).max()):
            raise InvalidParameter(f"I_{s} needs a zero-mean field, mean is {mean:.3e}")
    modulus = 2 * np.pi * np.linalg.norm(grid.wavevectors(), axis=-1)
    zero = modulus == 0
    multiplier = np.where(zero, 0.0, np.where(zero, 1.0, modulus) ** (-s))
    return PeriodicField.from_spectrum(grid, multiplier[..., None] * f.spectrum)


def mollifier_kernel(grid: GridSpec, eps: float) -> np.ndarray:
    """Gaussian of standard deviation ε/3 cut off at |x| = ε, unit mass, centred at 0"""
    offsets = grid.periodic_offset(grid.coordinates(), np.zeros(grid.dim_n))
    r2 = np.sum(offsets ** 2, axis=-1)
    sigma = eps / 3.0
    kernel = np.where(r2 <= eps ** 2, np.exp(-r2 / (2 * sigma ** 2)), 0.0)
    return kernel / kernel.sum()


def mollify(f: PeriodicField, eps: float) -> PeriodicField:
    """Convolve with the truncated Gaussian mollifier ρ_ε"""
    if eps < f.grid.spacing:
        raise RadiusTooSmall(f"mollifier width {eps} is below one grid cell {f.grid.spacing}")
    # unnormalised transform of a unit-mass kernel equals 1 at k = 0
    transform = scipy.fft.fftn(mollifier_kernel(f.grid, eps), axes=f.grid.axes)
    return PeriodicField.from_spectrum(f.grid, transform[..., None] * f.spectrum)


def annihilator_residual(opC: Union[PolySymbol, DiffOperator], w: PeriodicField) -> float:
    """
    Relative size of 𝒞*(ξ)ŵ(ξ) over the nonzero modes.

    The symbol is evaluated at unit directions so the measure does not depend on the order of 𝒞.
    """
    symbol = opC if isinstance(opC, PolySymbol) else symbol_of(opC)
    if symbol.shape[0] != w.fiber_dim:
        raise ShapeMismatch(f"annihilator expects fiber {symbol.shape[0]}, got {w.fiber_dim}")
    k = w.grid.frequencies().astype(float)
    modulus = np.linalg.norm(k, axis=-1, keepdims=True)
    directions = k / np.where(modulus == 0, 1.0, modulus)
    adjoint = np.swapaxes(symbol.evaluate(directions), -1, -2)
    spectrum = np.array(w.spectrum)
    spectrum[(modulus[..., 0] == 0)] = 0.0
    total = np.linalg.norm(spectrum)
    if total == 0:
        return 0.0
    return float(np.linalg.norm(_apply_multiplier(adjoint, spectrum)) / total)


def derivative_tensor(f: PeriodicField, order: int) -> PeriodicField:
    """
    All partial derivatives ∂_{i1}…∂_{ij} f, flattened fiber-major.

    Component c·n^j + (i1…ij in base n) holds ∂_{i1}…∂_{ij} f_c.
    """
    if order < 0:
        raise InvalidParameter(f"derivative order must be non-negative, got {order}")
    if order == 0:
        return f
    grid = f.grid
    factors = np.where(grid.nyquist_mask()[..., None], 0.0, 2j * np.pi * grid.wavevectors())
    blocks = []
    for c in range(f.fiber_dim):
        for index in itertools.product(range(grid.dim_n), repeat=order):
            multiplier = np.prod([factors[..., i] for i in index], axis=0)
            blocks.append(inverse(multiplier * f.spectrum[..., c], grid))
    return PeriodicField(grid, np.stack(blocks, axis=-1))
