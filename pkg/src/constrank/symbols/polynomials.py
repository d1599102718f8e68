"""
Exact polynomial symbols.
Matrices of homogeneous polynomials in ξ with rational coefficients, stored as sparse
sympy ring elements (monomial -> coefficient) so characteristic coefficients stay exact.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import sympy
from sympy.polys.domains import QQ
from sympy.polys.rings import PolyElement, PolyRing, ring

from ..core.errors import InvalidParameter, ShapeMismatch


@lru_cache(maxsize=None)
def symbol_ring(dim_n: int) -> PolyRing:
    """Polynomial ring ℚ[ξ₁..ξₙ] shared by all symbols of dimension n"""
    if dim_n < 1:
        raise InvalidParameter(f"dim_n must be positive, got {dim_n}")
    names = ",".join(f"xi{i + 1}" for i in range(dim_n))
    return ring(names, QQ)[0]


def to_fraction(coeff) -> Fraction:
    """Convert a ground-domain coefficient to a Fraction"""
    return Fraction(int(coeff.numerator), int(coeff.denominator))


def to_ground(value) -> object:
    """Convert int, Fraction or 'p/q' string to a ℚ element"""
    value = Fraction(value)
    return QQ(value.numerator, value.denominator)


def monomial_poly(dim_n: int, exponents: Sequence[int], coeff=1) -> PolyElement:
    """c·ξ^α as a ring element"""
    R = symbol_ring(dim_n)
    if Fraction(coeff) == 0:
        return R.zero
    return R.from_dict({tuple(int(e) for e in exponents): to_ground(coeff)})


def squared_norm_poly(dim_n: int) -> PolyElement:
    """|ξ|² = Σ ξᵢ²"""
    R = symbol_ring(dim_n)
    return sum((g * g for g in R.gens), R.zero)


def is_homogeneous(p: PolyElement, degree: int) -> bool:
    return all(sum(m) == degree for m in p.monoms()) if p else True


def eval_exact(p: PolyElement, point: Sequence[Fraction]) -> Fraction:
    """Evaluate at a rational point"""
    total = Fraction(0)
    for monom, coeff in p.items():
        term = to_fraction(coeff)
        for x, e in zip(point, monom):
            if e:
                term *= x ** e
        total += term
    return total


def _compile(p: PolyElement) -> Tuple[np.ndarray, np.ndarray]:
    if not p:
        return np.zeros((0, p.ring.ngens), dtype=int), np.zeros(0)
    exps = np.array([m for m in p.keys()], dtype=int)
    coeffs = np.array([float(to_fraction(c)) for c in p.values()])
    return exps, coeffs


def eval_float(compiled: Tuple[np.ndarray, np.ndarray], xi: np.ndarray,
               powers: List[List[np.ndarray]]) -> np.ndarray:
    """Evaluate a compiled polynomial on an array of points using cached power tables"""
    exps, coeffs = compiled
    out = np.zeros(xi.shape[:-1])
    for e, c in zip(exps, coeffs):
        term = np.full(xi.shape[:-1], c)
        for axis, k in enumerate(e):
            if k:
                term = term * powers[axis][k]
        out += term
    return out


def power_tables(xi: np.ndarray, max_degree: int) -> List[List[np.ndarray]]:
    tables = []
    for axis in range(xi.shape[-1]):
        column = [np.ones(xi.shape[:-1])]
        for _ in range(max_degree):
            column.append(column[-1] * xi[..., axis])
        tables.append(column)
    return tables


@dataclass(frozen=True)
class PolySymbol:
    """Matrix of homogeneous polynomials with exact rational coefficients"""
    dim_n: int
    entries: Tuple[Tuple[PolyElement, ...], ...]
    degree: int

    def __post_init__(self):
        widths = {len(row) for row in self.entries}
        if len(widths) > 1:
            raise ShapeMismatch("PolySymbol rows have different lengths")
        for row in self.entries:
            for p in row:
                if not is_homogeneous(p, self.degree):
                    raise InvalidParameter(f"entry {p} is not homogeneous of degree {self.degree}")

    @classmethod
    def from_rows(cls, dim_n: int, rows: Iterable[Iterable[PolyElement]], degree: int) -> "PolySymbol":
        return cls(dim_n, tuple(tuple(row) for row in rows), degree)

    @classmethod
    def zeros(cls, dim_n: int, shape: Tuple[int, int], degree: int = 0) -> "PolySymbol":
        R = symbol_ring(dim_n)
        return cls(dim_n, tuple(tuple(R.zero for _ in range(shape[1])) for _ in range(shape[0])), degree)

    @classmethod
    def identity(cls, dim_n: int, size: int, scale: PolyElement | None = None, degree: int = 0) -> "PolySymbol":
        R = symbol_ring(dim_n)
        diag = R.one if scale is None else scale
        return cls(dim_n, tuple(
            tuple(diag if i == j else R.zero for j in range(size)) for i in range(size)
        ), degree)

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.entries), len(self.entries[0]) if self.entries else 0)

    @property
    def is_zero(self) -> bool:
        return all(not p for row in self.entries for p in row)

    @property
    def T(self) -> "PolySymbol":
        rows, cols = self.shape
        return PolySymbol(self.dim_n, tuple(
            tuple(self.entries[i][j] for i in range(rows)) for j in range(cols)
        ), self.degree)

    def trace(self) -> PolyElement:
        R = symbol_ring(self.dim_n)
        return sum((self.entries[i][i] for i in range(min(self.shape))), R.zero)

    def __matmul__(self, other: "PolySymbol") -> "PolySymbol":
        if self.shape[1] != other.shape[0]:
            raise ShapeMismatch(f"cannot multiply {self.shape} by {other.shape}")
        R = symbol_ring(self.dim_n)
        rows = []
        for i in range(self.shape[0]):
            row = []
            for j in range(other.shape[1]):
                acc = R.zero
                for k in range(self.shape[1]):
                    a, b = self.entries[i][k], other.entries[k][j]
                    if a and b:
                        acc += a * b
                row.append(acc)
            rows.append(tuple(row))
        return PolySymbol(self.dim_n, tuple(rows), self.degree + other.degree)

    def _combine(self, other: "PolySymbol", sign: int) -> "PolySymbol":
        if self.shape != other.shape:
            raise ShapeMismatch(f"cannot add {self.shape} and {other.shape}")
        if self.degree != other.degree and not (self.is_zero or other.is_zero):
            raise InvalidParameter("cannot add symbols of different homogeneity")
        degree = other.degree if self.is_zero else self.degree
        return PolySymbol(self.dim_n, tuple(
            tuple(a + sign * b for a, b in zip(ra, rb)) for ra, rb in zip(self.entries, other.entries)
        ), degree)

    def __add__(self, other: "PolySymbol") -> "PolySymbol":
        return self._combine(other, 1)

    def __sub__(self, other: "PolySymbol") -> "PolySymbol":
        return self._combine(other, -1)

    def scale(self, factor: PolyElement, factor_degree: int) -> "PolySymbol":
        """Multiply every entry by a homogeneous scalar polynomial"""
        return PolySymbol(self.dim_n, tuple(
            tuple(p * factor for p in row) for row in self.entries
        ), self.degree + factor_degree)

    def __neg__(self) -> "PolySymbol":
        return PolySymbol(self.dim_n, tuple(tuple(-p for p in row) for row in self.entries), self.degree)

    def evaluate_exact(self, point: Sequence) -> sympy.Matrix:
        """Evaluate at a rational point, returning an exact sympy Matrix"""
        point = [Fraction(x) for x in point]
        return sympy.Matrix([
            [sympy.Rational(v.numerator, v.denominator) for v in (eval_exact(p, point) for p in row)]
            for row in self.entries
        ])

    @cached_property
    def _compiled(self):
        return [[_compile(p) for p in row] for row in self.entries]

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Evaluate on points of shape (..., n); returns (..., rows, cols)"""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dim_n:
            raise ShapeMismatch(f"points have dimension {xi.shape[-1]}, symbol expects {self.dim_n}")
        rows, cols = self.shape
        out = np.zeros(xi.shape[:-1] + (rows, cols))
        powers = power_tables(xi, max(self.degree, 0))
        for i in range(rows):
            for j in range(cols):
                if self.entries[i][j]:
                    out[..., i, j] = eval_float(self._compiled[i][j], xi, powers)
        return out

    def to_strings(self) -> List[List[str]]:
        return [[str(p.as_expr()) for p in row] for row in self.entries]


@dataclass(frozen=True)
class RationalSymbol:
    """numerator(ξ) / denominator(ξ) with a scalar homogeneous denominator"""
    numerator: PolySymbol
    denominator: PolyElement
    degree: int

    def __post_init__(self):
        den_degree = max((sum(m) for m in self.denominator.monoms()), default=0)
        if not self.denominator:
            raise InvalidParameter("denominator vanishes identically")
        if self.numerator.degree - den_degree != self.degree and not self.numerator.is_zero:
            raise InvalidParameter(
                f"numerator degree {self.numerator.degree} minus denominator degree "
                f"{den_degree} differs from {self.degree}"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.numerator.shape

    @property
    def dim_n(self) -> int:
        return self.numerator.dim_n

    @cached_property
    def _den_compiled(self):
        return _compile(self.denominator)

    def evaluate_denominator(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        den_degree = max((sum(m) for m in self.denominator.monoms()), default=0)
        return eval_float(self._den_compiled, xi, power_tables(xi, den_degree))

    def evaluate(self, xi: np.ndarray, zero_fill: bool = False) -> np.ndarray:
        """
        Evaluate on points (..., n).

        Args:
            xi: Evaluation points
            zero_fill: Map points where the denominator vanishes (ξ = 0) to the zero matrix

        Returns:
            Array of shape (..., rows, cols)
        """
        num = self.numerator.evaluate(xi)
        den = self.evaluate_denominator(xi)
        if zero_fill:
            vanishing = den == 0
            den = np.where(vanishing, 1.0, den)
            out = num / den[..., None, None]
            out[vanishing] = 0.0
            return out
        return num / den[..., None, None]

    def evaluate_exact(self, point: Sequence) -> sympy.Matrix:
        point = [Fraction(x) for x in point]
        den = eval_exact(self.denominator, point)
        if den == 0:
            raise InvalidParameter(f"denominator vanishes at {point}")
        return self.numerator.evaluate_exact(point) / sympy.Rational(den.numerator, den.denominator)
