"""
Vector-valued polynomial fields.
Coefficients live in the monomial basis x^α; flattened coefficient vectors are
monomial-major and fiber-fastest.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial, prod
from typing import Dict, List, Sequence, Tuple

import numpy as np
import sympy

from ..core.errors import InvalidParameter, ShapeMismatch
from ..symbols.operators import DiffOperator, MultiIndex


@lru_cache(maxsize=64)
def monomials(dim_n: int, degree: int, exact_degree: bool = False) -> Tuple[MultiIndex, ...]:
    """Exponents with |α| ≤ degree (or = degree), graded then lexicographic"""
    if degree < 0:
        return ()
    out = [a for a in itertools.product(range(degree + 1), repeat=dim_n) if sum(a) <= degree]
    if exact_degree:
        out = [a for a in out if sum(a) == degree]
    return tuple(sorted(out, key=lambda a: (sum(a), tuple(-e for e in a))))


def _falling(alpha: MultiIndex, beta: MultiIndex) -> int:
    """α!/(α−β)!, zero unless α ≥ β"""
    if any(b > a for a, b in zip(alpha, beta)):
        return 0
    return prod(factorial(a) // factorial(a - b) for a, b in zip(alpha, beta))


@dataclass(frozen=True, eq=False)
class PolynomialField:
    """p(x) = Σ_α c_α x^α with c_α ∈ ℝ^fiber_dim"""
    dim_n: int
    exponents: Tuple[MultiIndex, ...]
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape[0] != len(self.exponents):
            raise ShapeMismatch(f"{len(self.exponents)} exponents but {coeffs.shape[0]} coefficient rows")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, dim_n: int, degree: int, fiber_dim: int) -> "PolynomialField":
        exps = monomials(dim_n, degree)
        return cls(dim_n, exps, np.zeros((len(exps), fiber_dim)))

    @classmethod
    def from_vector(cls, dim_n: int, degree: int, fiber_dim: int, vector: np.ndarray) -> "PolynomialField":
        exps = monomials(dim_n, degree)
        return cls(dim_n, exps, np.asarray(vector, dtype=float).reshape(len(exps), fiber_dim))

    @property
    def fiber_dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        active = [sum(a) for a, c in zip(self.exponents, self.coeffs) if np.any(c != 0)]
        return max(active, default=0)

    def as_dict(self) -> Dict[MultiIndex, np.ndarray]:
        return {a: c for a, c in zip(self.exponents, self.coeffs)}

    def to_vector(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Values at points x of shape (..., n); returns (..., fiber_dim)"""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim_n:
            raise ShapeMismatch(f"points have dimension {x.shape[-1]}, polynomial expects {self.dim_n}")
        out = np.zeros(x.shape[:-1] + (self.fiber_dim,))
        for alpha, c in zip(self.exponents, self.coeffs):
            if not np.any(c):
                continue
            term = np.ones(x.shape[:-1])
            for axis, e in enumerate(alpha):
                if e:
                    term = term * x[..., axis] ** e
            out += term[..., None] * c
        return out

    def partial(self, beta: MultiIndex) -> "PolynomialField":
        """∂^β p"""
        out: Dict[MultiIndex, np.ndarray] = {}
        for alpha, c in zip(self.exponents, self.coeffs):
            factor = _falling(alpha, beta)
            if factor:
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                out[gamma] = out.get(gamma, 0.0) + factor * c
        if not out:
            return PolynomialField(self.dim_n, ((0,) * self.dim_n,), np.zeros((1, self.fiber_dim)))
        exps = tuple(sorted(out, key=lambda a: (sum(a), tuple(-e for e in a))))
        return PolynomialField(self.dim_n, exps, np.array([out[a] for a in exps]))

    def derivative_tensor(self, x: np.ndarray, order: int) -> np.ndarray:
        """All ∂_{i1}…∂_{ij} p at x, flattened fiber-major to match spectral derivative tensors"""
        blocks = {}
        for index in itertools.product(range(self.dim_n), repeat=order):
            beta = tuple(index.count(i) for i in range(self.dim_n))
            if beta not in blocks:
                blocks[beta] = self.partial(beta).evaluate(x)
        columns = []
        for c in range(self.fiber_dim):
            for index in itertools.product(range(self.dim_n), repeat=order):
                beta = tuple(index.count(i) for i in range(self.dim_n))
                columns.append(blocks[beta][..., c])
        return np.stack(columns, axis=-1)

    def apply_operator(self, op: DiffOperator) -> "PolynomialField":
        """Σ_α A_α ∂^α p"""
        if op.dim_from != self.fiber_dim or op.dim_n != self.dim_n:
            raise ShapeMismatch(f"{op.name} cannot act on a {self.fiber_dim}-vector polynomial")
        out: Dict[MultiIndex, np.ndarray] = {}
        for alpha, _ in op.coeffs:
            d = self.partial(alpha)
            A = op.matrix(alpha)
            for gamma, c in zip(d.exponents, d.coeffs):
                out[gamma] = out.get(gamma, np.zeros(op.dim_to)) + A @ c
        exps = tuple(sorted(out, key=lambda a: (sum(a), tuple(-e for e in a))))
        return PolynomialField(self.dim_n, exps, np.array([out[a] for a in exps]))

    def __add__(self, other: "PolynomialField") -> "PolynomialField":
        merged = self.as_dict()
        for a, c in other.as_dict().items():
            merged[a] = merged.get(a, 0.0) + c
        exps = tuple(sorted(merged, key=lambda a: (sum(a), tuple(-e for e in a))))
        return PolynomialField(self.dim_n, exps, np.array([merged[a] for a in exps]))

    def __mul__(self, scalar: float) -> "PolynomialField":
        return PolynomialField(self.dim_n, self.exponents, self.coeffs * scalar)

    __rmul__ = __mul__

    def __sub__(self, other: "PolynomialField") -> "PolynomialField":
        return self + (-1.0) * other


def operator_matrix_exact(op: DiffOperator, degree: int) -> sympy.Matrix:
    """
    Matrix of p ↦ 𝒜p from polynomials of degree ≤ degree into degree ≤ degree − order.

    Rows index (output monomial, output component); columns (input monomial, input component).
    """
    if degree < op.order:
        raise InvalidParameter(f"degree {degree} is below the operator order {op.order}")
    inputs = monomials(op.dim_n, degree)
    outputs = monomials(op.dim_n, degree - op.order)
    in_index = {a: i for i, a in enumerate(inputs)}
    M = sympy.zeros(len(outputs) * op.dim_to, len(inputs) * op.dim_from)
    for g, gamma in enumerate(outputs):
        for beta, matrix in op.coeffs:
            alpha = tuple(x + y for x, y in zip(gamma, beta))
            factor = _falling(alpha, beta)
            col0 = in_index[alpha] * op.dim_from
            for i in range(op.dim_to):
                for j in range(op.dim_from):
                    value = matrix[i][j] * factor
                    if value:
                        M[g * op.dim_to + i, col0 + j] += sympy.Rational(value.numerator, value.denominator)
    return M


@lru_cache(maxsize=32)
def operator_matrix(op: DiffOperator, degree: int) -> np.ndarray:
    M = np.array(operator_matrix_exact(op, degree).tolist(), dtype=float)
    M.flags.writeable = False
    return M


def polynomial_basis(dim_n: int, degree: int, fiber_dim: int, vectors: Sequence) -> List[PolynomialField]:
    """Turn coefficient vectors (e.g. a nullspace basis) into polynomial fields"""
    return [
        PolynomialField.from_vector(dim_n, degree, fiber_dim, np.array([float(v) for v in vec]))
        for vec in vectors
    ]
