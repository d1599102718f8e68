"""
Homogeneous constant-coefficient differential operators.
An operator is a map multi-index α -> rational matrix A_α with |α| = order,
acting between fiber spaces of dimension dim_from and dim_to.
"""

import itertools
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigError, DegenerateOperator, InvalidParameter, ShapeMismatch

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
RationalMatrix = Tuple[Tuple[Fraction, ...], ...]


def multi_indices(dim_n: int, order: int) -> List[MultiIndex]:
    """All α ∈ ℕⁿ with |α| = order, in lexicographically descending order"""
    out = [alpha for alpha in itertools.product(range(order + 1), repeat=dim_n) if sum(alpha) == order]
    return sorted(out, reverse=True)


def unit_index(dim_n: int, *axes: int) -> MultiIndex:
    alpha = [0] * dim_n
    for axis in axes:
        alpha[axis] += 1
    return tuple(alpha)


def _parse_rational(value: Any) -> Fraction:
    try:
        return Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10**12)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"Cannot parse rational {value!r}: {e}")


@dataclass(frozen=True)
class DiffOperator:
    """Σ_{|α|=order} A_α ∂^α from ℝ^dim_from-valued to ℝ^dim_to-valued fields on ℝ^dim_n"""
    dim_n: int
    dim_from: int
    dim_to: int
    order: int
    coeffs: Tuple[Tuple[MultiIndex, RationalMatrix], ...]
    name: str = "custom"

    def __post_init__(self):
        if not 1 <= self.dim_n <= 3:
            raise InvalidParameter(f"dim_n must lie in 1..3, got {self.dim_n}")
        if self.order < 1:
            raise InvalidParameter(f"order must be at least 1, got {self.order}")
        if self.dim_from < 1 or self.dim_to < 1:
            raise InvalidParameter("fiber dimensions must be positive")

        nonzero = False
        for alpha, matrix in self.coeffs:
            if len(alpha) != self.dim_n or sum(alpha) != self.order or min(alpha) < 0:
                raise InvalidParameter(f"multi-index {alpha} does not have order {self.order}")
            if len(matrix) != self.dim_to or any(len(row) != self.dim_from for row in matrix):
                raise ShapeMismatch(
                    f"coefficient for {alpha} is not {self.dim_to}x{self.dim_from}"
                )
            nonzero = nonzero or any(v != 0 for row in matrix for v in row)
        if not nonzero:
            raise DegenerateOperator(f"operator {self.name} has only zero coefficients")

    @classmethod
    def from_matrices(cls, dim_n: int, order: int, matrices: Mapping[MultiIndex, Any],
                      name: str = "custom") -> "DiffOperator":
        """Build from {α: matrix-like}; zero matrices are dropped"""
        items = []
        shape = None
        for alpha, matrix in matrices.items():
            rows = tuple(tuple(_parse_rational(v) for v in row) for row in matrix)
            shape = (len(rows), len(rows[0]))
            if any(v != 0 for row in rows for v in row):
                items.append((tuple(int(a) for a in alpha), rows))
        if shape is None:
            raise DegenerateOperator(f"operator {name} has no coefficients")
        return cls(dim_n, shape[1], shape[0], order, tuple(sorted(items, reverse=True)), name)

    @property
    def coeff_map(self) -> Dict[MultiIndex, RationalMatrix]:
        return dict(self.coeffs)

    def matrix(self, alpha: MultiIndex) -> np.ndarray:
        """Float coefficient matrix A_α (zero when α is absent)"""
        rows = self.coeff_map.get(tuple(alpha))
        if rows is None:
            return np.zeros((self.dim_to, self.dim_from))
        return np.array([[float(v) for v in row] for row in rows])

    def to_document(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "dim_n": self.dim_n,
            "dim_from": self.dim_from,
            "dim_to": self.dim_to,
            "order": self.order,
            "coeffs": [
                {"alpha": list(alpha), "matrix": [[str(v) for v in row] for row in matrix]}
                for alpha, matrix in self.coeffs
            ],
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "DiffOperator":
        """Parse the operator JSON format; rationals may be "p/q" strings"""
        try:
            dim_n = int(doc["dim_n"])
            order = int(doc["order"])
            matrices = {tuple(entry["alpha"]): entry["matrix"] for entry in doc["coeffs"]}
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Malformed operator document: missing {e}")
        op = cls.from_matrices(dim_n, order, matrices, name=doc.get("name", "custom"))
        for key in ("dim_from", "dim_to"):
            if key in doc and int(doc[key]) != getattr(op, key):
                raise ShapeMismatch(f"{key}={doc[key]} disagrees with coefficient shapes")
        return op


# Built-in operators

def gradient(dim_n: int) -> DiffOperator:
    """D on scalar fields"""
    return DiffOperator.from_matrices(dim_n, 1, {
        unit_index(dim_n, i): [[1 if r == i else 0] for r in range(dim_n)] for i in range(dim_n)
    }, name="grad")


def divergence(dim_n: int) -> DiffOperator:
    return DiffOperator.from_matrices(dim_n, 1, {
        unit_index(dim_n, i): [[1 if c == i else 0 for c in range(dim_n)]] for i in range(dim_n)
    }, name="div")


def matrix_divergence(dim_n: int) -> DiffOperator:
    """Row-wise divergence of n×n matrix fields (row-major flattening)"""
    matrices = {}
    for j in range(dim_n):
        rows = [[0] * (dim_n * dim_n) for _ in range(dim_n)]
        for i in range(dim_n):
            rows[i][i * dim_n + j] = 1
        matrices[unit_index(dim_n, j)] = rows
    return DiffOperator.from_matrices(dim_n, 1, matrices, name="div_matrix")


def curl(dim_n: int = 3) -> DiffOperator:
    """Curl in ℝ³ or the scalar rotation ∂₁u₂ − ∂₂u₁ in ℝ²"""
    if dim_n == 2:
        return DiffOperator.from_matrices(2, 1, {
            (1, 0): [[0, 1]],
            (0, 1): [[-1, 0]],
        }, name="curl")
    if dim_n != 3:
        raise InvalidParameter("curl is defined for n = 2 or 3")
    # (curl u)_i = ε_ijk ∂_j u_k
    matrices = {}
    for j in range(3):
        rows = [[0] * 3 for _ in range(3)]
        for i in range(3):
            for k in range(3):
                rows[i][k] = _levi_civita(i, j, k)
        matrices[unit_index(3, j)] = rows
    return DiffOperator.from_matrices(3, 1, matrices, name="curl")


def perp_gradient(dim_n: int = 2) -> DiffOperator:
    """u ↦ (∂₂u, −∂₁u), the potential of the planar divergence"""
    if dim_n != 2:
        raise InvalidParameter("perp_grad is defined for n = 2")
    return DiffOperator.from_matrices(2, 1, {
        (1, 0): [[0], [-1]],
        (0, 1): [[1], [0]],
    }, name="perp_grad")


def symmetric_gradient(dim_n: int) -> DiffOperator:
    """(Eu)_ab = ½(∂_a u_b + ∂_b u_a), valued in n×n matrices (row-major)"""
    half = Fraction(1, 2)
    matrices = {}
    for j in range(dim_n):
        rows = [[Fraction(0)] * dim_n for _ in range(dim_n * dim_n)]
        for a in range(dim_n):
            for b in range(dim_n):
                for c in range(dim_n):
                    value = half * ((j == a) * (b == c) + (j == b) * (a == c))
                    rows[a * dim_n + b][c] += value
        matrices[unit_index(dim_n, j)] = rows
    return DiffOperator.from_matrices(dim_n, 1, matrices, name="sym_grad")


def laplacian(dim_n: int) -> DiffOperator:
    return DiffOperator.from_matrices(dim_n, 2, {
        unit_index(dim_n, i, i): [[1]] for i in range(dim_n)
    }, name="laplacian")


def diagonal_example(dim_n: int = 2) -> DiffOperator:
    """diag(ξ₁, ξ₂): rank drops on the coordinate axes"""
    if dim_n != 2:
        raise InvalidParameter("diag is defined for n = 2")
    return DiffOperator.from_matrices(2, 1, {
        (1, 0): [[1, 0], [0, 0]],
        (0, 1): [[0, 0], [0, 1]],
    }, name="diag")


def _levi_civita(i: int, j: int, k: int) -> int:
    return (i - j) * (j - k) * (k - i) // 2


BUILTIN_OPERATORS = {
    "grad": gradient,
    "div": divergence,
    "div_matrix": matrix_divergence,
    "curl": curl,
    "perp_grad": perp_gradient,
    "sym_grad": symmetric_gradient,
    "laplacian": laplacian,
    "diag": diagonal_example,
}


def named_operator(name: str, dim_n: int = 3) -> DiffOperator:
    try:
        factory = BUILTIN_OPERATORS[name]
    except KeyError:
        raise ConfigError(f"Unknown operator {name!r}; built-ins are {sorted(BUILTIN_OPERATORS)}")
    return factory(dim_n)


def load_operator(source: Union[str, Path, Mapping[str, Any]], dim_n: Optional[int] = None) -> DiffOperator:
    """
    Resolve an operator reference.

    Args:
        source: Built-in name, {"name": ..., "dim_n": ...}, a coefficient document, or a JSON file path
        dim_n: Spatial dimension for built-in names

    Returns:
        The DiffOperator
    """
    if isinstance(source, Mapping):
        if "coeffs" in source:
            return DiffOperator.from_document(source)
        if "name" in source:
            return named_operator(source["name"], int(source.get("dim_n", dim_n or 3)))
        raise ConfigError(f"Operator reference needs 'name' or 'coeffs': {dict(source)}")

    text = str(source)
    if text in BUILTIN_OPERATORS:
        return named_operator(text, dim_n or 3)

    path = Path(text)
    if not path.exists():
        raise ConfigError(f"Operator {text!r} is neither a built-in nor an existing file")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Cannot parse operator file {path}: {e}")
    return DiffOperator.from_document(data)


def dump_operator(op: DiffOperator, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump(op.to_document(), f, indent=2)


def operator_matrix_stack(op: DiffOperator) -> Tuple[List[MultiIndex], np.ndarray]:
    """Multi-indices and stacked float coefficient matrices (len, dim_to, dim_from)"""
    alphas = [alpha for alpha, _ in op.coeffs]
    return alphas, np.stack([op.matrix(alpha) for alpha in alphas])


def compose_check_shapes(first: DiffOperator, second: DiffOperator) -> None:
    """Raise unless second ∘ first is defined"""
    if first.dim_to != second.dim_from or first.dim_n != second.dim_n:
        raise ShapeMismatch(
            f"{second.name} cannot follow {first.name}: "
            f"{first.dim_to}-dim output vs {second.dim_from}-dim input"
        )


def as_sequence(value: Union[float, Sequence[float]], size: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (size,):
        raise ShapeMismatch(f"expected a vector of length {size}, got shape {arr.shape}")
    return arr
