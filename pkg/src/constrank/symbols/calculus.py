"""
Symbol Calculus
Rank analysis, Moore-Penrose symbols via Decell's formula, potential construction
and wave-cone sampling for homogeneous constant-coefficient operators.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.stats import norm, qmc
from sympy.polys.domains import QQ

from ..core.config import get_settings
from ..core.errors import (
    DegenerateOperator,
    InvalidParameter,
    NotAPotential,
    NotConstantRank,
    RankMismatch,
)
from .operators import DiffOperator, compose_check_shapes
from .polynomials import (
    PolySymbol,
    RationalSymbol,
    eval_exact,
    monomial_poly,
    squared_norm_poly,
    symbol_ring,
    to_fraction,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankReport:
    """Outcome of the constant-rank check"""
    is_constant_rank: bool
    rank: int
    samples: Tuple[Tuple[Tuple[float, ...], int], ...]
    witness: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> dict:
        return {
            "is_constant_rank": self.is_constant_rank,
            "rank": self.rank,
            "n_samples": len(self.samples),
            "witness": list(self.witness) if self.witness is not None else None,
        }


@dataclass(frozen=True)
class WaveConeSample:
    """Kernel bases of 𝒜(ξ) at sampled directions"""
    directions: np.ndarray
    bases: Tuple[np.ndarray, ...]
    span_rank: int
    spans_space: bool

    @property
    def vectors(self) -> np.ndarray:
        """All returned cone vectors stacked as rows"""
        width = self.bases[0].shape[0] if self.bases else 0
        stacked = [b.T for b in self.bases if b.size]
        return np.vstack(stacked) if stacked else np.zeros((0, width))


@dataclass(frozen=True)
class PotentialResult:
    """Polynomial potential C(ξ) of an operator and its transcription"""
    symbol: PolySymbol
    operator: Optional[DiffOperator]
    rank: int
    homogeneity_raise: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def is_zero(self) -> bool:
        return self.symbol.is_zero


def symbol_of(op: DiffOperator) -> PolySymbol:
    """𝒜(ξ) = Σ_α A_α ξ^α"""
    R = symbol_ring(op.dim_n)
    entries = [[R.zero for _ in range(op.dim_from)] for _ in range(op.dim_to)]
    for alpha, matrix in op.coeffs:
        for i, row in enumerate(matrix):
            for j, value in enumerate(row):
                if value != 0:
                    entries[i][j] += monomial_poly(op.dim_n, alpha, value)
    return PolySymbol.from_rows(op.dim_n, entries, op.order)


def symbol_adjoint(op: DiffOperator) -> DiffOperator:
    """Formal adjoint Σ (−1)^{|α|} A_αᵀ ∂^α"""
    sign = -1 if op.order % 2 else 1
    matrices = {
        alpha: [[sign * matrix[i][j] for i in range(op.dim_to)] for j in range(op.dim_from)]
        for alpha, matrix in op.coeffs
    }
    return DiffOperator.from_matrices(op.dim_n, op.order, matrices, name=f"{op.name}*")


def operator_from_symbol(symbol: PolySymbol, name: str = "custom") -> DiffOperator:
    """Transcribe ξ^α ↦ ∂^α"""
    matrices = {}
    rows, cols = symbol.shape
    for i in range(rows):
        for j in range(cols):
            for monom, coeff in symbol.entries[i][j].items():
                matrix = matrices.setdefault(monom, [[Fraction(0)] * cols for _ in range(rows)])
                matrix[i][j] += to_fraction(coeff)
    return DiffOperator.from_matrices(symbol.dim_n, symbol.degree, matrices, name=name)


# Sampling

def low_discrepancy_directions(dim_n: int, count: int) -> np.ndarray:
    """Deterministic unit directions from an unscrambled Halton sequence mapped through the normal quantile"""
    if dim_n == 1:
        return np.array([[1.0], [-1.0]])
    sampler = qmc.Halton(d=dim_n, scramble=False)
    sampler.fast_forward(1)
    points = norm.ppf(sampler.random(count))
    lengths = np.linalg.norm(points, axis=1)
    points = points[lengths > 1e-12]
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def lattice_directions(dim_n: int) -> List[Tuple[int, ...]]:
    """Coordinate axes and all ±1/0 diagonals, as integer (hence rational) points"""
    return [v for v in itertools.product((-1, 0, 1), repeat=dim_n) if any(v)]


def sample_directions(dim_n: int, n_random: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    settings = get_settings().symbols
    rng = rng if rng is not None else np.random.default_rng(0)
    lattice = np.array(lattice_directions(dim_n), dtype=float)
    lattice /= np.linalg.norm(lattice, axis=1, keepdims=True)
    random = rng.standard_normal((n_random, dim_n))
    random /= np.linalg.norm(random, axis=1, keepdims=True)
    return np.vstack([
        lattice,
        low_discrepancy_directions(dim_n, settings.low_discrepancy_per_dim * dim_n),
        random,
    ])


def exact_rank(symbol: PolySymbol, point: Sequence) -> int:
    """Rank over ℚ at a rational point by Gaussian elimination"""
    return symbol.evaluate_exact(point).rank()


def numerical_rank(matrix: np.ndarray, cutoff: float) -> Tuple[int, bool]:
    """Rank with relative singular-value cutoff, plus whether the decision is ambiguous"""
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, False
    relative = s / s[0]
    band = get_settings().symbols.ambiguous_band
    ambiguous = bool(np.any((relative < band) & (relative > cutoff * 1e-3)))
    return int(np.sum(relative > cutoff)), ambiguous


def rank_at(symbol: PolySymbol, xi: np.ndarray, cutoff: float) -> int:
    rank, ambiguous = numerical_rank(symbol.evaluate(xi), cutoff)
    if ambiguous:
        point = [Fraction(float(x)).limit_denominator(10**6) for x in xi]
        certified = exact_rank(symbol, point)
        logger.debug(f"Ambiguous float rank {rank} at {xi}; exact rank {certified}")
        return certified
    return rank


def check_constant_rank(op: DiffOperator, n_samples: int = 50,
                        rng: Optional[np.random.Generator] = None) -> RankReport:
    """
    Decide whether rank 𝒜(ξ) is constant on the unit sphere.

    Args:
        op: Operator to test
        n_samples: Number of random unit directions (at least 50)
        rng: Random generator for the random part of the sample set

    Returns:
        RankReport with the generic rank and a witness direction when the rank drops
    """
    if n_samples < 50:
        raise InvalidParameter(f"n_samples must be at least 50, got {n_samples}")
    symbol = symbol_of(op)
    if symbol.is_zero:
        raise DegenerateOperator(f"symbol of {op.name} vanishes identically")

    cutoff = get_settings().symbols.rank_cutoff
    directions = sample_directions(op.dim_n, n_samples, rng)
    samples = []
    for xi in directions:
        samples.append((tuple(float(x) for x in xi), rank_at(symbol, xi, cutoff)))

    # integer lattice points are rational already; certify them exactly
    for i, v in enumerate(lattice_directions(op.dim_n)):
        certified = exact_rank(symbol, v)
        if certified != samples[i][1]:
            logger.debug(f"Exact rank {certified} overrides float rank {samples[i][1]} at {v}")
            samples[i] = (samples[i][0], certified)

    generic = max(rank for _, rank in samples)
    witness = next((xi for xi, rank in samples if rank != generic), None)
    report = RankReport(
        is_constant_rank=witness is None,
        rank=generic,
        samples=tuple(samples),
        witness=witness,
    )
    logger.info(
        f"Rank check for {op.name}: constant={report.is_constant_rank}, rank={generic}, "
        f"samples={len(samples)}"
    )
    return report


# Moore-Penrose symbols

def characteristic_coefficients(M: PolySymbol, count: int) -> Tuple[List, List[PolySymbol]]:
    """
    Faddeev-LeVerrier recursion for det(λ − M) = λ^m + c₁λ^{m−1} + … + c_m.

    Returns the first `count` coefficients and the matrices
    N_k = M^{k−1} + c₁M^{k−2} + … + c_{k−1}Id for k = 1..count.
    """
    size = M.shape[0]
    N = PolySymbol.identity(M.dim_n, size)
    coeffs, Ns = [], []
    for k in range(1, count + 1):
        Ns.append(N)
        MN = M @ N
        c_k = -MN.trace() * QQ(1, k)
        coeffs.append(c_k)
        N = MN + PolySymbol.identity(M.dim_n, size, scale=c_k, degree=MN.degree)
    return coeffs, Ns


def moore_penrose(op: DiffOperator, rank: int) -> RationalSymbol:
    """
    ℬ†(ξ) = −c_r(ξ)⁻¹ ℬ*(ξ)[(ℬℬ*)^{r−1} + c₁(ℬℬ*)^{r−2} + … + c_{r−1}Id](ξ).

    Args:
        op: Constant-rank operator ℬ
        rank: Its rank r

    Returns:
        RationalSymbol homogeneous of degree −order
    """
    if rank < 1:
        raise InvalidParameter(f"rank must be positive, got {rank}")
    B = symbol_of(op)
    M = B @ B.T
    size = M.shape[0]
    if rank > size:
        raise RankMismatch(f"rank {rank} exceeds symbol size {size}")

    coeffs, Ns = characteristic_coefficients(M, min(rank + 1, size))
    c_r = coeffs[rank - 1]
    if not c_r:
        raise RankMismatch(f"c_{rank} vanishes identically for {op.name}")
    if rank < size and coeffs[rank]:
        raise RankMismatch(f"c_{rank + 1} does not vanish for {op.name}; rank exceeds {rank}")

    numerator = -(B.T @ Ns[rank - 1])
    return RationalSymbol(numerator, c_r, -op.order)


@lru_cache(maxsize=64)
def pseudo_inverse_symbol(op: DiffOperator) -> RationalSymbol:
    """ℬ† for a constant-rank operator, with the rank established by sampling"""
    report = check_constant_rank(op, get_settings().symbols.default_samples)
    if not report.is_constant_rank:
        raise NotConstantRank(f"{op.name} changes rank at ξ={report.witness}")
    return moore_penrose(op, report.rank)


def verify_moore_penrose(op: DiffOperator, dagger: RationalSymbol) -> bool:
    """ℬℬ†ℬ = ℬ and (ℬℬ†)* = ℬℬ† as polynomial identities after clearing the denominator"""
    B = symbol_of(op)
    den = dagger.denominator
    den_degree = dagger.numerator.degree - dagger.degree
    BN = B @ dagger.numerator
    reproduces = (BN @ B - B.scale(den, den_degree)).is_zero
    symmetric = (BN - BN.T).is_zero
    return reproduces and symmetric


# Potentials

def raise_homogeneity(symbol: PolySymbol, target_degree: int) -> Tuple[PolySymbol, int]:
    """Multiply by |ξ|^{2m} with the smallest m ≥ 0 such that the degree exceeds target_degree"""
    m = 0
    while symbol.degree + 2 * m <= target_degree:
        m += 1
    if m == 0:
        return symbol, 0
    factor = squared_norm_poly(symbol.dim_n) ** m
    return symbol.scale(factor, 2 * m), m


def build_potential(op: DiffOperator, rank: Optional[int] = None) -> PotentialResult:
    """
    C(ξ) := c_r(ξ)(Id − ℬ†(ξ)ℬ(ξ)), a polynomial symbol with im C(ξ) = ker ℬ(ξ).

    Args:
        op: Constant-rank operator ℬ
        rank: Its rank; established by sampling when omitted

    Returns:
        PotentialResult; the operator is None when ℬ is elliptic (C = 0)
    """
    if rank is None:
        report = check_constant_rank(op, get_settings().symbols.default_samples)
        if not report.is_constant_rank:
            raise NotConstantRank(f"{op.name} changes rank at ξ={report.witness}")
        rank = report.rank

    dagger = moore_penrose(op, rank)
    B = symbol_of(op)
    c_r = dagger.denominator
    c_degree = dagger.numerator.degree - dagger.degree
    C = PolySymbol.identity(op.dim_n, op.dim_from, scale=c_r, degree=c_degree) - dagger.numerator @ B

    if C.is_zero:
        logger.info(f"{op.name} is elliptic; potential symbol vanishes")
        return PotentialResult(C, None, rank, notes=["elliptic: C = 0"])

    C, m = raise_homogeneity(C, op.order)
    notes = [f"degree {C.degree}", f"raised by |ξ|^{2 * m}" if m else "no homogeneity raise needed"]
    potential = operator_from_symbol(C, name=f"potential({op.name})")
    return PotentialResult(C, potential, rank, homogeneity_raise=m, notes=notes)


def check_exactness(opA: DiffOperator, opB: DiffOperator, n_samples: int = 50) -> bool:
    """
    Verify that ℬ is a potential for 𝒜.

    𝒜(ξ)ℬ(ξ) must vanish as a polynomial identity and rank ℬ(ξ) + rank 𝒜(ξ)
    must equal the middle dimension at every sampled direction.
    """
    compose_check_shapes(opB, opA)
    A, B = symbol_of(opA), symbol_of(opB)
    if not (A @ B).is_zero:
        raise NotAPotential(f"{opA.name}∘{opB.name} does not vanish")

    cutoff = get_settings().symbols.rank_cutoff
    for xi in sample_directions(opA.dim_n, n_samples):
        total = rank_at(A, xi, cutoff) + rank_at(B, xi, cutoff)
        if total != opA.dim_from:
            raise NotAPotential(
                f"rank {opA.name}(ξ) + rank {opB.name}(ξ) = {total} ≠ {opA.dim_from} at ξ={xi}"
            )
    return True


# Wave cone

def wave_cone_sample(op: DiffOperator, n_dirs: int) -> WaveConeSample:
    """
    Orthonormal bases of ker 𝒜(ξ) at deterministic sample directions.

    Also decides the spanning cone condition span Λ_𝒜 = V numerically.
    """
    if n_dirs < 1:
        raise InvalidParameter("n_dirs must be positive")
    cutoff = get_settings().symbols.rank_cutoff
    symbol = symbol_of(op)
    directions = low_discrepancy_directions(op.dim_n, n_dirs)

    bases = []
    for xi in directions:
        matrix = symbol.evaluate(xi)
        bases.append(scipy.linalg.null_space(matrix, rcond=cutoff))

    span_rank = _span_rank(bases, cutoff)
    spans = span_rank == op.dim_from
    logger.info(f"Wave cone of {op.name}: {len(bases)} directions, span rank {span_rank}/{op.dim_from}")
    return WaveConeSample(directions, tuple(bases), span_rank, spans)


def image_cone_sample(op: DiffOperator, n_dirs: int) -> WaveConeSample:
    """Orthonormal bases of im ℬ(ξ); the wave cone of the annihilator of ℬ"""
    cutoff = get_settings().symbols.rank_cutoff
    symbol = symbol_of(op)
    directions = low_discrepancy_directions(op.dim_n, max(n_dirs, 1))
    bases = tuple(scipy.linalg.orth(symbol.evaluate(xi), rcond=cutoff) for xi in directions)
    span_rank = _span_rank(bases, cutoff)
    return WaveConeSample(directions, bases, span_rank, span_rank == op.dim_to)


def exact_scaling_holds(symbol: PolySymbol, point: Sequence[int], t: int) -> bool:
    """Exact check of S(tξ) = t^deg S(ξ) at an integer point"""
    for row in symbol.entries:
        for p in row:
            lhs = eval_exact(p, [Fraction(t * x) for x in point])
            rhs = Fraction(t) ** symbol.degree * eval_exact(p, [Fraction(x) for x in point])
            if lhs != rhs:
                return False
    return True


def _span_rank(bases: Sequence[np.ndarray], cutoff: float) -> int:
    stacked = np.hstack(bases) if bases else np.zeros((0, 0))
    if stacked.size == 0:
        return 0
    s = np.linalg.svd(stacked, compute_uv=False)
    return int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 0
