"""
Inequality harnesses for potentials u on balls.
Constants are never asserted: each harness reports lhs, rhs and the raw ratio with c := 1.
"""

import logging
import math
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import get_settings
from ..core.errors import (
    HypothesisViolated,
    InvalidParameter,
    KernelBasisDeficient,
    NotExtremal,
    NotInImage,
    ShapeMismatch,
)
from ..fields.grid import PeriodicField
from ..fields.masks import BallMask, ball_integral, field_average
from ..fields.polynomial import (
    PolynomialField,
    monomials,
    operator_matrix_exact,
    polynomial_basis,
)
from ..fields.spectral import annihilator_residual, apply_operator, derivative_tensor
from ..integrands.library import Integrand, eval_E, eval_Vp
from ..solvers.variational import el_residual
from ..symbols.calculus import symbol_adjoint
from ..symbols.operators import DiffOperator, as_sequence, operator_matrix_stack

logger = logging.getLogger(__name__)


class InequalityReport(BaseModel):
    """Measured sides of one inequality"""
    model_config = ConfigDict(populate_by_name=True)

    name: str
    lhs: float
    rhs: float
    ratio: float
    parameters: Dict[str, Any] = Field(default_factory=dict)
    pi_info: str = ""
    cap: float
    passed: bool = Field(alias="pass")


def _report(name: str, lhs: float, rhs: float, parameters: Dict[str, Any], pi_info: str) -> InequalityReport:
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else float("inf")
    cap = get_settings().regularity.ratio_cap
    report = InequalityReport(name=name, lhs=lhs, rhs=rhs, ratio=ratio, parameters=parameters,
                              pi_info=pi_info, cap=cap, passed=ratio <= cap)
    logger.info(f"{name}: lhs={lhs:.6e} rhs={rhs:.6e} ratio={ratio:.4e} pass={report.passed}")
    return report


def fit_polynomial(w_average: Sequence[float], opB: DiffOperator) -> PolynomialField:
    """
    Minimal-norm homogeneous polynomial a of degree k with ℬa ≡ w_average.

    Args:
        w_average: Target constant in V
        opB: Operator of order k

    Returns:
        PolynomialField in the local variable x − x₀
    """
    target = as_sequence(w_average, opB.dim_to)
    exps = monomials(opB.dim_n, opB.order, exact_degree=True)
    alphas, stack = operator_matrix_stack(opB)
    coeff = dict(zip(alphas, stack))
    # ∂^α x^β = α! δ_{αβ} for |α| = |β| = k
    blocks = []
    for beta in exps:
        factor = float(np.prod([math.factorial(b) for b in beta]))
        blocks.append(coeff.get(beta, np.zeros((opB.dim_to, opB.dim_from))) * factor)
    T = np.concatenate(blocks, axis=1)
    solution, *_ = np.linalg.lstsq(T, target, rcond=None)
    residual = np.linalg.norm(T @ solution - target)
    tol = get_settings().regularity.image_tol
    if residual > tol * max(1.0, np.linalg.norm(target)):
        raise NotInImage(f"{target.tolist()} is not in the image of {opB.name} on degree-{opB.order} "
                         f"polynomials (residual {residual:.3e})")
    return PolynomialField(opB.dim_n, exps, solution.reshape(len(exps), opB.dim_from))


@lru_cache(maxsize=16)
def kernel_basis(opB: DiffOperator, opC: Optional[DiffOperator], degree: int) -> Tuple[PolynomialField, ...]:
    """
    Polynomials π of degree ≤ degree with ℬπ = 0 and 𝒞*π = 0, by exact nullspace over ℚ.

    Args:
        opB: Potential operator
        opC: Potential of ℬ, or None when ℬ is elliptic
        degree: Truncation degree

    Returns:
        Basis as PolynomialFields
    """
    n_cols = len(monomials(opB.dim_n, degree)) * opB.dim_from
    blocks = []
    for op in (opB, symbol_adjoint(opC) if opC is not None else None):
        if op is not None and degree >= op.order:
            blocks.append(operator_matrix_exact(op, degree))
    system = sympy.Matrix.vstack(*blocks) if blocks else sympy.zeros(0, n_cols)
    if system.rows == 0:
        vectors = [sympy.eye(n_cols)[:, i] for i in range(n_cols)]
    else:
        vectors = system.nullspace()
    basis = polynomial_basis(opB.dim_n, degree, opB.dim_from, [list(v) for v in vectors])
    logger.debug(f"Kernel of {opB.name} up to degree {degree}: dimension {len(basis)}")
    return tuple(basis)


def _local_derivatives(u: PeriodicField, orders: Sequence[int]) -> Dict[int, np.ndarray]:
    return {j: derivative_tensor(u, j).values for j in orders}


def _project_kernel(du: Dict[int, np.ndarray], basis: Sequence[PolynomialField], mask: BallMask,
                    R: float, order: int) -> Tuple[Optional[PolynomialField], Dict[int, np.ndarray]]:
    """π minimising Σ_j R^{2(j−k)}∫_B|D^j(u−π)|²; returns π and its derivative tensors on the grid"""
    if not basis:
        return None, {}
    inside = mask.weights > 0
    root = np.sqrt(mask.weights[inside])[:, None]
    y = mask.offsets()
    targets, columns = [], [[] for _ in basis]
    for j, values in du.items():
        scale = R ** (j - order)
        targets.append((root * values[inside] * scale).ravel())
        for i, p in enumerate(basis):
            columns[i].append((root * p.derivative_tensor(y[inside], j) * scale).ravel())
    design = np.stack([np.concatenate(c) for c in columns], axis=1)
    rank = np.linalg.matrix_rank(design, tol=get_settings().symbols.rank_cutoff * np.abs(design).max())
    if rank < len(basis):
        raise KernelBasisDeficient(
            f"kernel least squares has rank {rank} for {len(basis)} basis polynomials on radius {mask.radius}"
        )
    coeffs, *_ = np.linalg.lstsq(design, np.concatenate(targets), rcond=None)
    pi = basis[0] * float(coeffs[0])
    for c, p in zip(coeffs[1:], basis[1:]):
        pi = pi + p * float(c)
    return pi, {j: pi.derivative_tensor(y, j) for j in du}


def _check_gauge(opC: Optional[DiffOperator], u: PeriodicField) -> float:
    if opC is None:
        return 0.0
    residual = annihilator_residual(opC, u)
    tol = get_settings().harmonic.hypothesis_tol
    if residual > tol:
        raise HypothesisViolated(f"𝒞*u residual {residual:.3e} exceeds {tol:.1e}")
    return residual


def _ball(u: PeriodicField, x0: Optional[Sequence[float]], R: Optional[float]) -> Tuple[tuple, float]:
    period = u.grid.period
    center = (period / 2,) * u.grid.dim_n if x0 is None else tuple(as_sequence(x0, u.grid.dim_n))
    return center, 0.4 * period if R is None else R


def _modular_sides(u: PeriodicField, opB: DiffOperator, opC: Optional[DiffOperator],
                   x0: Sequence[float], R: float, theta: float, orders: Sequence[int],
                   term, degree: Optional[int]) -> Tuple[float, float, str, Dict[str, Any]]:
    """lhs with the better of π and 0, shared by the Poincaré and Korn harnesses"""
    if not 0 < theta < 1:
        raise InvalidParameter(f"θ must lie in (0, 1), got {theta}")
    if u.fiber_dim != opB.dim_from:
        raise ShapeMismatch(f"{opB.name} acts on {opB.dim_from}-vector potentials, u has {u.fiber_dim}")
    _check_gauge(opC, u)
    k = opB.order
    degree = degree if degree is not None else k + get_settings().regularity.kernel_degree_offset
    outer = BallMask(u.grid, tuple(x0), R)
    inner = outer.shrink(theta)
    du = _local_derivatives(u, orders)
    basis = kernel_basis(opB, opC, degree)
    pi, dpi = _project_kernel(du, basis, inner, R, k)

    lhs_zero = sum(term(j, du[j], inner) for j in orders)
    lhs_pi = sum(term(j, du[j] - dpi[j], inner) for j in orders) if pi is not None else lhs_zero
    if lhs_pi <= lhs_zero:
        lhs = lhs_pi
        pi_info = f"least-squares kernel projection, degree {degree}, basis size {len(basis)}"
    else:
        lhs = lhs_zero
        pi_info = f"π = 0 (projection raised the modular sum), degree {degree}"
    details = {"degree": degree, "basis_size": len(basis), "lhs_without_pi": lhs_zero}
    return float(lhs), float(lhs_zero), pi_info, details


def verify_poincare_modular(u: PeriodicField, opB: DiffOperator, opC: Optional[DiffOperator],
                            x0: Optional[Sequence[float]] = None, R: Optional[float] = None,
                            theta: float = 0.5, q: float = 1.0,
                            degree: Optional[int] = None) -> InequalityReport:
    """
    Modular Poincaré–Sobolev ratio.

    lhs = Σ_{j<k} (∫_{B_{θR}} E(D^j(u−π)/R^{k−j})^q)^{1/q}, rhs = ∫_{B_R} E(ℬu).

    Args:
        u: Potential with 𝒞*u = 0
        opB: Potential operator of order k
        opC: Potential of ℬ or None
        x0: Ball center (torus center by default)
        R: Radius (0.4·period by default)
        theta: Inner ratio in (0, 1)
        q: Exponent in [1, n/(n−1))
        degree: Kernel truncation degree (k + offset by default)

    Returns:
        InequalityReport named "poincare_modular"
    """
    n = u.grid.dim_n
    q_max = np.inf if n == 1 else n / (n - 1)
    if not 1 <= q < q_max:
        raise InvalidParameter(f"q must lie in [1, {q_max}), got {q}")
    x0, R = _ball(u, x0, R)
    k = opB.order

    def term(j, values, mask):
        density = eval_E(values / R ** (k - j)) ** q
        return ball_integral(values, mask, lambda _: density) ** (1.0 / q)

    lhs, _, pi_info, details = _modular_sides(u, opB, opC, x0, R, theta, range(k), term, degree)
    Bu = apply_operator(opB, u)
    rhs = ball_integral(Bu, BallMask(u.grid, x0, R), eval_E)
    parameters = {"theta": theta, "q": q, "R": R, "center": list(x0), **details}
    return _report("poincare_modular", lhs, float(rhs), parameters, pi_info)


def verify_korn_vp(u: PeriodicField, opB: DiffOperator, opC: Optional[DiffOperator],
                   theta: float = 0.5, p: float = 2.0, x0: Optional[Sequence[float]] = None,
                   R: Optional[float] = None, degree: Optional[int] = None) -> InequalityReport:
    """
    Korn-type ratio in V_p form.

    lhs = Σ_{j≤k} ∫_{B_{θR}} |V_p(D^j(u−π))|², rhs = ∫_{B_R} |V_p(ℬu)|².
    For p = 2 both sides are plain L² quantities.
    """
    if not 1 < p < np.inf:
        raise InvalidParameter(f"p must lie in (1, ∞), got {p}")
    x0, R = _ball(u, x0, R)
    k = opB.order

    def term(j, values, mask):
        return ball_integral(values, mask, lambda v: np.sum(eval_Vp(v, p) ** 2, axis=-1))

    lhs, _, pi_info, details = _modular_sides(u, opB, opC, x0, R, theta, range(k + 1), term, degree)
    Bu = apply_operator(opB, u)
    rhs = ball_integral(Bu, BallMask(u.grid, x0, R), lambda v: np.sum(eval_Vp(v, p) ** 2, axis=-1))
    parameters = {"theta": theta, "p": p, "R": R, "center": list(x0), **details}
    return _report("korn_vp", lhs, float(rhs), parameters, pi_info)


def verify_caccioppoli(u: PeriodicField, f: Integrand, opB: DiffOperator, x0: Sequence[float], R: float,
                       a: Optional[PolynomialField] = None,
                       datum: Optional[Sequence[float]] = None) -> InequalityReport:
    """
    Caccioppoli ratio for an extremal potential.

    lhs = ∫_{B_{R/2}} E(ℬ(u−a)); rhs = Σ_{i<k} ∫_{B_R} E(D^i(u−a)/R^{k−i}) plus the linear-growth
    terms R Σ_{i<k} ∫_{B_R}|D^i(u−a)|/R^{k−i} and R∫_{B_R}|ℬ(u−a)|, each reported in parameters.

    Args:
        u: Potential of the extremal field v = datum + ℬu
        f: Integrand the field is extremal for
        opB: Potential operator
        x0: Ball center
        R: Outer radius
        a: Polynomial in x − x₀; by default the degree-k fit with ℬa = (ℬu)_{x₀,R}
        datum: Constant F of the potential formulation (zero by default)

    Returns:
        InequalityReport named "caccioppoli"
    """
    if u.fiber_dim != opB.dim_from:
        raise ShapeMismatch(f"{opB.name} acts on {opB.dim_from}-vector potentials, u has {u.fiber_dim}")
    Bu = apply_operator(opB, u)
    F = np.zeros(opB.dim_to) if datum is None else as_sequence(datum, opB.dim_to)
    residual = el_residual(f, Bu + F, opB=opB)
    tol = get_settings().regularity.extremal_tol
    if residual > tol:
        raise NotExtremal(f"Euler–Lagrange residual {residual:.3e} exceeds {tol:.1e}")

    center = tuple(as_sequence(x0, u.grid.dim_n))
    outer = BallMask(u.grid, center, R)
    inner = outer.shrink(0.5)
    if a is None:
        a = fit_polynomial(field_average(Bu, outer), opB)
        pi_info = "a fitted with ℬa = (ℬu)_{x₀,R}"
    else:
        pi_info = "a supplied by caller"

    k = opB.order
    y = outer.offsets()
    top = Bu.values - a.apply_operator(opB).evaluate(y)
    lhs = ball_integral(top, inner, eval_E)

    modular, linear = 0.0, 0.0
    for i in range(k):
        gap = (derivative_tensor(u, i).values - a.derivative_tensor(y, i)) / R ** (k - i)
        modular += ball_integral(gap, outer, eval_E)
        linear += ball_integral(gap, outer)
    linear *= R
    top_term = R * ball_integral(top, outer)
    rhs = modular + linear + top_term
    parameters = {
        "R": R,
        "center": list(center),
        "el_residual": residual,
        "modular_term": modular,
        "linear_term": linear,
        "top_order_term": top_term,
    }
    return _report("caccioppoli", float(lhs), float(rhs), parameters, pi_info)
