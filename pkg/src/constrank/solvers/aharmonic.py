"""
A-harmonic Solver
Constant-coefficient systems ∫A[ℬh, ℬφ] = 0 solved frequency-wise by preconditioned
conjugate gradients, plus the A-harmonic approximation experiment on a ball.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..core.config import get_settings
from ..core.errors import (
    HypothesisViolated,
    IllConditioned,
    InvalidParameter,
    RadiusTooSmall,
    ShapeMismatch,
)
from ..fields.grid import GridSpec, PeriodicField
from ..fields.masks import BallMask, ball_average, field_average
from ..fields.polynomial import PolynomialField, monomials, operator_matrix, polynomial_basis
from ..fields.spectral import annihilator_residual, apply_operator, derivative_tensor, symbol_multiplier
from ..integrands.library import Integrand, eval_E
from ..symbols.calculus import image_cone_sample, symbol_adjoint
from ..symbols.operators import DiffOperator

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BilinearFormA:
    """Symmetric form A on V with λ|v|² ≤ A[v,v] ≤ Λ|v|² on the sampled wave cone"""
    matrix: np.ndarray
    lam: float
    Lam: float

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ShapeMismatch(f"bilinear form must be a square matrix, got shape {matrix.shape}")
        if not np.allclose(matrix, matrix.T, atol=1e-12 * max(1.0, np.abs(matrix).max())):
            raise InvalidParameter("bilinear form must be symmetric")
        if self.lam <= 0:
            raise InvalidParameter(f"form is not elliptic on the wave cone: λ = {self.lam:.3e}")
        if self.Lam < self.lam:
            raise InvalidParameter(f"Λ = {self.Lam} is below λ = {self.lam}")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "BilinearFormA":
        return cls(np.eye(dim), 1.0, 1.0)

    @classmethod
    def on_cone(cls, matrix: np.ndarray, opB: DiffOperator, n_dirs: Optional[int] = None) -> "BilinearFormA":
        """
        Measure λ and Λ of a matrix over the image cone of ℬ.

        Args:
            matrix: Symmetric matrix on V
            opB: Potential operator whose symbol images span the cone
            n_dirs: Sampled directions (defaults to the symbol sample count)

        Returns:
            BilinearFormA; InvalidParameter if the form degenerates on the cone
        """
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (opB.dim_to, opB.dim_to):
            raise ShapeMismatch(f"form on ℝ^{opB.dim_to} expected, got shape {matrix.shape}")
        sample = image_cone_sample(opB, n_dirs or get_settings().symbols.default_samples)
        sym = 0.5 * (matrix + matrix.T)
        lows, highs = [], []
        for Q in sample.bases:
            if not Q.size:
                continue
            eig = np.linalg.eigvalsh(Q.T @ sym @ Q)
            lows.append(eig[0])
            highs.append(eig[-1])
        if not lows:
            raise InvalidParameter(f"image cone of {opB.name} is empty at every sampled direction")
        lam, Lam = float(min(lows)), float(max(highs))
        logger.debug(f"Form on the cone of {opB.name}: λ={lam:.4e}, Λ={Lam:.4e}")
        return cls(sym, lam, Lam)

    @classmethod
    def from_integrand(cls, f: Integrand, x0: Optional[np.ndarray], z: np.ndarray,
                       opB: DiffOperator, n_dirs: Optional[int] = None) -> "BilinearFormA":
        """Frozen linearisation A := ∂²_z f(x₀, z)"""
        z = np.asarray(z, dtype=float)
        x = None if x0 is None else np.asarray(x0, dtype=float)
        return cls.on_cone(f.hess(x, z), opB, n_dirs)

    def perturbed(self, delta: np.ndarray, eps: float) -> "BilinearFormA":
        """A + ε·ΔA with bounds widened by ε‖ΔA‖"""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != self.matrix.shape:
            raise ShapeMismatch(f"perturbation of shape {delta.shape} for a form of shape {self.matrix.shape}")
        spread = eps * np.linalg.norm(delta, 2)
        return BilinearFormA(self.matrix + eps * delta, self.lam - spread, self.Lam + spread)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """A v along the last axis"""
        return np.einsum("ij,...j->...i", self.matrix, values)

    def pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise A[a, b]"""
        return np.sum(self.apply(a) * b, axis=-1)


def _conj_t(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _apply(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", m, x)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def _pcg(A: BilinearFormA, B: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, int]:
    """CG on ℬ*Aℬ, preconditioned by (ℬ*ℬ)† frequency by frequency"""
    settings = get_settings()
    tol = settings.harmonic.cg_tol
    cap = settings.harmonic.cg_max_iter
    BH = _conj_t(B)
    precond = np.linalg.pinv(BH @ B, rcond=settings.symbols.rank_cutoff, hermitian=True)

    def normal(x):
        return _apply(BH, A.apply(_apply(B, x)))

    x = np.zeros_like(rhs)
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs == 0:
        return x, 0

    r = rhs.copy()
    z = _apply(precond, r)
    p = z.copy()
    rz = _dot(r, z)
    for iteration in range(1, cap + 1):
        q = normal(p)
        alpha = rz / _dot(p, q)
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= tol * norm_rhs:
            return x, iteration
        z = _apply(precond, r)
        rz_next = _dot(r, z)
        p = z + (rz_next / rz) * p
        rz = rz_next

    raise IllConditioned(
        f"CG did not reach relative residual {tol:.1e} in {cap} iterations "
        f"(residual {np.linalg.norm(r) / norm_rhs:.3e}); λ may be close to 0 on the discrete cone"
    )


def solve_a_harmonic(A: BilinearFormA, opB: DiffOperator, opC: Optional[DiffOperator],
                     datum: PeriodicField) -> PeriodicField:
    """
    Find v with ∫A[datum + ℬv, ℬφ] = 0 for every discrete test field φ.

    Args:
        A: Form, elliptic on the image cone of ℬ
        opB: Potential operator
        opC: Potential of ℬ (None when ℬ is elliptic); only used to check the gauge of v
        datum: Background field G on V; ℬh₀ for a background potential h₀

    Returns:
        The zero-mean solution v with v̂(k) ∈ im ℬ*(k), so 𝒞*v = 0
    """
    if A.dim != opB.dim_to or datum.fiber_dim != opB.dim_to:
        raise ShapeMismatch(
            f"{opB.name} takes values in ℝ^{opB.dim_to}; form has dim {A.dim}, datum fiber {datum.fiber_dim}"
        )
    grid = datum.grid
    B = symbol_multiplier(opB, grid)
    rhs = -_apply(_conj_t(B), A.apply(datum.spectrum))
    spectrum, iterations = _pcg(A, B, rhs)
    v = PeriodicField.from_spectrum(grid, spectrum)

    gauge = annihilator_residual(opC, v) if opC is not None else 0.0
    logger.debug(f"A-harmonic solve for {opB.name} on {grid.shape}: {iterations} CG iterations, "
                 f"gauge residual {gauge:.2e}")
    tol = get_settings().harmonic.hypothesis_tol
    if gauge > tol:
        logger.warning(f"A-harmonic solution for {opB.name} leaves the gauge: "
                       f"𝒞*v residual {gauge:.3e} exceeds {tol:.1e}")
    return v


def galerkin_defect(A: BilinearFormA, opB: DiffOperator, v: PeriodicField, phi: PeriodicField,
                    datum: Optional[PeriodicField] = None) -> float:
    """|∫A[datum + ℬv, ℬφ]| / ‖ℬφ‖₂"""
    Bv = apply_operator(opB, v)
    if datum is not None:
        Bv = Bv + datum
    Bphi = apply_operator(opB, phi)
    norm = Bphi.l2_norm()
    if norm == 0:
        return 0.0
    integral = np.sum(A.pair(Bv.values, Bphi.values)) * v.grid.cell_volume
    return float(abs(integral) / norm)


# Test-field bank

BANK_SCALES = (0.5, 0.35, 0.25)


def bump_bank(grid: GridSpec, fiber_dim: int, center: Sequence[float], radius: float,
              order: int, n_dirs: Optional[int] = None,
              seed: Optional[int] = None) -> List[PeriodicField]:
    """
    Oscillating tensor-product cosine bumps supported in B_{r/2}(x₀).

    Each bump a·Π cos^{2(k+1)}(π y_i/2ρ)·cos(π⟨d, y⟩/ρ) lives on the cube |y_i| < ρ with
    ρ = s·r/√n, so the cube sits inside the half ball for every scale s.
    """
    settings = get_settings().harmonic
    n_dirs = n_dirs or settings.bank_directions
    rng = np.random.default_rng(settings.bank_seed if seed is None else seed)
    y = grid.periodic_offset(grid.coordinates(), center)
    power = 2 * (order + 1)

    bank = []
    for scale in BANK_SCALES:
        rho = scale * radius / np.sqrt(grid.dim_n)
        if rho < 2 * grid.spacing:
            logger.debug(f"Skipping bump scale {scale}: half-width {rho:.3e} under two cells")
            continue
        inside = np.all(np.abs(y) < rho, axis=-1)
        envelope = np.where(inside, np.prod(np.cos(np.pi * y / (2 * rho)) ** power, axis=-1), 0.0)
        for _ in range(n_dirs):
            a = rng.standard_normal(fiber_dim)
            d = rng.standard_normal(grid.dim_n)
            a /= np.linalg.norm(a)
            d /= np.linalg.norm(d)
            wave = np.cos(np.pi * (y @ d) / rho)
            bank.append(PeriodicField(grid, (envelope * wave)[..., None] * a))
    if not bank:
        raise RadiusTooSmall(f"radius {radius} is too small for any test bump on spacing {grid.spacing}")
    return bank


def _bank_defect(A: BilinearFormA, opB: DiffOperator, Bw: np.ndarray, mask: BallMask,
                 bank: Sequence[PeriodicField]) -> float:
    worst = 0.0
    for phi in bank:
        Bphi = apply_operator(opB, phi)
        sup = Bphi.sup_norm()
        if sup == 0:
            continue
        value = ball_average(Bw, mask, lambda values: A.pair(values, Bphi.values)) / sup
        worst = max(worst, abs(value))
    return worst


def almost_harmonic_defect(f: Integrand, u: PeriodicField, opB: DiffOperator,
                           x0: Sequence[float], R: float) -> float:
    """
    sup over the bank of |⨏_{B_R} A[ℬu − (ℬu)_{x₀,R}, ℬφ]| / sup|ℬφ| with A = ∂²f(x₀, (ℬu)_{x₀,R}).

    Small for extremals of f whose ℬu oscillates little on the ball.
    """
    mask = BallMask(u.grid, tuple(x0), R)
    Bu = apply_operator(opB, u)
    average = field_average(Bu, mask)
    A = BilinearFormA.from_integrand(f, np.asarray(x0, dtype=float) if f.x_dependent else None,
                                     average, opB)
    bank = bump_bank(u.grid, opB.dim_from, x0, R, opB.order)
    defect = _bank_defect(A, opB, Bu.values - average, mask, bank)
    logger.debug(f"Almost A-harmonic defect at {tuple(x0)}, R={R}: {defect:.3e}")
    return defect


@dataclass
class PerturbationReport:
    eps: List[float]
    differences: List[float]
    constants: List[float]
    slope: float

    def to_dict(self) -> dict:
        return asdict(self)


def perturbation_study(A: BilinearFormA, delta: np.ndarray, opB: DiffOperator,
                       opC: Optional[DiffOperator], datum: PeriodicField,
                       eps_ladder: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> PerturbationReport:
    """
    Compare A-harmonic solutions for A and A + εΔA.

    Args:
        A: Reference form
        delta: Perturbation direction ΔA (symmetric)
        opB: Potential operator
        opC: Potential of ℬ or None
        datum: Background field G on V
        eps_ladder: Perturbation sizes

    Returns:
        PerturbationReport with ‖ℬ(h̃ − h)‖₂, the constants c = ‖ℬ(h̃−h)‖/(|Ã−A|‖ℬh‖)
        and the log-log slope of the differences against ε
    """
    if len(eps_ladder) < 2:
        raise InvalidParameter("the ε ladder needs at least two entries")
    base = solve_a_harmonic(A, opB, opC, datum)
    Bh = datum + apply_operator(opB, base)
    Bh_norm = Bh.l2_norm()

    differences, constants = [], []
    for eps in eps_ladder:
        tilde = A.perturbed(delta, eps)
        v = solve_a_harmonic(tilde, opB, opC, datum)
        diff = apply_operator(opB, v - base).l2_norm()
        gap = np.linalg.norm(tilde.matrix - A.matrix, 2)
        differences.append(diff)
        constants.append(diff / (gap * Bh_norm) if gap * Bh_norm > 0 else 0.0)

    positive = [(e, d) for e, d in zip(eps_ladder, differences) if d > 0]
    if len(positive) >= 2:
        slope = float(np.polyfit(np.log([e for e, _ in positive]), np.log([d for _, d in positive]), 1)[0])
    else:
        slope = 0.0
    logger.info(f"Perturbation study for {opB.name}: constants {[f'{c:.3e}' for c in constants]}, "
                f"slope {slope:.3f}")
    return PerturbationReport(list(map(float, eps_ladder)), differences, constants, slope)


# A-harmonic approximation

def harmonic_polynomials(A: BilinearFormA, opB: DiffOperator, degree: int) -> List[PolynomialField]:
    """
    Basis of polynomial potentials h of degree ≤ degree with ℬ*Aℬh ≡ 0.

    Polynomials of degree below 2k are A-harmonic without condition.
    """
    n_in = len(monomials(opB.dim_n, degree)) * opB.dim_from
    if degree < 2 * opB.order:
        return polynomial_basis(opB.dim_n, degree, opB.dim_from, np.eye(n_in))
    MB = operator_matrix(opB, degree)
    MBs = operator_matrix(symbol_adjoint(opB), degree - opB.order)
    n_mid = len(monomials(opB.dim_n, degree - opB.order))
    system = MBs @ np.kron(np.eye(n_mid), A.matrix) @ MB
    kernel = scipy.linalg.null_space(system, rcond=get_settings().symbols.rank_cutoff)
    return polynomial_basis(opB.dim_n, degree, opB.dim_from, kernel.T)


@dataclass
class HarmonicApproxReport:
    """Outcome of approximating w/γ by an A-harmonic h on the half ball"""
    gamma: float
    delta: float
    modular_distance: float
    h_energy: float
    K_bound: float
    within_bound: bool
    energy: float
    energy_hypothesis: bool
    degree: int
    n_tests: int
    seed: int
    grid: List[int]
    h: Optional[PolynomialField] = None

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "h"}
        out["within_bound"] = bool(self.within_bound)
        out["energy_hypothesis"] = bool(self.energy_hypothesis)
        return out


def _fit_harmonic(w: PeriodicField, basis: Sequence[PolynomialField], mask: BallMask,
                  order: int, r: float) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Least-squares γh ≈ w in Σ_i r^{2(i−k)}∫_{B}|D^i(·)|², weighted by the ball quadrature"""
    inside = mask.weights > 0
    y = mask.offsets()[inside]
    root = np.sqrt(mask.weights[inside])[:, None]
    targets, columns = [], [[] for _ in basis]
    w_derivs = []
    for i in range(order + 1):
        scale = r ** (i - order)
        Dw = derivative_tensor(w, i).values
        w_derivs.append(Dw)
        targets.append((root * Dw[inside] * scale).ravel())
        for j, h in enumerate(basis):
            columns[j].append((root * h.derivative_tensor(y, i) * scale).ravel())
    design = np.stack([np.concatenate(c) for c in columns], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, np.concatenate(targets), rcond=None)
    return coeffs, w_derivs


def harmonic_approx_experiment(w: PeriodicField, A: BilinearFormA, opB: DiffOperator,
                               opC: Optional[DiffOperator], mask: BallMask,
                               gamma: float) -> HarmonicApproxReport:
    """
    Measure how far a potential w is from γ times an A-harmonic h on B_{r/2}.

    Args:
        w: Potential with 𝒞*w = 0
        A: Form, elliptic on the image cone of ℬ
        opB: Potential operator
        opC: Potential of ℬ (None when ℬ is elliptic)
        mask: The ball B_r(x₀)
        gamma: Energy scale with ⨏_{B_r}E(ℬw) ≤ γ² ≤ 1

    Returns:
        HarmonicApproxReport; h is the best polynomial A-harmonic fit of w/γ
    """
    if not 0 < gamma <= 1:
        raise InvalidParameter(f"γ must lie in (0, 1], got {gamma}")
    if w.fiber_dim != opB.dim_from:
        raise ShapeMismatch(f"{opB.name} acts on {opB.dim_from}-vector potentials, w has {w.fiber_dim}")
    settings = get_settings().harmonic
    if opC is not None:
        gauge = annihilator_residual(opC, w)
        if gauge > settings.hypothesis_tol:
            raise HypothesisViolated(f"𝒞*w residual {gauge:.3e} exceeds {settings.hypothesis_tol:.1e}")

    order = opB.order
    r = mask.radius
    Bw = apply_operator(opB, w)
    energy = ball_average(Bw, mask, eval_E)
    hypothesis = energy <= gamma ** 2
    if not hypothesis:
        logger.warning(f"Energy hypothesis fails: ⨏E(ℬw) = {energy:.4e} > γ² = {gamma ** 2:.4e}")

    bank = bump_bank(w.grid, opB.dim_from, mask.center, r, order)
    delta = _bank_defect(A, opB, Bw.values, mask, bank) / gamma

    half = mask.shrink(0.5)
    degree = max(settings.polynomial_degree, 2 * order)
    basis = harmonic_polynomials(A, opB, degree)
    coeffs, w_derivs = _fit_harmonic(w, basis, half, order, r)
    fitted = PolynomialField.zeros(opB.dim_n, degree, opB.dim_from)
    for c, h in zip(coeffs, basis):
        fitted = fitted + h * float(c)

    y = half.offsets()
    modular = 0.0
    for i in range(order + 1):
        gap = (w_derivs[i] - fitted.derivative_tensor(y, i)) * r ** (i - order)
        modular += ball_average(gap, half, eval_E)
    h = fitted * (1.0 / gamma)
    h_energy = ball_average(h.apply_operator(opB).evaluate(y), half, eval_E)

    report = HarmonicApproxReport(
        gamma=float(gamma),
        delta=float(delta),
        modular_distance=float(modular),
        h_energy=float(h_energy),
        K_bound=settings.k_bound,
        within_bound=h_energy <= settings.k_bound,
        energy=float(energy),
        energy_hypothesis=hypothesis,
        degree=degree,
        n_tests=len(bank),
        seed=settings.bank_seed,
        grid=list(w.grid.shape),
        h=h,
    )
    logger.info(f"A-harmonic approximation at {mask.center}, r={r}: δ̂={delta:.3e}, "
                f"modular distance={modular:.3e}, ⨏E(ℬh)={h_energy:.3e}")
    return report
