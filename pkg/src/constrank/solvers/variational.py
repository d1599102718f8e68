"""
Variational Solver
Projected-gradient minimisation of ∫ f(x, v) over 𝒜-free periodic fields with a fixed
mean, or over v = F + ℬu in the potential formulation.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np

from ..core.config import get_settings
from ..core.errors import Diverged, InvalidParameter, ShapeMismatch
from ..fields.grid import GridSpec, PeriodicField, random_band_limited
from ..fields.masks import BallMask, ball_integral
from ..fields.spectral import (
    afree_residual,
    kernel_projector,
    lift_potential,
    range_projector,
)
from ..integrands.library import Integrand
from ..symbols.operators import DiffOperator

logger = logging.getLogger(__name__)


def _project(projector: np.ndarray, f: PeriodicField, keep_mean: bool) -> PeriodicField:
    spectrum = np.einsum("...ij,...j->...i", projector, f.spectrum)
    if not keep_mean:
        spectrum[(0,) * f.grid.dim_n] = 0.0
    return PeriodicField.from_spectrum(f.grid, spectrum)


@dataclass(frozen=True)
class AFreeConstraint:
    """𝒜v = 0 with ⨏v = mean"""
    opA: DiffOperator
    mean: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.shape != (self.opA.dim_from,):
            raise ShapeMismatch(f"mean must have length {self.opA.dim_from}, got {mean.shape}")
        object.__setattr__(self, "mean", mean)

    @property
    def fiber_dim(self) -> int:
        return self.opA.dim_from

    def tangent(self, f: PeriodicField) -> PeriodicField:
        """Projection onto zero-mean 𝒜-free fields"""
        return _project(kernel_projector(self.opA, f.grid), f, keep_mean=False)

    def base_point(self, grid: GridSpec) -> PeriodicField:
        return PeriodicField.constant(grid, self.mean)

    def feasibility(self, v: PeriodicField) -> float:
        return afree_residual(self.opA, v)

    def describe(self) -> str:
        return f"{self.opA.name}-free, mean={self.mean.tolist()}"


@dataclass(frozen=True)
class PotentialConstraint:
    """v = F + ℬu"""
    opB: DiffOperator
    datum: np.ndarray

    def __post_init__(self):
        datum = np.atleast_1d(np.asarray(self.datum, dtype=float))
        if datum.shape != (self.opB.dim_to,):
            raise ShapeMismatch(f"datum must have length {self.opB.dim_to}, got {datum.shape}")
        object.__setattr__(self, "datum", datum)

    @property
    def fiber_dim(self) -> int:
        return self.opB.dim_to

    def tangent(self, f: PeriodicField) -> PeriodicField:
        """Projection onto im ℬ via ℬℬ†"""
        return _project(range_projector(self.opB, f.grid), f, keep_mean=False)

    def base_point(self, grid: GridSpec) -> PeriodicField:
        return PeriodicField.constant(grid, self.datum)

    def feasibility(self, v: PeriodicField) -> float:
        rest = v - self.datum
        norm = rest.l2_norm()
        return 0.0 if norm == 0 else (rest - self.tangent(rest)).l2_norm() / norm

    def describe(self) -> str:
        return f"F + {self.opB.name}u, F={self.datum.tolist()}"


Constraint = Union[AFreeConstraint, PotentialConstraint]


@dataclass
class MinimizeProblem:
    """Integrand, constraint and grid; init is a field, "zero" or "random" """
    integrand: Integrand
    constraint: Constraint
    grid: GridSpec
    init: Union[PeriodicField, str] = "zero"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.integrand.fiber_dim != self.constraint.fiber_dim:
            raise ShapeMismatch(
                f"integrand acts on {self.integrand.fiber_dim}-vectors, "
                f"constraint on {self.constraint.fiber_dim}-vectors"
            )
        if isinstance(self.init, str) and self.init not in ("zero", "random"):
            raise InvalidParameter(f"init must be a field, 'zero' or 'random', got {self.init!r}")


@dataclass
class SolverOptions:
    tol: float
    max_iter: int
    initial_step: float
    shrink: float
    slope: float
    max_backtracks: int
    divergence_window: int
    descent_slack: float
    init_amplitude: float = 0.1

    @classmethod
    def from_settings(cls, **overrides) -> "SolverOptions":
        values = get_settings().solver.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class IterationRecord(NamedTuple):
    iteration: int
    energy: float
    residual: float
    step: float
    backtracks: int


@dataclass
class MinimizerResult:
    """Minimiser v, its potential u in the potential formulation, and the run history"""
    field: PeriodicField
    energy: float
    el_residual: float
    iterations: int
    converged: bool
    history: List[IterationRecord] = field(default_factory=list)
    potential: Optional[PeriodicField] = None
    feasibility: float = 0.0
    stalled: bool = False
    wall_time: float = 0.0

    def summary(self) -> Dict[str, float]:
        return {
            "energy": self.energy,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasibility": self.feasibility,
            "stalled": self.stalled,
        }


def energy(f: Integrand, v: PeriodicField, mask: Optional[BallMask] = None) -> float:
    """∫ f(x, v(x)) over the torus, or over a ball when a mask is given"""
    if v.fiber_dim != f.fiber_dim:
        raise ShapeMismatch(f"field has fiber {v.fiber_dim}, integrand expects {f.fiber_dim}")
    density = f.on_field(v)
    if mask is None:
        return float(np.sum(density) * v.grid.cell_volume)
    return ball_integral(v, mask, lambda _: density)


def el_residual(f: Integrand, v: PeriodicField, opA: Optional[DiffOperator] = None, *,
                opB: Optional[DiffOperator] = None) -> float:
    """
    ‖Π ∂_z f(·, v)‖₂ with Π the zero-mean projection onto the admissible directions.

    Args:
        f: Integrand
        v: Admissible field
        opA: Constraint operator (𝒜-free formulation)
        opB: Potential operator (potential formulation)

    Returns:
        Norm of the constrained gradient; zero characterises discrete extremality
    """
    if (opA is None) == (opB is None):
        raise InvalidParameter("pass exactly one of opA or opB")
    g = f.grad_on_field(v)
    if opA is not None:
        projected = _project(kernel_projector(opA, v.grid), g, keep_mean=False)
    else:
        projected = _project(range_projector(opB, v.grid), g, keep_mean=False)
    return projected.l2_norm()


def _residual(problem: MinimizeProblem, v: PeriodicField) -> tuple:
    g = problem.constraint.tangent(problem.integrand.grad_on_field(v))
    return g, g.l2_norm()


def _energy_noise(value: float) -> float:
    return 64 * np.finfo(float).eps * max(1.0, abs(value))


def _initial_field(problem: MinimizeProblem, options: SolverOptions) -> PeriodicField:
    base = problem.constraint.base_point(problem.grid)
    if isinstance(problem.init, PeriodicField):
        if problem.init.grid != problem.grid or problem.init.fiber_dim != base.fiber_dim:
            raise ShapeMismatch("initial field does not match the problem grid and fiber")
        return base + problem.constraint.tangent(problem.init)
    if problem.init == "random":
        rng = np.random.default_rng(problem.seed)
        noise = random_band_limited(problem.grid, base.fiber_dim, rng, amplitude=options.init_amplitude)
        return base + problem.constraint.tangent(noise)
    return base


def minimize(problem: MinimizeProblem, options: Optional[SolverOptions] = None) -> MinimizerResult:
    """
    Projected gradient descent with Armijo backtracking.

    Each step is v ← v − τ Π∂_z f(·, v) with Π the zero-mean projection onto the
    admissible directions, so iterates stay feasible and keep their mean.

    Args:
        problem: Integrand, constraint, grid and initialisation
        options: Solver options (defaults from the lab config)

    Returns:
        MinimizerResult; converged when the constrained gradient norm drops below tol
    """
    options = options or SolverOptions.from_settings()
    f = problem.integrand
    start = time.time()

    v = _initial_field(problem, options)
    current = energy(f, v)
    g, residual = _residual(problem, v)
    history = [IterationRecord(0, current, residual, 0.0, 0)]
    increases = 0
    stalled = False
    iteration = 0

    logger.info(f"Minimising {f.describe()} subject to {problem.constraint.describe()} "
                f"on {problem.grid.shape}: E0={current:.6e}, residual={residual:.3e}")

    while residual >= options.tol and iteration < options.max_iter:
        iteration += 1
        step = options.initial_step
        g_sq = residual ** 2
        accepted = None
        for backtracks in range(options.max_backtracks + 1):
            trial = v - step * g
            trial_energy = energy(f, trial)
            if trial_energy <= current - options.slope * step * g_sq + options.descent_slack:
                accepted = (trial, trial_energy, backtracks)
                break
            step *= options.shrink

        if accepted is None:
            stalled = True
            logger.warning(f"Line search stalled at iteration {iteration}: residual {residual:.3e}")
            break

        v, new_energy, backtracks = accepted
        # Armijo admits rises up to descent_slack; count every rise above round-off
        if new_energy > current + _energy_noise(current):
            increases += 1
            if increases >= options.divergence_window:
                raise Diverged(f"energy increased across {increases} successive steps")
        else:
            increases = 0
        current = new_energy
        g, residual = _residual(problem, v)
        history.append(IterationRecord(iteration, current, residual, step, backtracks))
        logger.debug(f"iter {iteration}: E={current:.10e} residual={residual:.3e} τ={step:.3e}")

    # clear round-off accumulated along the iteration
    base = problem.constraint.base_point(problem.grid)
    v = base + problem.constraint.tangent(v - base)
    current = energy(f, v)
    _, residual = _residual(problem, v)

    potential = None
    if isinstance(problem.constraint, PotentialConstraint):
        potential = lift_potential(problem.constraint.opB, v - problem.constraint.datum)

    result = MinimizerResult(
        field=v,
        energy=current,
        el_residual=residual,
        iterations=iteration,
        converged=residual < options.tol,
        history=history,
        potential=potential,
        feasibility=problem.constraint.feasibility(v),
        stalled=stalled,
        wall_time=time.time() - start,
    )
    logger.info(f"Minimisation finished: converged={result.converged}, iterations={iteration}, "
                f"energy={current:.10e}, residual={residual:.3e}")
    return result


@dataclass
class CompetitorReport:
    trials: int
    min_gap: float
    violations: int
    passed: bool


def competitor_test(f: Integrand, v: PeriodicField, constraint: Constraint, n: int = 100,
                    scale: float = 1e-2, rng: Optional[np.random.Generator] = None) -> CompetitorReport:
    """
    Compare energy(v) with energy(v + Πφ) for random admissible perturbations with ‖Πφ‖₂ ≤ scale.

    Args:
        f: Integrand
        v: Candidate minimiser
        constraint: Admissible set of v
        n: Number of competitors
        scale: Largest perturbation norm
        rng: Generator for the perturbations

    Returns:
        CompetitorReport with the smallest energy gain seen
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    slack = get_settings().solver.descent_slack
    base_energy = energy(f, v)
    gaps = []
    for _ in range(n):
        phi = constraint.tangent(random_band_limited(v.grid, v.fiber_dim, rng))
        norm = phi.l2_norm()
        if norm == 0:
            continue
        phi = phi * (scale * rng.random() / norm)
        gaps.append(energy(f, v + phi) - base_energy)
    gaps = np.array(gaps) if gaps else np.zeros(1)
    violations = int(np.sum(gaps < -slack))
    return CompetitorReport(len(gaps), float(gaps.min()), violations, violations == 0)
