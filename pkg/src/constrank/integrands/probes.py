"""
Integrand probes
Measured constants and falsification tests for the structural hypotheses on integrands:
growth, derivative consistency, recession, shifted estimates, wave-cone ellipticity
and quasiconvexity.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import get_settings
from ..core.errors import InvalidParameter
from ..fields.grid import GridSpec, PeriodicField, random_band_limited
from ..fields.masks import BallMask, ball_average
from ..fields.spectral import apply_operator
from ..symbols.calculus import WaveConeSample
from ..symbols.operators import DiffOperator
from .library import Integrand, OffsetIntegrand, ShiftedIntegrand, eval_E

logger = logging.getLogger(__name__)

DEFAULT_LADDER = tuple(10.0 ** k for k in range(0, 8))


class ProbeRecord(BaseModel):
    """One probe outcome as written to reports"""
    model_config = ConfigDict(populate_by_name=True)

    probe: str
    value: float
    tolerance: float
    passed: bool = Field(alias="pass")
    details: Dict[str, Any] = Field(default_factory=dict)


@dataclass
class RecessionEstimate:
    """f^∞(x, z) read off a t-ladder"""
    value: float
    cauchy_gap: float
    non_cauchy: bool
    ladder: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)


def _random_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _random_points(f: Integrand, rng: np.random.Generator, count: int, dim_n: int) -> Optional[np.ndarray]:
    if not f.x_dependent:
        return None
    if isinstance(f, OffsetIntegrand):
        grid = f.offset.grid
        return rng.integers(0, grid.points_per_axis, size=(count, grid.dim_n)) * grid.spacing
    return rng.random((count, dim_n))


# E calculus

def modular_mean_bound(f: PeriodicField, mask: Optional[BallMask] = None) -> Tuple[float, float]:
    """
    (⨏|f|, √(e²+2e)) with e = ⨏E(f).

    Args:
        f: Field to average
        mask: Ball to average over; the whole torus when omitted

    Returns:
        (lhs, rhs) with lhs ≤ rhs up to quadrature error
    """
    if mask is None:
        lhs = float(f.pointwise_norm().mean())
        e = float(eval_E(f.values).mean())
    else:
        lhs = ball_average(f, mask)
        e = ball_average(f, mask, eval_E)
    return lhs, float(np.sqrt(e * e + 2.0 * e))


def e_comparison_scan(low: float = 1e-6, high: float = 1e6, count: int = 2001) -> Tuple[float, float]:
    """min and max of E(z)/min{|z|,|z|²} over a log grid of moduli"""
    t = np.logspace(np.log10(low), np.log10(high), count)
    ratio = eval_E(t[:, None]) / np.minimum(t, t ** 2)
    return float(ratio.min()), float(ratio.max())


def e_calculus_constants(rng: np.random.Generator, n_pairs: int = 10_000,
                         dim: int = 3) -> Dict[str, float]:
    """
    Measured constants in E(z+w) ≤ c(E(z)+E(w)) and E(tz) ≤ c·max{t,t²}E(z).

    Moduli are drawn log-uniformly over [1e-3, 1e3].
    """
    radii = 10.0 ** rng.uniform(-3, 3, size=(n_pairs, 2))
    z = _random_directions(rng, n_pairs, dim) * radii[:, :1]
    w = _random_directions(rng, n_pairs, dim) * radii[:, 1:]
    triangle = eval_E(z + w) / (eval_E(z) + eval_E(w))

    t = 10.0 ** rng.uniform(-3, 3, size=n_pairs)
    scaling = eval_E(t[:, None] * z) / (np.maximum(t, t ** 2) * eval_E(z))
    return {"triangle": float(triangle.max()), "scaling": float(scaling.max())}


# Growth and derivatives

def growth_probe(f: Integrand, rng: np.random.Generator, n_probes: int = 1000,
                 dim_n: int = 2) -> ProbeRecord:
    """sup |f(x,z)| / (1+|z|) against L"""
    radii = 10.0 ** rng.uniform(-3, 4, size=n_probes)
    z = _random_directions(rng, n_probes, f.fiber_dim) * radii[:, None]
    x = _random_points(f, rng, n_probes, dim_n)
    measured = float(np.max(np.abs(f.eval(x, z)) / (1.0 + radii)))
    return ProbeRecord(probe="growth", value=measured, tolerance=f.L,
                       passed=measured <= f.L * (1 + 1e-12), details={"integrand": f.describe()})


def offset_growth(f: OffsetIntegrand, rng: np.random.Generator, n_probes: int = 1000) -> ProbeRecord:
    """Growth of g(x,z) = f(x,S(x)+z) against base.L·(1+‖S‖∞)"""
    record = growth_probe(f, rng, n_probes)
    bound = f.base.L * (1.0 + f.offset.sup_norm())
    return ProbeRecord(probe="offset_growth", value=record.value, tolerance=bound,
                       passed=record.value <= bound * (1 + 1e-12),
                       details={"sup_S": f.offset.sup_norm()})


def gradient_bound_probe(f: Integrand, rng: np.random.Generator, n_probes: int = 1000,
                         dim_n: int = 2) -> ProbeRecord:
    """sup |∂_z f| / L; linear growth with rank-one convexity keeps this bounded"""
    radii = 10.0 ** rng.uniform(-3, 4, size=n_probes)
    z = _random_directions(rng, n_probes, f.fiber_dim) * radii[:, None]
    x = _random_points(f, rng, n_probes, dim_n)
    ratio = float(np.max(np.linalg.norm(f.grad(x, z), axis=-1)) / f.L)
    return ProbeRecord(probe="gradient_bound", value=ratio, tolerance=1.0, passed=ratio <= 1.0 + 1e-9)


def _central_gradient(fn, x, z: np.ndarray, step: float) -> np.ndarray:
    out = []
    for i in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[i] = step
        out.append((fn(x, z + e) - fn(x, z - e)) / (2.0 * step))
    return np.stack(out, axis=-1)


def derivative_consistency(f: Integrand, rng: np.random.Generator, n_probes: int = 100,
                           dim_n: int = 2, scale: float = 2.0) -> Dict[str, float]:
    """
    Compare grad and hess with central differences of eval and grad.

    Errors are measured relative to max(1, |exact|) at each probe; the worst probe is returned.
    """
    step = get_settings().integrands.fd_step
    z = rng.standard_normal((n_probes, f.fiber_dim)) * scale
    x = _random_points(f, rng, n_probes, dim_n)

    g = f.grad(x, z)
    g_fd = _central_gradient(f.eval, x, z, step)
    grad_err = np.linalg.norm(g - g_fd, axis=-1) / np.maximum(1.0, np.linalg.norm(g, axis=-1))

    H = f.hess(x, z)
    H_fd = _central_gradient(f.grad, x, z, step)
    hess_err = np.linalg.norm(H - H_fd, axis=(-2, -1)) / np.maximum(1.0, np.linalg.norm(H, axis=(-2, -1)))
    result = {"grad": float(grad_err.max()), "hess": float(hess_err.max())}
    logger.debug(f"Derivative consistency for {f.describe()}: {result}")
    return result


def hessian_modulus_probe(f: Integrand, delta: float, M: float, rng: np.random.Generator,
                          n_pairs: int = 2000, dim_n: int = 2) -> float:
    """Empirical ω(δ) = sup |∂²f(x,z) − ∂²f(y,w)| over pairs within δ with |z| ≤ M"""
    if delta <= 0 or M <= 0:
        raise InvalidParameter("δ and M must be positive")
    z = _random_directions(rng, n_pairs, f.fiber_dim) * (M * rng.random(n_pairs))[:, None]
    w = z + _random_directions(rng, n_pairs, f.fiber_dim) * (delta * rng.random(n_pairs))[:, None]
    x = _random_points(f, rng, n_pairs, dim_n)
    y = None
    if x is not None:
        if isinstance(f, OffsetIntegrand):
            y = x
        else:
            y = x + _random_directions(rng, n_pairs, x.shape[-1]) * (delta * rng.random(n_pairs))[:, None]
    diff = f.hess(x, z) - f.hess(y, w)
    return float(np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1))))


# Recession

def recession(f: Integrand, x: Optional[np.ndarray], z: np.ndarray,
              t_ladder: Sequence[float] = DEFAULT_LADDER) -> RecessionEstimate:
    """
    f^∞(x, z) ≈ f(x, tz)/t at the top of an increasing ladder.

    Args:
        f: Integrand
        x: Point (ignored for x-independent integrands)
        z: Fiber vector
        t_ladder: Increasing scales, the last at least 1e6

    Returns:
        RecessionEstimate; non_cauchy is set when the last two estimates differ by more
        than the configured relative tolerance
    """
    ladder = np.asarray(t_ladder, dtype=float)
    if ladder.size < 2 or np.any(np.diff(ladder) <= 0):
        raise InvalidParameter("t_ladder must be increasing with at least two entries")
    if ladder[-1] < 1e6:
        raise InvalidParameter(f"t_ladder must reach 1e6, ends at {ladder[-1]:g}")

    z = np.asarray(z, dtype=float)
    values = np.array([float(f.eval(x, t * z)) / t for t in ladder])
    gap = abs(values[-1] - values[-2])
    scale = max(abs(values[-1]), 1e-300)
    tol = get_settings().integrands.cauchy_tol
    non_cauchy = gap > tol * scale
    if non_cauchy:
        logger.warning(f"Recession of {f.describe()} not Cauchy at z={z}: gap {gap:.3e}")
    return RecessionEstimate(float(values[-1]), float(gap), bool(non_cauchy),
                             ladder.tolist(), values.tolist())


# Shifted integrands

def make_shifted(f: Integrand, x0: Optional[np.ndarray], w: np.ndarray,
                 rng: Optional[np.random.Generator] = None, n_dirs: int = 32) -> ShiftedIntegrand:
    """
    Build f_w and measure c₁ with |f_w(z)| ≤ c₁E(z) over |z| ∈ [1e-2, 1e3].

    Args:
        f: Base integrand
        x0: Freezing point
        w: Shift, |w| ≤ configured bound
        rng: Generator for probe directions
        n_dirs: Number of probe directions

    Returns:
        ShiftedIntegrand with upper_constant set
    """
    bound = get_settings().integrands.shift_bound
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.linalg.norm(w) > bound:
        raise InvalidParameter(f"|w| = {np.linalg.norm(w):.3g} exceeds the shift bound {bound}")

    fw = ShiftedIntegrand(f, x0, w)
    rng = rng if rng is not None else np.random.default_rng(0)
    radii = np.logspace(-2, 3, 60)
    dirs = _random_directions(rng, n_dirs, f.fiber_dim)
    z = dirs[:, None, :] * radii[None, :, None]
    fw.upper_constant = float(np.max(np.abs(fw.eval(None, z)) / eval_E(z)))
    logger.debug(f"Shifted {f.describe()} at |w|={np.linalg.norm(w):.3g}: c1={fw.upper_constant:.4g}")
    return fw


def shifted_taylor_ladder(fw: ShiftedIntegrand, direction: np.ndarray,
                          radii: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)) -> Dict[str, Any]:
    """f_w(sẑ)/s² against ½∂²f(x₀,w)[ẑ,ẑ] as s → 0"""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    target = 0.5 * float(d @ fw.base.hess(fw.x0, fw.w) @ d)
    ratios = [float(fw.eval(None, s * d)) / s ** 2 for s in radii]
    return {"target": target, "ratios": ratios, "errors": [abs(r - target) for r in ratios]}


# Ellipticity and quasiconvexity

def check_wave_cone_ellipticity(f: Integrand, x: Optional[np.ndarray], z: np.ndarray,
                                cone_samples: Union[WaveConeSample, np.ndarray]) -> float:
    """
    Worst Rayleigh quotient ∂²_z f(x,z)[v,v] over sampled unit v ∈ Λ_𝒜.

    A WaveConeSample contributes the minimum over each sampled kernel subspace; a plain
    array contributes its rows as individual directions.
    """
    H = np.asarray(f.hess(x, np.asarray(z, dtype=float)))
    if isinstance(cone_samples, WaveConeSample):
        quotients = [
            float(np.linalg.eigvalsh(basis.T @ H @ basis).min())
            for basis in cone_samples.bases if basis.size
        ]
    else:
        v = np.atleast_2d(np.asarray(cone_samples, dtype=float))
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        quotients = list(np.einsum("ki,ij,kj->k", v, H, v))

    if not quotients:
        logger.warning("Wave cone sample is empty; ellipticity is vacuous")
        return float("inf")
    worst = float(min(quotients))
    if worst <= get_settings().integrands.degenerate_tol:
        logger.warning(f"Degenerate wave-cone ellipticity for {f.describe()}: {worst:.3e}")
    return worst


def quasiconvexity_probe(f: Integrand, opB: DiffOperator, z: np.ndarray, trials: int,
                         grid: GridSpec, rng: Optional[np.random.Generator] = None,
                         x0: Optional[np.ndarray] = None, max_freq: int = 3) -> float:
    """
    Jensen-type falsification test ⨏ f(x₀, z+ℬφ) − f(x₀, z) over random potentials φ.

    Each trial draws one band-limited φ and tests it at every configured amplitude of
    sup|ℬφ|; the trivial field φ = 0 is never used.

    Returns:
        The smallest margin seen; negative values falsify quasiconvexity
    """
    if trials < 100:
        raise InvalidParameter(f"trials must be at least 100, got {trials}")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise InvalidParameter("z must be finite")
    rng = rng if rng is not None else np.random.default_rng(0)
    x0 = np.zeros(grid.dim_n) if x0 is None else np.asarray(x0, dtype=float)
    amplitudes = get_settings().integrands.probe_amplitudes
    base = float(f.eval(x0, z))
    max_freq = min(max_freq, grid.points_per_axis // 2 - 1)

    margin = np.inf
    for _ in range(trials):
        phi = random_band_limited(grid, opB.dim_from, rng, max_freq=max_freq)
        Bphi = apply_operator(opB, phi).values
        sup = np.linalg.norm(Bphi, axis=-1).max()
        if sup == 0:
            continue
        for amplitude in amplitudes:
            values = f.eval(x0, z + (amplitude / sup) * Bphi)
            margin = min(margin, float(values.mean()) - base)
    logger.info(f"Quasiconvexity probe for {f.describe()} at z={z}: margin {margin:.3e}")
    return float(margin)
