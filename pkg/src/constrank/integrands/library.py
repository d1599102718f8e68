"""
Linear-growth integrands
Closed-form integrands f(x, z) with first and second z-derivatives, the reference
integrand E and the V_p modulus.
"""

import logging
import math
from abc import ABC, abstractmethod
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from ..core.errors import IntegrandError, InvalidParameter, ShapeMismatch
from ..fields.grid import GridSpec, PeriodicField, random_band_limited

logger = logging.getLogger(__name__)


def eval_E(z: np.ndarray) -> np.ndarray:
    """E(z) = √(1+|z|²) − 1, evaluated without cancellation near 0"""
    t = np.sum(np.asarray(z, dtype=float) ** 2, axis=-1)
    return t / (np.sqrt(1.0 + t) + 1.0)


def grad_E(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = np.sqrt(1.0 + np.sum(z ** 2, axis=-1))
    return z / s[..., None]


def hess_E(z: np.ndarray) -> np.ndarray:
    """(Id − z⊗z/(1+|z|²)) / √(1+|z|²)"""
    z = np.asarray(z, dtype=float)
    s = np.sqrt(1.0 + np.sum(z ** 2, axis=-1))[..., None, None]
    eye = np.eye(z.shape[-1])
    return eye / s - z[..., :, None] * z[..., None, :] / s ** 3


def eval_Vp(z: np.ndarray, p: float) -> np.ndarray:
    """V_p(z) = (1+|z|²)^{(p−2)/4} z"""
    if not 1.0 < p < math.inf:
        raise InvalidParameter(f"p must lie in (1, ∞), got {p}")
    z = np.asarray(z, dtype=float)
    return (1.0 + np.sum(z ** 2, axis=-1))[..., None] ** ((p - 2.0) / 4.0) * z


class IntegrandFamily(Enum):
    """Built-in integrand families"""
    ELL_E = "ellE"
    PERTURBED = "perturbed"
    XDEP = "xdep"
    OFFSET = "offset"
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    NEGATED_E = "negE"
    SHIFTED = "shifted"


class Integrand(ABC):
    """f(x, z) on points x ∈ ℝⁿ and fiber vectors z ∈ ℝᵐ, vectorised over leading axes"""

    family: IntegrandFamily

    def __init__(self, fiber_dim: int, L: float, ell: float, lipschitz_x: float = 0.0):
        if fiber_dim < 1:
            raise InvalidParameter(f"fiber_dim must be positive, got {fiber_dim}")
        self.fiber_dim = fiber_dim
        self.L = L
        self.ell = ell
        self.lipschitz_x = lipschitz_x

    @property
    def x_dependent(self) -> bool:
        return False

    def _check(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.fiber_dim:
            raise ShapeMismatch(f"{self.describe()} expects fiber {self.fiber_dim}, got {z.shape[-1]}")
        return z

    @abstractmethod
    def eval(self, x: Optional[np.ndarray], z: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def grad(self, x: Optional[np.ndarray], z: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hess(self, x: Optional[np.ndarray], z: np.ndarray) -> np.ndarray:
        ...

    def on_field(self, v: PeriodicField) -> np.ndarray:
        """f(x, v(x)) at every grid point"""
        x = v.grid.coordinates() if self.x_dependent else None
        return self.eval(x, v.values)

    def grad_on_field(self, v: PeriodicField) -> PeriodicField:
        x = v.grid.coordinates() if self.x_dependent else None
        return v.with_values(self.grad(x, v.values))

    def describe(self) -> str:
        return f"{self.family.value}(L={self.L:g}, ℓ={self.ell:g})"


class EllE(Integrand):
    """ℓE"""
    family = IntegrandFamily.ELL_E

    def __init__(self, fiber_dim: int, ell: float = 1.0):
        if ell <= 0:
            raise InvalidParameter(f"ℓ must be positive, got {ell}")
        super().__init__(fiber_dim, L=ell, ell=ell)

    def eval(self, x, z):
        return self.ell * eval_E(self._check(z))

    def grad(self, x, z):
        return self.ell * grad_E(self._check(z))

    def hess(self, x, z):
        return self.ell * hess_E(self._check(z))


class PerturbedE(Integrand):
    """ℓE + μ·½zᵀQz·exp(−|z|²/ρ²), a non-convex candidate when Q is indefinite"""
    family = IntegrandFamily.PERTURBED

    def __init__(self, fiber_dim: int, ell: float = 1.0, mu: float = 0.1,
                 Q: Optional[np.ndarray] = None, rho: float = 1.0):
        Q = np.eye(fiber_dim) if Q is None else np.asarray(Q, dtype=float)
        if Q.shape != (fiber_dim, fiber_dim):
            raise ShapeMismatch(f"Q must be {fiber_dim}x{fiber_dim}, got {Q.shape}")
        if rho <= 0 or ell <= 0:
            raise InvalidParameter("ρ and ℓ must be positive")
        self.Q = 0.5 * (Q + Q.T)
        self.mu = mu
        self.rho = rho
        # sup_t ½t²exp(−t²/ρ²) = ρ²/(2e)
        bump = abs(mu) * np.linalg.norm(self.Q, 2) * rho ** 2 / (2 * math.e)
        super().__init__(fiber_dim, L=ell + bump, ell=ell)

    def _parts(self, z):
        q = np.einsum("...i,ij,...j->...", z, self.Q, z)
        chi = np.exp(-np.sum(z ** 2, axis=-1) / self.rho ** 2)
        return q, chi

    def eval(self, x, z):
        z = self._check(z)
        q, chi = self._parts(z)
        return self.ell * eval_E(z) + self.mu * 0.5 * q * chi

    def grad(self, x, z):
        z = self._check(z)
        q, chi = self._parts(z)
        Qz = z @ self.Q
        dchi = -2.0 * z / self.rho ** 2 * chi[..., None]
        return self.ell * grad_E(z) + self.mu * (chi[..., None] * Qz + 0.5 * q[..., None] * dchi)

    def hess(self, x, z):
        z = self._check(z)
        q, chi = self._parts(z)
        Qz = z @ self.Q
        dchi = -2.0 * z / self.rho ** 2 * chi[..., None]
        eye = np.eye(self.fiber_dim)
        d2chi = chi[..., None, None] * (
            4.0 * z[..., :, None] * z[..., None, :] / self.rho ** 4 - 2.0 * eye / self.rho ** 2
        )
        bump = (chi[..., None, None] * self.Q
                + Qz[..., :, None] * dchi[..., None, :]
                + dchi[..., :, None] * Qz[..., None, :]
                + 0.5 * q[..., None, None] * d2chi)
        return self.ell * hess_E(z) + self.mu * bump


class XDependentE(Integrand):
    """a(x)E(z) with a(x) = ℓ + amplitude·sin²(π⟨k,x⟩) ≥ ℓ"""
    family = IntegrandFamily.XDEP

    def __init__(self, fiber_dim: int, ell: float = 1.0, amplitude: float = 0.5,
                 frequency: Optional[List[int]] = None):
        if ell <= 0 or amplitude < 0:
            raise InvalidParameter("ℓ must be positive and the amplitude non-negative")
        self.amplitude = amplitude
        self.frequency = np.asarray(frequency if frequency is not None else [1], dtype=float)
        lip = amplitude * math.pi * float(np.linalg.norm(self.frequency))
        super().__init__(fiber_dim, L=ell + amplitude, ell=ell, lipschitz_x=lip)

    @property
    def x_dependent(self) -> bool:
        return True

    def weight(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self.frequency
        if k.size != x.shape[-1]:
            k = np.resize(k, x.shape[-1])
        return self.ell + self.amplitude * np.sin(np.pi * (x @ k)) ** 2

    def _weight_for(self, x, z):
        if x is None:
            raise IntegrandError("x-dependent integrand evaluated without points")
        return np.broadcast_to(self.weight(x), z.shape[:-1])

    def eval(self, x, z):
        z = self._check(z)
        return self._weight_for(x, z) * eval_E(z)

    def grad(self, x, z):
        z = self._check(z)
        return self._weight_for(x, z)[..., None] * grad_E(z)

    def hess(self, x, z):
        z = self._check(z)
        return self._weight_for(x, z)[..., None, None] * hess_E(z)


class OffsetIntegrand(Integrand):
    """g(x, z) := f(x, S(x) + z) for a smooth offset S sampled on a grid"""
    family = IntegrandFamily.OFFSET

    def __init__(self, base: Integrand, offset: PeriodicField):
        if offset.fiber_dim != base.fiber_dim:
            raise ShapeMismatch(f"offset has fiber {offset.fiber_dim}, integrand {base.fiber_dim}")
        self.base = base
        self.offset = offset
        sup = offset.sup_norm()
        super().__init__(base.fiber_dim, L=base.L * (1.0 + sup), ell=base.ell,
                         lipschitz_x=base.lipschitz_x)

    @property
    def x_dependent(self) -> bool:
        return True

    def offset_at(self, x: np.ndarray) -> np.ndarray:
        """S at the nearest grid point (exact on grid coordinates)"""
        grid = self.offset.grid
        idx = np.rint(np.asarray(x, dtype=float) / grid.spacing).astype(int) % grid.points_per_axis
        return self.offset.values[tuple(idx[..., i] for i in range(grid.dim_n))]

    def _shift(self, x, z):
        if x is None:
            raise IntegrandError("offset integrand evaluated without points")
        return self._check(z) + self.offset_at(x)

    def eval(self, x, z):
        return self.base.eval(x, self._shift(x, z))

    def grad(self, x, z):
        return self.base.grad(x, self._shift(x, z))

    def hess(self, x, z):
        return self.base.hess(x, self._shift(x, z))

    def describe(self) -> str:
        return f"offset[{self.base.describe()}, |S|∞={self.offset.sup_norm():.3g}]"


class Quadratic(Integrand):
    """½|z|², quadratic growth"""
    family = IntegrandFamily.QUADRATIC

    def __init__(self, fiber_dim: int):
        super().__init__(fiber_dim, L=math.inf, ell=0.0)

    def eval(self, x, z):
        return 0.5 * np.sum(self._check(z) ** 2, axis=-1)

    def grad(self, x, z):
        return np.array(self._check(z))

    def hess(self, x, z):
        z = self._check(z)
        return np.broadcast_to(np.eye(self.fiber_dim), z.shape + (self.fiber_dim,)).copy()


class Linear(Integrand):
    """⟨ζ, z⟩"""
    family = IntegrandFamily.LINEAR

    def __init__(self, zeta: np.ndarray):
        self.zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        super().__init__(self.zeta.size, L=float(np.linalg.norm(self.zeta)), ell=0.0)

    def eval(self, x, z):
        return self._check(z) @ self.zeta

    def grad(self, x, z):
        z = self._check(z)
        return np.broadcast_to(self.zeta, z.shape).copy()

    def hess(self, x, z):
        z = self._check(z)
        return np.zeros(z.shape + (self.fiber_dim,))


class NegatedE(Integrand):
    """−E, concave and therefore not quasiconvex"""
    family = IntegrandFamily.NEGATED_E

    def __init__(self, fiber_dim: int):
        super().__init__(fiber_dim, L=1.0, ell=0.0)

    def eval(self, x, z):
        return -eval_E(self._check(z))

    def grad(self, x, z):
        return -grad_E(self._check(z))

    def hess(self, x, z):
        return -hess_E(self._check(z))


class IntegrandConfig(BaseModel):
    """Integrand description as found in run configs"""
    family: IntegrandFamily = IntegrandFamily.ELL_E
    ell: float = 1.0
    mu: float = 0.1
    rho: float = 1.0
    q: Optional[List[List[float]]] = None
    seed: Optional[int] = None
    amplitude: float = 0.5
    frequency: Optional[List[int]] = None
    zeta: Optional[List[float]] = None
    base: Optional["IntegrandConfig"] = None
    offset_amplitude: float = 0.5
    offset_max_freq: int = 2
    offset_seed: int = 0


def _random_form(fiber_dim: int, seed: int) -> np.ndarray:
    """Random symmetric form of unit spectral norm"""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((fiber_dim, fiber_dim))
    Q = 0.5 * (M + M.T)
    return Q / np.linalg.norm(Q, 2)


def integrand_from_config(config: IntegrandConfig, fiber_dim: int,
                          grid: Optional[GridSpec] = None) -> Integrand:
    """
    Build an integrand from its config.

    Args:
        config: Family and parameters
        fiber_dim: Dimension of the fiber V
        grid: Grid for the offset family's S(x)

    Returns:
        The integrand instance
    """
    family = IntegrandFamily(config.family)
    if family == IntegrandFamily.ELL_E:
        return EllE(fiber_dim, config.ell)
    if family == IntegrandFamily.PERTURBED:
        if config.q is not None:
            Q = np.array(config.q, dtype=float)
        elif config.seed is not None:
            Q = _random_form(fiber_dim, config.seed)
        else:
            Q = np.eye(fiber_dim)
        return PerturbedE(fiber_dim, config.ell, config.mu, Q, config.rho)
    if family == IntegrandFamily.XDEP:
        return XDependentE(fiber_dim, config.ell, config.amplitude, config.frequency)
    if family == IntegrandFamily.OFFSET:
        if grid is None:
            raise IntegrandError("the offset family needs a grid for S(x)")
        base = integrand_from_config(config.base or IntegrandConfig(), fiber_dim, grid)
        S = random_band_limited(grid, fiber_dim, np.random.default_rng(config.offset_seed),
                                max_freq=config.offset_max_freq, zero_mean=False,
                                amplitude=config.offset_amplitude)
        return OffsetIntegrand(base, S)
    if family == IntegrandFamily.QUADRATIC:
        return Quadratic(fiber_dim)
    if family == IntegrandFamily.LINEAR:
        zeta = config.zeta if config.zeta is not None else [1.0] + [0.0] * (fiber_dim - 1)
        return Linear(np.array(zeta))
    if family == IntegrandFamily.NEGATED_E:
        return NegatedE(fiber_dim)
    raise IntegrandError(f"Integrand family {family.value} cannot be built from a config")


class ShiftedIntegrand(Integrand):
    """
    f_w(z) = f(x₀, w+z) − f(x₀, w) − ∂_z f(x₀, w)·z.

    Vanishes to second order at z = 0; upper_constant holds the measured c₁ with |f_w| ≤ c₁E
    once make_shifted has probed it.
    """
    family = IntegrandFamily.SHIFTED

    def __init__(self, base: Integrand, x0: Optional[np.ndarray], w: np.ndarray):
        self.base = base
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.w.shape != (base.fiber_dim,):
            raise ShapeMismatch(f"shift w must have length {base.fiber_dim}, got {self.w.shape}")
        self.value_w = float(base.eval(self.x0, self.w))
        self.grad_w = base.grad(self.x0, self.w)
        self.upper_constant: Optional[float] = None
        super().__init__(base.fiber_dim, L=base.L, ell=base.ell)

    def eval(self, x, z):
        z = self._check(z)
        return self.base.eval(self.x0, self.w + z) - self.value_w - z @ self.grad_w

    def grad(self, x, z):
        z = self._check(z)
        return self.base.grad(self.x0, self.w + z) - self.grad_w

    def hess(self, x, z):
        return self.base.hess(self.x0, self.w + self._check(z))

    def describe(self) -> str:
        return f"shifted[{self.base.describe()}, |w|={np.linalg.norm(self.w):.3g}]"
