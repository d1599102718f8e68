"""
Excess Energy
𝓔(w, x₀, R) = R^{2α} + ⨏_{B_R(x₀)} E(w − (w)_{x₀,R}) and its decay along geometric radii.
Grid fields carry no singular part, so that summand of the excess is absent.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core.config import get_settings
from ..core.errors import InvalidParameter, RadiusTooSmall
from ..fields.grid import PeriodicField
from ..fields.masks import BallMask, ball_average, field_average
from ..integrands.library import eval_E
from ..symbols.operators import as_sequence

logger = logging.getLogger(__name__)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise InvalidParameter(f"α must lie in (0, 1), got {alpha}")


def excess(w: PeriodicField, x0: Sequence[float], R: float, alpha: Optional[float] = None) -> float:
    """
    Excess of a field on B_R(x₀).

    Args:
        w: The field (typically ℬu or an 𝒜-free v)
        x0: Ball center
        R: Radius, at least the configured number of grid cells
        alpha: Hölder exponent in (0, 1); defaults to the lab setting

    Returns:
        R^{2α} + ⨏_{B_R} E(w − (w)_{x₀,R})
    """
    settings = get_settings().regularity
    alpha = settings.alpha if alpha is None else alpha
    _check_alpha(alpha)
    floor = settings.min_excess_cells
    if R < floor * w.grid.spacing:
        raise RadiusTooSmall(f"excess radius {R} is below {floor} cells ({floor * w.grid.spacing})")
    center = tuple(as_sequence(x0, w.grid.dim_n))
    mask = BallMask(w.grid, center, R, min_cells=floor)
    average = field_average(w, mask)
    return float(R ** (2 * alpha) + ball_average(w.values - average, mask, eval_E))


@dataclass
class ExcessReport:
    """Excess at the radii R₀τ^j around one center"""
    center: List[float]
    radii: List[float]
    alpha: float
    tau: float
    excess: List[float]
    decay_exponent: float
    steps: List[bool] = field(default_factory=list)
    smallness: bool = False
    eps: float = 1.0

    @property
    def decay_holds(self) -> bool:
        return all(self.steps)

    @property
    def regular(self) -> bool:
        return self.smallness and self.decay_holds

    def to_dict(self) -> dict:
        out = asdict(self)
        out["decay_holds"] = self.decay_holds
        out["regular"] = self.regular
        return out


def excess_scan(w: PeriodicField, centers: Sequence[Sequence[float]], R0: float,
                tau: Optional[float] = None, depth: int = 2,
                alpha: Optional[float] = None, eps: Optional[float] = None) -> List[ExcessReport]:
    """
    Excess at R₀, R₀τ, …, R₀τ^depth around each center.

    A center is regular-regime when 𝓔(R₀) < ε and 𝓔(τR) ≤ 2τ^{2α}𝓔(R) holds at every step.

    Args:
        w: The field
        centers: Ball centers
        R0: Largest radius
        tau: Ratio in (0, 1/16)
        depth: Number of shrinking steps
        alpha: Hölder exponent in (0, 1)
        eps: Smallness threshold for the largest ball

    Returns:
        One ExcessReport per center
    """
    settings = get_settings().regularity
    tau = settings.tau if tau is None else tau
    alpha = settings.alpha if alpha is None else alpha
    eps = settings.eps_excess if eps is None else eps
    _check_alpha(alpha)
    if not 0 < tau < 1.0 / 16:
        raise InvalidParameter(f"τ must lie in (0, 1/16), got {tau}")
    if depth < 1:
        raise InvalidParameter(f"depth must be at least 1, got {depth}")
    smallest = R0 * tau ** depth
    if smallest < settings.min_excess_cells * w.grid.spacing:
        raise InvalidParameter(
            f"R₀τ^depth = {smallest:.4e} is below {settings.min_excess_cells} cells; refine the grid"
        )

    radii = [R0 * tau ** j for j in range(depth + 1)]
    reports = []
    for x0 in centers:
        values = [excess(w, x0, R, alpha) for R in radii]
        steps = [
            values[j + 1] <= 2 * tau ** (2 * alpha) * values[j]
            for j in range(depth)
        ]
        slope = float(np.polyfit(np.log(radii), np.log(values), 1)[0])
        report = ExcessReport(
            center=[float(c) for c in x0],
            radii=radii,
            alpha=alpha,
            tau=tau,
            excess=values,
            decay_exponent=slope,
            steps=[bool(s) for s in steps],
            smallness=bool(values[0] < eps),
            eps=eps,
        )
        logger.debug(f"Excess at {report.center}: {['%.4e' % v for v in values]}, β̂={slope:.4f}, "
                     f"regular={report.regular}")
        reports.append(report)
    return reports


@dataclass
class RegularSetReport:
    """Empirical regular/singular split of the scanned centers"""
    regular: List[List[float]]
    singular: List[List[float]]

    @property
    def fraction(self) -> float:
        total = len(self.regular) + len(self.singular)
        return len(self.regular) / total if total else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fraction"] = self.fraction
        return out


def regular_set_scan(w: PeriodicField, centers: Sequence[Sequence[float]], R0: float,
                     tau: Optional[float] = None, depth: int = 2,
                     alpha: Optional[float] = None, eps: Optional[float] = None) -> RegularSetReport:
    """Split centers by the regular-regime flag of excess_scan"""
    reports = excess_scan(w, centers, R0, tau, depth, alpha, eps)
    regular = [r.center for r in reports if r.regular]
    singular = [r.center for r in reports if not r.regular]
    logger.info(f"Regular set scan: {len(regular)}/{len(reports)} centers in the regular regime")
    return RegularSetReport(regular, singular)


def holder_estimate(report: ExcessReport) -> float:
    """Campanato-type exponent β̂/2; oscillation of w decays like R^{β̂/2} where E is quadratic"""
    return report.decay_exponent / 2.0
