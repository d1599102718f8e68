"""
Error hierarchy for the constrank laboratory.
Every failure raised by a lab operation derives from ConstrankError so the runner
can turn it into a failed run result instead of crashing a batch.
"""


class ConstrankError(Exception):
    """Base class for all lab errors"""


class InvalidParameter(ConstrankError, ValueError):
    """A parameter lies outside the range an operation accepts"""


class ConfigError(ConstrankError):
    """Malformed run configuration or manifest"""


# Symbol calculus
class DegenerateOperator(ConstrankError):
    """Operator symbol vanishes identically"""


class RankMismatch(ConstrankError):
    """Characteristic coefficients disagree with the claimed rank"""


class NotConstantRank(ConstrankError):
    """Operator symbol changes rank on the unit sphere"""


class NotAPotential(ConstrankError):
    """Two operators do not form an exact symbol sequence"""


# Spectral fields
class ShapeMismatch(ConstrankError):
    """Field fiber or grid does not match the operator"""


class NotAFree(ConstrankError):
    """Field violates the differential constraint beyond tolerance"""


class RadiusTooSmall(ConstrankError):
    """Ball radius or mollifier width below the grid resolution floor"""


# Integrands
class IntegrandError(ConstrankError):
    """Integrand construction or evaluation failed"""


# Solvers
class Diverged(ConstrankError):
    """Energy increased across consecutive accepted steps"""


class IllConditioned(ConstrankError):
    """Conjugate gradient exceeded its iteration cap"""


class HypothesisViolated(ConstrankError):
    """Input does not satisfy the hypothesis of an experiment"""


# Regularity harness
class NotExtremal(ConstrankError):
    """Field is not an Euler-Lagrange extremal within tolerance"""


class KernelBasisDeficient(ConstrankError):
    """Least-squares system over the kernel basis is rank deficient"""


class NotInImage(ConstrankError):
    """Average cannot be written as the operator applied to a polynomial"""
