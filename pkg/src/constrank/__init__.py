"""
constrank
Numerical laboratory for constant-rank differential operators and linear-growth
variational problems on periodic grids.
"""

__version__ = "0.1.0"

from .core.errors import ConstrankError  # noqa: E402
from .fields.grid import GridSpec, PeriodicField  # noqa: E402
from .symbols.operators import DiffOperator, load_operator, named_operator  # noqa: E402
