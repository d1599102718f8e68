from .excess import (
    ExcessReport,
    RegularSetReport,
    excess,
    excess_scan,
    holder_estimate,
    regular_set_scan,
)
from .inequalities import (
    InequalityReport,
    fit_polynomial,
    kernel_basis,
    verify_caccioppoli,
    verify_korn_vp,
    verify_poincare_modular,
)
