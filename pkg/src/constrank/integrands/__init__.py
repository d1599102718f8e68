from .library import (
    EllE,
    Integrand,
    IntegrandConfig,
    IntegrandFamily,
    Linear,
    NegatedE,
    OffsetIntegrand,
    PerturbedE,
    Quadratic,
    ShiftedIntegrand,
    XDependentE,
    eval_E,
    eval_Vp,
    grad_E,
    hess_E,
    integrand_from_config,
)
from .probes import (
    ProbeRecord,
    RecessionEstimate,
    check_wave_cone_ellipticity,
    derivative_consistency,
    e_calculus_constants,
    e_comparison_scan,
    gradient_bound_probe,
    growth_probe,
    hessian_modulus_probe,
    make_shifted,
    modular_mean_bound,
    offset_growth,
    quasiconvexity_probe,
    recession,
    shifted_taylor_ladder,
)
