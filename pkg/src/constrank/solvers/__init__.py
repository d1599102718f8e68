from .aharmonic import (
    BilinearFormA,
    HarmonicApproxReport,
    PerturbationReport,
    almost_harmonic_defect,
    bump_bank,
    galerkin_defect,
    harmonic_approx_experiment,
    harmonic_polynomials,
    perturbation_study,
    solve_a_harmonic,
)
from .variational import (
    AFreeConstraint,
    CompetitorReport,
    IterationRecord,
    MinimizeProblem,
    MinimizerResult,
    PotentialConstraint,
    SolverOptions,
    competitor_test,
    el_residual,
    energy,
    minimize,
)
