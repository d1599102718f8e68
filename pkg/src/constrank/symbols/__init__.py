from .calculus import (
    PotentialResult,
    RankReport,
    WaveConeSample,
    build_potential,
    check_constant_rank,
    check_exactness,
    exact_rank,
    image_cone_sample,
    moore_penrose,
    operator_from_symbol,
    pseudo_inverse_symbol,
    raise_homogeneity,
    symbol_adjoint,
    symbol_of,
    verify_moore_penrose,
    wave_cone_sample,
)
from .operators import (
    BUILTIN_OPERATORS,
    DiffOperator,
    dump_operator,
    load_operator,
    named_operator,
)
from .polynomials import PolySymbol, RationalSymbol
