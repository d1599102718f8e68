"""
Symbol calculus tests: constant rank, Moore-Penrose symbols, potentials and wave cones.
"""

import numpy as np
import pytest
import sympy

from constrank.core.errors import ConfigError, InvalidParameter, NotAPotential, RankMismatch, ShapeMismatch
from constrank.symbols.calculus import (
    build_potential,
    check_constant_rank,
    check_exactness,
    exact_rank,
    exact_scaling_holds,
    moore_penrose,
    numerical_rank,
    pseudo_inverse_symbol,
    raise_homogeneity,
    symbol_adjoint,
    symbol_of,
    verify_moore_penrose,
    wave_cone_sample,
)
from constrank.symbols.operators import DiffOperator, dump_operator, load_operator, named_operator


RANK_TABLE = [
    ("grad", 3, 1),
    ("div", 3, 1),
    ("curl", 3, 2),
    ("curl", 2, 1),
    ("sym_grad", 2, 2),
    ("sym_grad", 3, 3),
    ("laplacian", 2, 1),
    ("div_matrix", 2, 2),
]


class TestConstantRank:
    """Test rank detection on the built-in operators"""

    @pytest.mark.parametrize("name,dim_n,rank", RANK_TABLE)
    def test_builtin_operators_have_constant_rank(self, name, dim_n, rank):
        """Every built-in except diag has constant rank"""
        report = check_constant_rank(named_operator(name, dim_n), 50, np.random.default_rng(0))

        assert report.is_constant_rank
        assert report.rank == rank
        assert report.witness is None

    def test_diag_rank_drops_on_axes(self):
        """diag(ξ₁, ξ₂) has rank 2 generically and rank 1 on the coordinate axes"""
        report = check_constant_rank(named_operator("diag", 2), 50, np.random.default_rng(0))

        assert not report.is_constant_rank
        assert report.rank == 2
        assert report.witness is not None
        assert min(abs(x) for x in report.witness) < 1e-12

    def test_report_dict_counts_samples(self):
        """to_dict exposes the sample count and no witness for constant rank"""
        report = check_constant_rank(named_operator("grad", 2), 60, np.random.default_rng(1))
        data = report.to_dict()

        assert data["is_constant_rank"] is True
        assert data["n_samples"] >= 60
        assert data["witness"] is None

    def test_too_few_samples_rejected(self):
        """Fewer than 50 samples is an invalid parameter"""
        with pytest.raises(InvalidParameter):
            check_constant_rank(named_operator("grad", 2), 10)


class TestMoorePenrose:
    """Test the pseudo-inverse symbol from the characteristic polynomial"""

    @pytest.mark.parametrize("name,dim_n", [("grad", 2), ("div", 3), ("curl", 3), ("sym_grad", 2)])
    def test_polynomial_identities(self, name, dim_n):
        """ℬℬ†ℬ = ℬ and ℬℬ† symmetric hold exactly"""
        op = named_operator(name, dim_n)
        assert verify_moore_penrose(op, pseudo_inverse_symbol(op))

    @pytest.mark.parametrize("name,dim_n", [("grad", 3), ("curl", 3), ("sym_grad", 3)])
    def test_float_identities_and_homogeneity(self, name, dim_n, rng):
        """At random points ℬℬ†ℬ = ℬ to round-off and ℬ† is homogeneous of degree −k"""
        op = named_operator(name, dim_n)
        B = symbol_of(op)
        dagger = pseudo_inverse_symbol(op)
        xi = rng.standard_normal((1000, dim_n))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)

        Bx = B.evaluate(xi)
        Dx = dagger.evaluate(xi)
        assert np.abs(Bx @ Dx @ Bx - Bx).max() < 1e-12
        assert np.abs(Dx @ Bx @ Dx - Dx).max() < 1e-12

        scaled = dagger.evaluate(2.5 * xi)
        assert np.abs(scaled - 2.5 ** (-op.order) * Dx).max() < 1e-12

    def test_gradient_pseudo_inverse(self):
        """grad† = ξᵀ/|ξ|²"""
        dagger = pseudo_inverse_symbol(named_operator("grad", 2))
        value = dagger.evaluate(np.array([3.0, 4.0]))

        assert np.allclose(value, [[3.0 / 25, 4.0 / 25]], atol=1e-15)

    def test_zero_fill_at_origin(self):
        """ξ = 0 maps to the zero matrix when requested"""
        dagger = pseudo_inverse_symbol(named_operator("curl", 3))
        value = dagger.evaluate(np.zeros(3), zero_fill=True)

        assert np.all(value == 0.0)

    def test_exact_value_at_rational_point(self):
        dagger = moore_penrose(named_operator("grad", 2), 1)
        value = dagger.evaluate_exact([3, 4])

        assert value == sympy.Matrix([[sympy.Rational(3, 25), sympy.Rational(4, 25)]])

    def test_wrong_rank_rejected(self, curl3):
        """c_{r+1} must vanish and r must fit the symbol"""
        with pytest.raises(RankMismatch):
            moore_penrose(curl3, 1)
        with pytest.raises(RankMismatch):
            moore_penrose(curl3, 4)
        with pytest.raises(InvalidParameter):
            moore_penrose(curl3, 0)


class TestExactRank:
    """Test rank over ℚ at rational points"""

    def test_curl_rank(self, curl3):
        assert exact_rank(symbol_of(curl3), [1, 2, 3]) == 2
        assert exact_rank(symbol_of(curl3), ["1/2", 0, 0]) == 2

    def test_diag_rank_on_axis(self):
        symbol = symbol_of(named_operator("diag", 2))

        assert exact_rank(symbol, [1, 2]) == 2
        assert exact_rank(symbol, [1, 0]) == 1


class TestPotentials:
    """Test potential construction and exactness"""

    def test_curl_potential_annihilated(self, curl3):
        """curl(ξ)C(ξ) ≡ 0 and C has rank 3 − rank curl = 1"""
        result = build_potential(curl3)

        assert not result.is_zero
        assert (symbol_of(curl3) @ result.symbol).is_zero
        xi = np.array([0.3, -0.7, 0.2])
        rank, _ = numerical_rank(result.symbol.evaluate(xi), 1e-9)
        assert rank == 1
        assert check_exactness(curl3, result.operator)

    def test_gradient_is_elliptic(self):
        """ker ξ = {0}, so the potential of grad vanishes"""
        result = build_potential(named_operator("grad", 3))

        assert result.is_zero
        assert result.operator is None

    def test_potential_homogeneity(self):
        """The potential symbol is exactly homogeneous"""
        result = build_potential(named_operator("div", 2))
        assert exact_scaling_holds(result.symbol, (2, -1), 3)
        assert result.symbol.degree > 1 or result.homogeneity_raise > 0

    @pytest.mark.parametrize("first,second,dim_n", [
        ("div", "curl", 3),
        ("curl", "grad", 3),
        ("div", "perp_grad", 2),
    ])
    def test_known_exact_pairs(self, first, second, dim_n):
        """Classical complexes are exact"""
        assert check_exactness(named_operator(first, dim_n), named_operator(second, dim_n))

    def test_div_grad_is_not_exact(self):
        """div∘grad is the Laplacian, not zero"""
        with pytest.raises(NotAPotential):
            check_exactness(named_operator("div", 2), named_operator("grad", 2))

    def test_shape_mismatch(self):
        """curl in ℝ³ cannot follow grad in ℝ²"""
        with pytest.raises(ShapeMismatch):
            check_exactness(named_operator("curl", 3), named_operator("grad", 2))

    def test_raise_homogeneity_picks_smallest_power(self):
        """A degree-1 symbol against target 1 needs one factor |ξ|²"""
        symbol = symbol_of(named_operator("grad", 2))
        raised, m = raise_homogeneity(symbol, 1)

        assert m == 1
        assert raised.degree == 3


class TestWaveCone:
    """Test wave-cone sampling"""

    def test_divergence_cone_spans(self):
        """ker div(ξ) = ξ^⊥ is a line that sweeps the plane"""
        sample = wave_cone_sample(named_operator("div", 2), 20)

        assert sample.spans_space
        assert all(b.shape == (2, 1) for b in sample.bases)
        xi = sample.directions
        for direction, basis in zip(xi, sample.bases):
            assert abs(direction @ basis[:, 0]) < 1e-12

    def test_gradient_cone_is_empty(self):
        """grad(ξ) is injective, so the cone is {0}"""
        sample = wave_cone_sample(named_operator("grad", 2), 10)

        assert sample.span_rank == 0
        assert not sample.spans_space
        assert sample.vectors.shape[0] == 0

    def test_invalid_direction_count(self):
        with pytest.raises(InvalidParameter):
            wave_cone_sample(named_operator("div", 2), 0)


class TestOperators:
    """Test operator definitions and their JSON form"""

    def test_adjoint_of_gradient(self):
        """grad* = −div"""
        adjoint = symbol_adjoint(named_operator("grad", 2))

        assert adjoint.dim_from == 2 and adjoint.dim_to == 1
        assert np.array_equal(adjoint.matrix((1, 0)), [[-1.0, 0.0]])
        assert np.array_equal(adjoint.matrix((0, 1)), [[0.0, -1.0]])

    def test_dump_and_load(self, tmp_path, curl3):
        """An operator file reproduces the operator"""
        path = tmp_path / "curl.json"
        dump_operator(curl3, path)

        assert load_operator(str(path)) == curl3

    def test_rational_coefficients(self):
        """Coefficients may be given as "p/q" strings"""
        op = load_operator({
            "dim_n": 2,
            "order": 1,
            "coeffs": [{"alpha": [1, 0], "matrix": [["1/2"]]}, {"alpha": [0, 1], "matrix": [["-1/3"]]}],
        })

        assert op.matrix((1, 0))[0, 0] == 0.5
        assert op.matrix((0, 1))[0, 0] == pytest.approx(-1.0 / 3.0)

    def test_unknown_operator(self):
        with pytest.raises(ConfigError):
            load_operator("no-such-operator")

    def test_wrong_order_multi_index(self):
        with pytest.raises(InvalidParameter):
            DiffOperator.from_matrices(2, 2, {(1, 0): [[1]]})


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
