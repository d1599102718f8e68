"""
Integrand tests: the reference function E, the integrand families and their probes.
"""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constrank.core.errors import InvalidParameter, ShapeMismatch
from constrank.fields.grid import GridSpec, random_band_limited
from constrank.integrands.library import (
    EllE,
    IntegrandConfig,
    IntegrandFamily,
    Linear,
    NegatedE,
    OffsetIntegrand,
    PerturbedE,
    XDependentE,
    eval_E,
    eval_Vp,
    integrand_from_config,
)
from constrank.integrands.probes import (
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
from constrank.symbols.calculus import wave_cone_sample
from constrank.symbols.operators import named_operator

fiber_vectors = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=3, max_size=3,
).map(np.array)


class TestReferenceFunction:
    """Test E(z) = √(1+|z|²) − 1"""

    @given(fiber_vectors)
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, z):
        """0 ≤ E(z) ≤ min{|z|, |z|²/2}"""
        value = float(eval_E(z))
        modulus = float(np.linalg.norm(z))

        assert value >= 0.0
        assert value <= modulus * (1 + 1e-12) + 1e-300
        assert value <= 0.5 * modulus ** 2 * (1 + 1e-12) + 1e-300

    @given(fiber_vectors, fiber_vectors)
    @settings(max_examples=200, deadline=None)
    def test_quasi_triangle(self, z, w):
        """E(z + w) ≤ 2(E(z) + E(w))"""
        assert float(eval_E(z + w)) <= 2.0 * (float(eval_E(z)) + float(eval_E(w))) * (1 + 1e-12) + 1e-300

    def test_comparison_with_min(self):
        """E(z)/min{|z|, |z|²} stays in [√2 − 1, 1]"""
        low, high = e_comparison_scan()

        assert low >= np.sqrt(2) - 1 - 1e-12
        assert high <= 1.0 + 1e-12

    def test_calculus_constants(self, rng):
        """Measured constants respect the triangle constant 2 and scaling constant 1"""
        constants = e_calculus_constants(rng, n_pairs=10_000)

        assert constants["triangle"] <= 2.0 + 1e-9
        assert constants["scaling"] <= 1.0 + 1e-9

    def test_modular_mean_bound(self, rng):
        """⨏|f| ≤ √(e² + 2e) with e = ⨏E(f) for arbitrary fields"""
        grid = GridSpec(2, 16)
        for _ in range(100):
            f = random_band_limited(grid, 2, rng, amplitude=10.0 ** rng.uniform(-2, 2))
            lhs, rhs = modular_mean_bound(f)
            assert lhs <= rhs * (1 + 1e-12)

    def test_vp_at_two_is_identity(self, rng):
        z = rng.standard_normal((20, 4))
        assert np.allclose(eval_Vp(z, 2.0), z)


class TestFamilies:
    """Test the integrand families"""

    @pytest.mark.parametrize("f", [
        EllE(2, 2.0),
        PerturbedE(2, 1.0, 0.3, np.array([[1.0, 0.5], [0.5, -1.0]])),
        XDependentE(2, 1.0, 0.5),
        NegatedE(2),
    ])
    def test_derivative_consistency(self, f, rng):
        """Analytic gradient and Hessian agree with central differences"""
        errors = derivative_consistency(f, rng)

        assert errors["grad"] < 1e-6
        assert errors["hess"] < 1e-6

    @pytest.mark.parametrize("f", [EllE(3, 2.0), PerturbedE(3, 1.0, 0.5), XDependentE(3, 1.0, 0.5)])
    def test_linear_growth(self, f, rng):
        assert growth_probe(f, rng).passed
        assert gradient_bound_probe(f, rng).passed

    def test_offset_growth(self, rng):
        grid = GridSpec(2, 16)
        f = integrand_from_config(
            IntegrandConfig(family=IntegrandFamily.OFFSET, offset_amplitude=0.5), 2, grid)

        assert isinstance(f, OffsetIntegrand)
        assert offset_growth(f, rng).passed

    def test_hessian_modulus_shrinks(self, rng):
        """ω(δ) decreases with δ for an x-dependent integrand"""
        f = XDependentE(2, 1.0, 0.5)
        coarse = hessian_modulus_probe(f, 1e-1, 5.0, rng)
        fine = hessian_modulus_probe(f, 1e-3, 5.0, rng)

        assert fine < coarse

    def test_fiber_checked(self):
        with pytest.raises(ShapeMismatch):
            EllE(2).eval(None, np.zeros(3))

    def test_config_with_seeded_form(self):
        """A seeded perturbation form is reproducible and has unit norm"""
        config = IntegrandConfig(family=IntegrandFamily.PERTURBED, mu=0.2, seed=7)
        first = integrand_from_config(config, 3)
        second = integrand_from_config(config, 3)

        assert np.array_equal(first.Q, second.Q)
        assert np.linalg.norm(first.Q, 2) == pytest.approx(1.0)


class TestRecession:
    """Test recession functions"""

    def test_ell_e_recession(self):
        """(ℓE)^∞(z) = ℓ|z|"""
        estimate = recession(EllE(2, 3.0), None, np.array([0.6, 0.8]))

        assert estimate.value == pytest.approx(3.0, abs=1e-5)
        assert not estimate.non_cauchy

    def test_linear_recession_is_exact(self):
        f = Linear(np.array([1.0, -2.0]))
        assert recession(f, None, np.array([3.0, 1.0])).value == pytest.approx(1.0)

    def test_short_ladder_rejected(self):
        with pytest.raises(InvalidParameter):
            recession(EllE(1), None, np.array([1.0]), t_ladder=(1.0, 10.0, 1e3))


class TestShiftedIntegrands:
    """Test f_w(z) = f(w+z) − f(w) − ∂f(w)·z"""

    def test_taylor_ratio_converges(self):
        """f_w(sẑ)/s² → ½∂²f(w)[ẑ,ẑ]"""
        fw = make_shifted(EllE(2, 1.0), None, np.array([1.0, 2.0]))
        ladder = shifted_taylor_ladder(fw, np.array([1.0, -1.0]))
        errors = ladder["errors"]

        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-3 * abs(ladder["target"])

    def test_upper_constant_measured(self):
        """|f_w| ≤ c₁E with a finite measured c₁"""
        fw = make_shifted(EllE(3, 1.0), None, np.array([0.5, 0.0, 0.0]))
        assert fw.upper_constant is not None
        assert 0 < fw.upper_constant < np.inf

    def test_shift_bound(self):
        with pytest.raises(InvalidParameter):
            make_shifted(EllE(2), None, np.array([20.0, 0.0]))


class TestConvexityChecks:
    """Test wave-cone ellipticity and sampled quasiconvexity"""

    def test_ellipticity_at_origin(self):
        """∂²(ℓE)(0) = ℓ·Id, so every cone direction gives ℓ"""
        cone = wave_cone_sample(named_operator("div", 2), 20)
        assert check_wave_cone_ellipticity(EllE(2, 1.5), None, np.zeros(2), cone) == pytest.approx(1.5)

    def test_ellipticity_of_explicit_directions(self):
        value = check_wave_cone_ellipticity(EllE(2, 1.0), None, np.zeros(2), np.array([[1.0, 1.0]]))
        assert value == pytest.approx(1.0)

    def test_ellipticity_away_from_origin(self):
        """Along z the quotient of E is (1+|z|²)^{−3/2}, across z it is (1+|z|²)^{−1/2}"""
        z = np.array([0.6, -0.8])
        along = check_wave_cone_ellipticity(EllE(2), None, z, z[None, :])
        across = check_wave_cone_ellipticity(EllE(2), None, z, np.array([[0.8, 0.6]]))

        assert along == pytest.approx(2.0 ** -1.5, rel=1e-12)
        assert across == pytest.approx(2.0 ** -0.5, rel=1e-12)
        assert check_wave_cone_ellipticity(EllE(2), None, z, np.stack([z, [0.8, 0.6]])) == pytest.approx(along)

    def test_cone_quotient_bounded_below(self):
        z = np.array([1.5, 0.5])
        cone = wave_cone_sample(named_operator("div", 2), 20)
        floor = (1.0 + z @ z) ** -1.5

        assert check_wave_cone_ellipticity(EllE(2), None, z, cone) >= floor - 1e-12

    def test_ellipticity_scales_with_ell(self):
        z = np.array([0.3, 1.1])
        cone = wave_cone_sample(named_operator("div", 2), 20)
        single = check_wave_cone_ellipticity(EllE(2, 1.0), None, z, cone)

        assert check_wave_cone_ellipticity(EllE(2, 2.0), None, z, cone) == pytest.approx(2 * single, rel=1e-12)

    def test_linear_integrand_is_degenerate(self, caplog):
        """A zero Hessian gives quotient 0 and a warning"""
        cone = wave_cone_sample(named_operator("div", 2), 20)
        with caplog.at_level(logging.WARNING, logger="constrank.integrands.probes"):
            value = check_wave_cone_ellipticity(Linear([1.0, -2.0]), None, np.array([0.5, 0.5]), cone)

        assert value == 0.0
        assert "Degenerate wave-cone ellipticity" in caplog.text

    def test_convex_integrand_passes(self, grad2, rng):
        """Convex integrands satisfy Jensen, margin ≥ 0"""
        margin = quasiconvexity_probe(EllE(2), grad2, np.array([0.3, -0.2]), 100, GridSpec(2, 16), rng)
        assert margin >= -1e-12

    def test_concave_integrand_fails(self, grad2, rng):
        """−E is strictly concave, margin < 0"""
        margin = quasiconvexity_probe(NegatedE(2), grad2, np.array([0.3, -0.2]), 100, GridSpec(2, 16), rng)
        assert margin < 0

    def test_trial_floor(self, grad2):
        with pytest.raises(InvalidParameter):
            quasiconvexity_probe(EllE(2), grad2, np.zeros(2), 10, GridSpec(2, 16))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
