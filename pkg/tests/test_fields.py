"""
Spectral field tests: grids, operators on fields, projections, balls and field files.
"""

import numpy as np
import pytest

from constrank.core.errors import InvalidParameter, NotAFree, RadiusTooSmall, ShapeMismatch
from constrank.fields.grid import GridSpec, PeriodicField, random_band_limited
from constrank.fields.io import dump_field, export_slice_csv, load_field
from constrank.fields.masks import BallMask, ball_average, field_average, quadrature_error
from constrank.fields.polynomial import PolynomialField, monomials, operator_matrix
from constrank.fields.spectral import (
    afree_residual,
    apply_operator,
    decompose,
    derivative_tensor,
    lift_potential,
    mollify,
    project_afree,
    project_range,
    riesz_potential,
)
from constrank.symbols.operators import named_operator


def sine_field(grid, k=1):
    """sin(2πk x₁) as a scalar field"""
    return PeriodicField.from_function(grid, lambda x: np.sin(2 * np.pi * k * x[..., 0]))


class TestGrid:
    """Test grid validation and elementary field algebra"""

    @pytest.mark.parametrize("points", [12, 4, 100])
    def test_points_must_be_power_of_two(self, points):
        with pytest.raises(InvalidParameter):
            GridSpec(2, points)

    def test_dimension_range(self):
        with pytest.raises(InvalidParameter):
            GridSpec(4, 8)

    def test_constant_field_mean_and_norms(self, grid2):
        """A constant has itself as mean and |c|·|Ω|^{1/2} as L² norm"""
        f = PeriodicField.constant(grid2, [3.0, 4.0])

        assert np.allclose(f.mean(), [3.0, 4.0])
        assert f.sup_norm() == pytest.approx(5.0)
        assert f.l2_norm() == pytest.approx(5.0)

    def test_field_on_wrong_grid(self, grid2):
        with pytest.raises(ShapeMismatch):
            PeriodicField(grid2, np.zeros((16, 16, 1)))

    def test_band_limited_amplitude_and_mean(self, grid2, rng):
        """Random fields are normalised in sup norm and have zero mean"""
        f = random_band_limited(grid2, 3, rng, max_freq=4, amplitude=2.0)

        assert np.abs(f.values).max() == pytest.approx(2.0)
        assert np.abs(f.mean()).max() < 1e-14

    def test_band_limit_validated(self, grid2, rng):
        with pytest.raises(InvalidParameter):
            random_band_limited(grid2, 1, rng, max_freq=16)


class TestSpectralOperators:
    """Test operators applied in Fourier space"""

    def test_gradient_of_sine(self, grad2, grid2):
        """∇ sin(2πx₁) = (2π cos(2πx₁), 0)"""
        x = grid2.coordinates()
        Df = apply_operator(grad2, sine_field(grid2))

        assert np.abs(Df.values[..., 0] - 2 * np.pi * np.cos(2 * np.pi * x[..., 0])).max() < 1e-10
        assert np.abs(Df.values[..., 1]).max() < 1e-10

    def test_laplacian_of_sine(self, grid2):
        """Δ sin(2πkx₁) = −(2πk)² sin(2πkx₁)"""
        f = sine_field(grid2, k=3)
        Lf = apply_operator(named_operator("laplacian", 2), f)

        assert np.abs(Lf.values + (6 * np.pi) ** 2 * f.values).max() < 1e-8

    def test_fiber_mismatch(self, grad2, grid2):
        with pytest.raises(ShapeMismatch):
            apply_operator(grad2, PeriodicField.zeros(grid2, 2))

    def test_derivative_tensor_matches_gradient(self, grad2, grid2, rng):
        """First-order derivative tensor of a scalar equals its gradient"""
        f = random_band_limited(grid2, 1, rng)
        D1 = derivative_tensor(f, 1)

        assert np.abs(D1.values - apply_operator(grad2, f).values).max() < 1e-12

    def test_derivative_tensor_is_fiber_major(self, grid2):
        """Component c·n + i holds ∂_i f_c"""
        f = PeriodicField.from_function(grid2, lambda x: np.stack(
            [np.sin(2 * np.pi * x[..., 0]), np.cos(2 * np.pi * x[..., 1])], axis=-1))
        D1 = derivative_tensor(f, 1).values
        x = grid2.coordinates()

        assert np.abs(D1[..., 0] - 2 * np.pi * np.cos(2 * np.pi * x[..., 0])).max() < 1e-10
        assert np.abs(D1[..., 1]).max() < 1e-10
        assert np.abs(D1[..., 2]).max() < 1e-10
        assert np.abs(D1[..., 3] + 2 * np.pi * np.sin(2 * np.pi * x[..., 1])).max() < 1e-10


class TestProjections:
    """Test the 𝒜-free projection and potential decomposition"""

    def test_divergence_free_projection(self, div2, grid2, rng):
        """P f is divergence-free, keeps the mean, and P∘P = P"""
        f = random_band_limited(grid2, 2, rng, zero_mean=False)
        P = project_afree(div2, f)

        assert afree_residual(div2, P) < 1e-12
        assert apply_operator(div2, P).l2_norm() < 1e-10 * max(1.0, f.l2_norm())
        assert np.allclose(P.mean(), f.mean(), atol=1e-14)
        assert (project_afree(div2, P) - P).l2_norm() < 1e-12 * P.l2_norm()

    def test_curl_free_projection_3d(self, curl3, grid3, rng):
        """Curl-free projection in 3D"""
        f = random_band_limited(grid3, 3, rng, max_freq=3)
        P = project_afree(curl3, f)

        assert afree_residual(curl3, P) < 1e-12
        assert afree_residual(curl3, f) > 1e-3

    @pytest.mark.slow
    def test_divergence_free_projection_64_cubed(self, rng):
        """The projection error stays at round-off on a 64³ grid"""
        grid = GridSpec(3, 64)
        div3 = named_operator("div", 3)
        P = project_afree(div3, random_band_limited(grid, 3, rng, max_freq=8))

        assert apply_operator(div3, P).l2_norm() / (2 * np.pi * 8 * P.l2_norm()) < 1e-10

    def test_range_projection_of_gradient(self, grad2, grid2, rng):
        """A zero-mean gradient is its own range projection"""
        g = apply_operator(grad2, random_band_limited(grid2, 1, rng))

        assert (project_range(grad2, g) - g).l2_norm() < 1e-12 * g.l2_norm()

    def test_decompose_divergence_free_field(self, div2, grid2, rng):
        """f = ∇^⊥u + S with S the mean of f"""
        perp = named_operator("perp_grad", 2)
        f = project_afree(div2, random_band_limited(grid2, 2, rng)) + np.array([0.5, -1.0])
        u, S = decompose(div2, perp, f)

        assert (apply_operator(perp, u) + S - f).l2_norm() < 1e-12
        assert np.abs(S.values - f.mean()).max() < 1e-10
        assert abs(u.mean()[0]) < 1e-14

    def test_decompose_rejects_non_afree(self, div2, grid2, rng):
        f = random_band_limited(grid2, 2, rng)
        with pytest.raises(NotAFree):
            decompose(div2, named_operator("perp_grad", 2), f)

    def test_lift_inverts_gradient(self, grad2, grid2, rng):
        """lift(∇u) = u for zero-mean u without Nyquist content"""
        u = random_band_limited(grid2, 1, rng)
        lifted = lift_potential(grad2, apply_operator(grad2, u))

        assert (lifted - u).l2_norm() < 1e-12


class TestSmoothing:
    """Test Riesz potentials and mollification"""

    def test_riesz_potential_of_sine(self, grid2):
        """I_s sin(2πx₁) = (2π)^{−s} sin(2πx₁)"""
        f = sine_field(grid2)
        g = riesz_potential(1.0, f)

        assert np.abs(g.values - f.values / (2 * np.pi)).max() < 1e-12

    def test_riesz_potential_needs_zero_mean(self, grid2):
        with pytest.raises(InvalidParameter):
            riesz_potential(0.5, PeriodicField.constant(grid2, 1.0))

    def test_mollifier_preserves_constants_and_mean(self, grid2, rng):
        c = PeriodicField.constant(grid2, [2.0])
        assert np.abs(mollify(c, 0.1).values - 2.0).max() < 1e-12

        f = random_band_limited(grid2, 1, rng, zero_mean=False)
        assert np.allclose(mollify(f, 0.1).mean(), f.mean(), atol=1e-14)

    def test_mollifier_width_floor(self, grid2):
        with pytest.raises(RadiusTooSmall):
            mollify(PeriodicField.zeros(grid2, 1), grid2.spacing / 2)


def white_noise(grid, fiber_dim, rng):
    """Independent samples per grid point, with content on every frequency"""
    return PeriodicField(grid, rng.standard_normal(grid.shape + (fiber_dim,)))


class TestFullSpectrumFields:
    """Projections of fields with content up to and including the Nyquist planes"""

    def test_afree_projection_is_orthogonal(self, div2, grid2, rng):
        f = white_noise(grid2, 2, rng)
        g = white_noise(grid2, 2, rng)
        P = project_afree(div2, f)

        assert (project_afree(div2, P) - P).l2_norm() < 1e-10 * f.l2_norm()
        assert abs(P.inner(g) - f.inner(project_afree(div2, g))) < 1e-10 * f.l2_norm() * g.l2_norm()
        split = P.l2_norm() ** 2 + (f - P).l2_norm() ** 2
        assert split == pytest.approx(f.l2_norm() ** 2, rel=1e-9)
        assert afree_residual(div2, P) < 1e-12
        assert np.allclose(P.mean(), f.mean(), atol=1e-14)

    def test_curl_free_projection_3d(self, curl3, grid3, rng):
        f = white_noise(grid3, 3, rng)
        P = project_afree(curl3, f)

        assert (project_afree(curl3, P) - P).l2_norm() < 1e-10 * f.l2_norm()
        assert apply_operator(curl3, P).l2_norm() < 1e-10 * (2 * np.pi * 16) * f.l2_norm()

    def test_range_projection_is_orthogonal(self, grad2, grid2, rng):
        f = white_noise(grid2, 2, rng)
        g = white_noise(grid2, 2, rng)
        P = project_range(grad2, f)

        assert (project_range(grad2, P) - P).l2_norm() < 1e-10 * f.l2_norm()
        assert abs(P.inner(g) - f.inner(project_range(grad2, g))) < 1e-10 * f.l2_norm() * g.l2_norm()

    def test_decompose_projected_noise(self, div2, grid2, rng):
        """Every projected field splits as ∇^⊥u plus its mean"""
        perp = named_operator("perp_grad", 2)
        f = project_afree(div2, white_noise(grid2, 2, rng))
        u, S = decompose(div2, perp, f)

        assert (apply_operator(perp, u) + S - f).l2_norm() < 1e-10 * f.l2_norm()
        assert np.abs(S.values - f.mean()).max() < 1e-10

    def test_two_phase_field_projects(self, grad2, grid2):
        """A jump across a plane has Nyquist content; its gradient part is still a projection"""
        x = grid2.coordinates()
        f = PeriodicField(grid2, np.stack([np.where(x[..., 0] < 0.5, 1.0, -1.0), np.zeros(grid2.shape)], axis=-1))
        curl2 = named_operator("curl", 2)
        P = project_afree(curl2, f)

        assert (project_afree(curl2, P) - P).l2_norm() < 1e-10 * f.l2_norm()
        assert (project_range(grad2, P) - P).l2_norm() < 1e-10 * f.l2_norm()


class TestGridExactness:
    """Discrete complexes compose to zero on arbitrary fields"""

    def test_div_curl(self, curl3, grid3, rng):
        u = white_noise(grid3, 3, rng)
        div3 = named_operator("div", 3)

        assert apply_operator(div3, apply_operator(curl3, u)).l2_norm() < 1e-10 * (2 * np.pi * 16) ** 2 * u.l2_norm()

    def test_curl_grad(self, curl3, grid3, rng):
        h = white_noise(grid3, 1, rng)
        grad3 = named_operator("grad", 3)

        assert apply_operator(curl3, apply_operator(grad3, h)).l2_norm() < 1e-10 * (2 * np.pi * 16) ** 2 * h.l2_norm()

    def test_div_perp_grad(self, div2, grid2, rng):
        h = white_noise(grid2, 1, rng)
        perp = named_operator("perp_grad", 2)

        assert apply_operator(div2, apply_operator(perp, h)).l2_norm() < 1e-10 * (2 * np.pi * 32) ** 2 * h.l2_norm()


class TestRieszIdentities:
    """Test compositions of Riesz potentials"""

    def test_inverse_pair(self, grid2, rng):
        """I₁∘I₋₁ is the identity on zero-mean fields"""
        f = white_noise(grid2, 2, rng).zero_mean()
        g = riesz_potential(1.0, riesz_potential(-1.0, f))

        assert (g - f).l2_norm() < 1e-12 * f.l2_norm()

    def test_order_zero_is_identity(self, grid2, rng):
        f = white_noise(grid2, 1, rng).zero_mean()
        assert (riesz_potential(0.0, f) - f).l2_norm() < 1e-12 * f.l2_norm()


class TestBallMasks:
    """Test ball quadrature"""

    def test_volume_quadrature(self):
        """The anti-aliased volume matches πR² closely"""
        mask = BallMask(GridSpec(2, 128), (0.5, 0.5), 0.3)
        assert quadrature_error(mask) < 1e-2

    def test_wrapped_ball_same_volume(self):
        """A ball centred near a corner wraps around the torus"""
        grid = GridSpec(2, 64)
        inner = BallMask(grid, (0.5, 0.5), 0.2)
        corner = BallMask(grid, (0.0, 0.0), 0.2)

        assert corner.volume == pytest.approx(inner.volume, rel=1e-12)

    def test_average_of_constant(self, grid2):
        mask = BallMask(grid2, (0.3, 0.6), 0.25)
        f = PeriodicField.constant(grid2, [1.5, -2.0])

        assert np.allclose(field_average(f, mask), [1.5, -2.0])
        assert ball_average(f, mask) == pytest.approx(2.5)

    def test_radius_floor(self, grid2):
        with pytest.raises(RadiusTooSmall):
            BallMask(grid2, (0.5, 0.5), 2 * grid2.spacing)

    def test_ball_may_not_wrap_onto_itself(self, grid2):
        with pytest.raises(InvalidParameter):
            BallMask(grid2, (0.5, 0.5), 0.5)


class TestPolynomialFields:
    """Test polynomial fields used for kernels and harmonic fits"""

    def test_monomial_order(self):
        assert monomials(2, 2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

    def test_gradient_of_square(self, grad2):
        """∇(x₁²) = (2x₁, 0)"""
        p = PolynomialField(2, ((2, 0),), [[1.0]])
        value = p.apply_operator(grad2).evaluate(np.array([0.5, 0.1]))

        assert np.allclose(value, [1.0, 0.0])

    def test_operator_matrix_shape(self, grad2):
        """Rows: degree-1 outputs × 2 components; columns: degree-2 inputs"""
        assert operator_matrix(grad2, 2).shape == (6, 6)

    def test_derivative_tensor_agrees_with_partials(self):
        p = PolynomialField(2, ((1, 1), (0, 2)), [[1.0], [3.0]])
        x = np.array([[0.2, -0.4]])
        D = p.derivative_tensor(x, 1)

        assert np.allclose(D, [[-0.4, 0.2 + 6 * -0.4]])


class TestFieldFiles:
    """Test the field dump format"""

    def test_dump_and_load(self, tmp_path, grid2, rng):
        f = random_band_limited(grid2, 2, rng)
        path = tmp_path / "f.field"
        dump_field(f, path)
        g = load_field(path)

        assert g.grid == grid2
        assert np.array_equal(g.values, f.values)

    def test_slice_export_rows(self, tmp_path, grid3, rng):
        """A 3D field exports one plane"""
        rows = export_slice_csv(random_band_limited(grid3, 1, rng), tmp_path / "slice.csv")
        assert rows == 16 * 16


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
