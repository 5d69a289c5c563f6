import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pksns.errors import BlowUpDataError, UsageError
from pksns.grid import (ChannelGrid, PhysField, cheb_diff, chebyshev_nodes,
                        clenshaw_curtis_weights, ddx, ddy, dealias, inner, laplacian, lp_norm,
                        profile_norm, project_nonzero, project_zero, to_physical, to_spectral)


class TestNodesAndWeights:
    def test_nodes_antisymmetric_and_ordered(self):
        y = chebyshev_nodes(33)
        assert y[0] == 1.0 and y[-1] == -1.0
        np.testing.assert_array_equal(y, -y[::-1])
        assert np.all(np.diff(y) < 0)

    @pytest.mark.parametrize("n", [8, 9, 16, 31, 64])
    def test_weights_integrate_polynomials(self, n):
        y, w = chebyshev_nodes(n), clenshaw_curtis_weights(n)
        for p in range(n + 1):
            exact = 0.0 if p % 2 else 2.0 / (p + 1)
            assert abs(w @ y**p - exact) < 1e-13

    def test_weights_integrate_exponential(self):
        y, w = chebyshev_nodes(32), clenshaw_curtis_weights(32)
        assert abs(w @ np.exp(y) - (np.e - 1 / np.e)) < 1e-14

    def test_diff_matrix_kills_constants(self):
        D = cheb_diff(20)
        assert np.abs(D @ np.ones(21)).max() < 1e-12

    def test_diff_matrix_exact_on_polynomials(self):
        n = 16
        y, D = chebyshev_nodes(n), cheb_diff(n)
        f = 3 * y**7 - y**4 + 2 * y
        assert np.abs(D @ f - (21 * y**6 - 4 * y**3 + 2)).max() < 1e-11


class TestChannelGrid:
    def test_rejects_bad_sizes(self):
        for nx, ny in [(7, 16), (6, 16), (16, 4)]:
            with pytest.raises(UsageError):
                ChannelGrid(nx, ny)

    def test_shapes_and_wavenumbers(self):
        g = ChannelGrid(24, 16)
        assert g.shape == (24, 17)
        assert list(g.k) == list(range(13))
        assert g.kx[-1] == 0.0
        assert g.kmax == 8
        assert ChannelGrid(24, 16, dealias=False).kmax == 11

    def test_hashable_and_cached(self):
        assert ChannelGrid(16, 16) == ChannelGrid(16, 16)
        assert len({ChannelGrid(16, 16), ChannelGrid(16, 16)}) == 1

    def test_field_shape_checked(self):
        g = ChannelGrid(16, 16)
        with pytest.raises(UsageError):
            PhysField(g, np.zeros((16, 16)))


class TestSpectralCalculus:
    def test_fft_round_trip(self):
        g = ChannelGrid(32, 32)
        f = g.from_function(lambda x, y: np.exp(np.sin(x)) * np.cos(3 * y) + y**2)
        back = to_physical(to_spectral(f))
        assert np.abs(back.values - f.values).max() < 1e-12

    def test_derivatives(self):
        g = ChannelGrid(32, 32)
        f = g.from_function(lambda x, y: np.sin(2 * x) * np.exp(y))
        assert np.abs(ddx(f).values - g.from_function(lambda x, y: 2 * np.cos(2 * x) * np.exp(y)).values).max() < 1e-10
        assert np.abs(ddy(f).values - f.values).max() < 1e-10
        lap = g.from_function(lambda x, y: -3 * np.sin(2 * x) * np.exp(y))
        assert np.abs(laplacian(f).values - lap.values).max() < 1e-8

    def test_non_finite_input_rejected(self):
        g = ChannelGrid(16, 16)
        vals = np.zeros(g.shape)
        vals[3, 4] = np.nan
        with pytest.raises(BlowUpDataError):
            to_spectral(PhysField(g, vals))

    def test_projections(self):
        g = ChannelGrid(16, 16)
        f = g.from_function(lambda x, y: 1 + y + np.cos(x) * y**2)
        z, nz = project_zero(f), project_nonzero(f)
        np.testing.assert_allclose(z.values, g.from_function(lambda x, y: 1 + y).values, atol=1e-14)
        np.testing.assert_allclose((z + nz).values, f.values, atol=1e-14)
        assert abs(inner(z, nz)) < 1e-13

    def test_dealias_removes_high_modes_only(self):
        g = ChannelGrid(24, 16)
        low = g.from_function(lambda x, y: np.cos(3 * x) * y)
        high = g.from_function(lambda x, y: np.cos(10 * x) * y)
        np.testing.assert_allclose(dealias(low + high).values, low.values, atol=1e-13)

    def test_mode_stack_conjugate_symmetry(self):
        g = ChannelGrid(16, 16)
        f = g.from_function(lambda x, y: np.sin(x + y) + np.cos(2 * x) * y)
        m = to_spectral(f)
        np.testing.assert_allclose(m.profile(-2), np.conj(m.profile(2)))
        assert len(m.profiles()) == 16
        with pytest.raises(UsageError):
            m.profile(8)


class TestNorms:
    def test_l1_of_parabola(self):
        g = ChannelGrid(16, 16)
        f = g.from_function(lambda x, y: 1 - y**2)
        assert abs(lp_norm(f, 1) - 2 * np.pi * 4 / 3) < 1e-12

    def test_norm_exponents(self):
        g = ChannelGrid(16, 32)
        f = g.from_function(lambda x, y: np.cos(x) + 0 * y)
        assert abs(lp_norm(f, 2) - np.sqrt(2 * np.pi)) < 1e-12
        assert abs(lp_norm(f, 4) ** 4 - 3 * np.pi / 2) < 1e-10
        assert lp_norm(f, "inf") == pytest.approx(1.0)
        with pytest.raises(UsageError):
            lp_norm(f, 3)

    def test_profile_norm(self):
        g = ChannelGrid(8, 32)
        assert profile_norm(g, 1j * np.ones(33)) == pytest.approx(np.sqrt(2.0))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 5))
    def test_parseval_and_homogeneity(self, a, b, k):
        g = ChannelGrid(16, 16)
        f = g.from_function(lambda x, y: a * np.cos(k * x) * (1 - y**2) + b * y)
        norm = lp_norm(f, 2)
        assert lp_norm(f * 2.0, 2) == pytest.approx(2 * norm, abs=1e-12)
        assert inner(f, f) == pytest.approx(norm**2, rel=1e-12, abs=1e-12)
