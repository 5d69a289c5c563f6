import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pksns import linanalysis as la_
from pksns.errors import UsageError
from pksns.grid import ChannelGrid

NY = 64


def os_apply(A, k, lam, y, f, fpp):
    """L f - i k lam f for exact profile values and second derivatives."""
    return -(fpp - k * k * f) / A + 1j * k * (1 - y**2) * f - 1j * k * lam * f


class TestOperator:
    @pytest.mark.parametrize("A,k", [(0.5, 1), (10, 0), (10, 1.5)])
    def test_rejects(self, A, k):
        with pytest.raises(UsageError):
            la_.OSOperator(A, k)

    def test_energy_identity(self):
        # the shear term is skew, so Re<Lf, f> is exactly the dissipation
        op = la_.OSOperator(300.0, 2, NY)
        for f in op.random_profiles(np.random.default_rng(0), 5):
            re = op.inner(op.interior @ f, f).real
            assert re == pytest.approx(op.dissipation(f), rel=1e-10)

    def test_accretive(self):
        op = la_.OSOperator(1000.0, 1, NY)
        assert op.accretivity(samples=50) > 0

    def test_profiles_are_unit_and_vanish_at_walls(self):
        op = la_.OSOperator(10.0, 1, 32)
        f = op.random_profiles(np.random.default_rng(3), 1)[0]
        assert op.inner(f, f).real == pytest.approx(1.0)
        assert f.shape == (31,)


class TestResolventSolve:
    def test_zero_forcing(self):
        f = la_.solve_os_resolvent(100.0, 1, 0.5, np.zeros(NY + 1))
        assert not np.abs(f).any()

    @pytest.mark.parametrize("lam", [-0.5, 0.3, 1.5])
    def test_manufactured(self, lam):
        A, k = 500.0, 1
        y = ChannelGrid(8, NY).y
        f = (1 - y**2) * np.exp(y)
        fpp = np.exp(y) * (-1 - 4 * y - y**2)
        F = os_apply(A, k, lam, y, f, fpp)
        sol = la_.solve_os_resolvent(A, k, lam, F)
        assert np.abs(sol - f).max() < 1e-9 * np.abs(f).max()

    def test_resolvent_derivative(self):
        # d/dlam (L - i k lam)^{-1} F = i k (L - i k lam)^{-2} F
        A, k, lam, h = 200.0, 1, 0.4, 1e-6
        F = np.cos(np.pi * ChannelGrid(8, NY).y / 2) + 0j
        fd = (la_.solve_os_resolvent(A, k, lam + h, F) - la_.solve_os_resolvent(A, k, lam - h, F)) / (2 * h)
        once = la_.solve_os_resolvent(A, k, lam, F)
        exact = 1j * k * la_.solve_os_resolvent(A, k, lam, once)
        assert np.abs(fd - exact).max() < 1e-5 * np.abs(exact).max()


class TestSingularValues:
    def test_two_methods_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            A = float(10 ** rng.uniform(1, 4))
            k = int(rng.integers(1, 4))
            lam = float(rng.uniform(-1, 2))
            op = la_.OSOperator(A, k, NY)
            a, b = la_.sigma_min_svd(op, k * lam), la_.sigma_min_inverse(op, k * lam)
            assert a == pytest.approx(b, rel=1e-10)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1.0, 1e4), st.integers(1, 4), st.floats(-2, 3))
    def test_conjugation_symmetry(self, A, k, lam):
        a = la_.sigma_min_svd(la_.OSOperator(A, k, 32), k * lam)
        b = la_.sigma_min_svd(la_.OSOperator(A, -k, 32), -k * lam)
        assert a == pytest.approx(b, rel=1e-10)

    def test_lambda_grid_covers_regimes(self):
        lams = la_.default_lambda_grid()
        assert {la_.regime(l) for l in lams} == {"below", "critical", "above"}
        assert (la_.regime(-0.1), la_.regime(0.5), la_.regime(1.2)) == ("below", "critical", "above")

    def test_scan_structure(self):
        scan = la_.scan_resolvent([100.0, 1000.0], [1], ny=NY)
        assert len(scan.cells) == 2 and not any(c.error for c in scan.cells)
        c = scan.cell(1000.0, 1)
        assert c.regime_star == "critical"
        assert c.C_emp == pytest.approx(1 / math.sqrt(1000.0) / c.sigma_star)
        assert min(r.sigma_min for r in scan.rows if r.A == 1000.0) >= c.sigma_star
        lines = scan.to_csv().splitlines()
        assert lines[0] == "A,k,lambda,value,regime"
        assert len(lines) == 1 + len(scan.rows)
        with pytest.raises(KeyError):
            scan.cell(5.0, 1)

    def test_scan_rejects_empty(self):
        with pytest.raises(UsageError):
            la_.scan_resolvent([], [1])


class TestPsi:
    def test_psi_is_minimum(self):
        res = la_.compute_psi(1000.0, 1, ny=NY, c_prime=0.1)
        op = la_.OSOperator(1000.0, 1, NY)
        assert res.psi >= 0
        for mu in np.linspace(-2, 2, 9):
            assert res.psi <= la_.sigma_min_svd(op, mu) * (1 + 1e-12)
        assert res.bound == pytest.approx(0.1 / math.sqrt(1000) + 1 / 1000)
        assert res.bound_ok
        assert float(res) == res.psi

    def test_mu_grid_dense_near_resonance(self):
        mus = la_.default_mu_grid(2)
        assert np.min(np.abs(mus + 2)) == 0.0
        assert np.sum(np.abs(mus + 2) < 0.01) > 10


class TestDecay:
    def test_norms_start_at_one_and_decrease(self):
        fit = la_.measure_semigroup_decay(500.0, 1, la_.default_decay_times(500.0, count=15), ny=NY)
        assert fit.norms[0] == 1.0
        assert all(b <= a * (1 + 1e-12) for a, b in zip(fit.norms, fit.norms[1:]))
        assert fit.rate > 1 / 500.0
        assert fit.c_prime == pytest.approx((fit.rate - 1 / 500.0) * math.sqrt(500.0))

    def test_pure_diffusion_rate(self):
        # without shear the decay rate is the smallest eigenvalue (pi^2/4 + k^2)/A
        op = la_.OSOperator(100.0, 1, NY)
        M = op.weighted - 1j * np.diag(1 - op.y[1:-1] ** 2)
        assert np.linalg.eigvals(M).real.min() == pytest.approx((np.pi**2 / 4 + 1) / 100, rel=1e-10)

    def test_bad_times(self):
        with pytest.raises(UsageError):
            la_.measure_semigroup_decay(100.0, 1, [0.0, 2.0, 1.0])

    def test_csv_and_calibration(self):
        fits = [la_.measure_semigroup_decay(A, 1, la_.default_decay_times(A, count=9), ny=32)
                for A in (100.0, 400.0)]
        assert la_.calibrate_c_prime(fits) == min(f.c_prime for f in fits)
        assert len(la_.decay_to_csv(fits).splitlines()) == 1 + 18


class TestTimespace:
    def test_degenerate(self):
        rep = la_.verify_timespace(100.0, 1, la_.Forcing("none"), ny=32, horizon=10.0, dt=0.5)
        assert rep.R == 0.0

    def test_free_decay_bounded(self):
        y = ChannelGrid(8, 32).y
        rep = la_.verify_timespace(100.0, 1, la_.Forcing("none"), f0=(1 - y**2) * np.exp(y),
                                   ny=32, horizon=100.0, dt=0.5)
        assert 1.0 <= rep.R < 10.0

    @settings(max_examples=5, deadline=None)
    @given(st.floats(0.01, 100.0))
    def test_homogeneous_in_forcing(self, amp):
        forcing = la_.Forcing("profile", amplitude=amp, mu=-0.5, gx=lambda y: 1 - y**2,
                              gy=lambda y: y * (1 - y**2))
        base = la_.verify_timespace(100.0, 1, la_.Forcing("profile", mu=-0.5, gx=forcing.gx,
                                                          gy=forcing.gy), ny=32, horizon=50.0, dt=0.5)
        scaled = la_.verify_timespace(100.0, 1, forcing, ny=32, horizon=50.0, dt=0.5)
        assert scaled.R == pytest.approx(base.R, rel=1e-9)

    def test_worst_forcing_ratio_near_prediction(self):
        rep = la_.verify_timespace(100.0, 1, ny=NY, dt=0.1)
        assert rep.predicted > 1.0
        assert 0.5 * rep.predicted < rep.R < 1.5 * rep.predicted
        assert not rep.warning

    def test_warns_when_weight_outgrows_decay(self):
        with pytest.warns(RuntimeWarning):
            rep = la_.verify_timespace(100.0, 1, la_.Forcing("none"), a_rate=50.0, ny=32,
                                       horizon=1.0, dt=0.5)
        assert rep.warning

    def test_bad_initial_profile(self):
        with pytest.raises(UsageError):
            la_.verify_timespace(100.0, 1, la_.Forcing("none"), f0=np.ones(5), ny=32)


class TestFits:
    def test_exact_power_law(self):
        xs = [1e2, 1e3, 1e4]
        fit = la_.fit_loglog(xs, [3 * x**-0.5 for x in xs])
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.half_width < 1e-6

    def test_two_points(self):
        fit = la_.fit_loglog([1, 10], [1, 100])
        assert fit.slope == pytest.approx(2.0) and fit.half_width == math.inf
        with pytest.raises(UsageError):
            la_.fit_loglog([1], [1])

    def test_converge_ny(self):
        value, ny = la_.converge_ny(lambda n: 1.0 + 1.0 / n, ny=16, rtol=0.01)
        assert ny == 128 and value == pytest.approx(1 + 1 / 128)
        with pytest.warns(RuntimeWarning):
            la_.converge_ny(lambda n: float(n), ny=16, max_ny=64)

    def test_csv_floats_round_trip(self):
        text = la_.rows_to_csv(["a", "b"], [[0.1, "x"], [np.float64(1 / 3), 2]])
        assert text == "a,b\n0.1,x\n0.3333333333333333,2\n"
