"""Kernel oracles: radial quadrature and a finite-difference boundary solve.

The closed forms under test are hyperbolic-sine expressions that are easy
to mistranscribe, so nothing here is checked against another closed form.
Masses come from scipy quadrature of the pointwise kernels; the surface
mass additionally comes from a tridiagonal finite-difference solve of the
screened radial equation.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import solve_banded

from spherewalk.greens import (
    BallKernelQuery,
    ScreenedVolumeSampler,
    SingularQueryError,
    ball_volume,
    greens_ball,
    greens_ball_mass,
    screened_kernels_ball_3d,
    screened_surface_mass,
)


class TestHarmonicKernel:
    def test_boundary_zero(self):
        assert greens_ball(BallKernelQuery(2, 1.0, 1.0)) == 0.0
        assert greens_ball(BallKernelQuery(3, 2.0, 2.0)) == 0.0

    def test_closed_form_values(self):
        assert greens_ball(BallKernelQuery(2, 1.0, math.exp(-1.0))) == pytest.approx(
            1.0 / (2.0 * math.pi), rel=1e-14
        )
        assert greens_ball(BallKernelQuery(3, 1.0, 0.5)) == pytest.approx(
            1.0 / (4.0 * math.pi), rel=1e-14
        )

    def test_singularity_rejected(self):
        with pytest.raises(SingularQueryError):
            greens_ball(BallKernelQuery(2, 1.0, 0.0))

    def test_query_validation(self):
        with pytest.raises(ValueError):
            BallKernelQuery(4, 1.0, 0.5)
        with pytest.raises(ValueError):
            BallKernelQuery(2, 1.0, 1.5)
        with pytest.raises(ValueError):
            BallKernelQuery(2, -1.0, 0.0)

    def test_monotone_decreasing(self):
        for d in (2, 3):
            rho = np.linspace(0.05, 1.0, 100)
            vals = [greens_ball(BallKernelQuery(d, 1.0, float(p))) for p in rho]
            assert all(a > b for a, b in zip(vals, vals[1:]))
            assert all(v >= 0.0 for v in vals)

    def test_mass_against_quadrature(self):
        for d, r in [(2, 1.0), (3, 1.0), (2, 2.0), (3, 0.3)]:
            surf = 2.0 * math.pi if d == 2 else 4.0 * math.pi

            def integrand(rho):
                return surf * rho ** (d - 1) * greens_ball(BallKernelQuery(d, r, rho))

            val, err = quad(integrand, 0.0, r, limit=200)
            assert greens_ball_mass(d, r) == pytest.approx(val, abs=max(1e-12, 10 * err))

    def test_mass_closed_values(self):
        assert greens_ball_mass(2, 1.0) == pytest.approx(0.25)
        assert greens_ball_mass(3, 1.0) == pytest.approx(1.0 / 6.0)
        assert greens_ball_mass(2, 2.0) == pytest.approx(1.0)

    def test_mass_monte_carlo(self):
        # volume-uniform expectation of G times |B| equals the mass;
        # smaller twin of the acceptance-suite check
        rng = np.random.default_rng(314)
        n = 200_000
        for d, r in [(2, 1.0), (3, 1.5)]:
            u = rng.random(n)
            rho = r * u ** (1.0 / d)
            if d == 2:
                g = (1.0 / (2.0 * math.pi)) * np.log(r / rho)
            else:
                g = (1.0 / (4.0 * math.pi)) * (1.0 / rho - 1.0 / r)
            est = ball_volume(d, r) * g.mean()
            assert est == pytest.approx(greens_ball_mass(d, r), rel=7.5e-3)


def fd_surface_mass(r, sigma_bar, n=200_000):
    """Center value of the screened unit-boundary problem on a ball.

    Solves w'' = sigma_bar w with w(0)=0, w(r)=r on a uniform grid, where
    w = rho * u removes the radial Laplacian's first-order term; u(0)
    equals w'(0).
    """
    h = r / n
    main = np.full(n - 1, -2.0 - sigma_bar * h * h)
    off = np.ones(n - 2)
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = off
    ab[1] = main
    ab[2, :-1] = off
    rhs = np.zeros(n - 1)
    rhs[-1] = -r
    w = solve_banded((1, 1), ab, rhs)
    # second-order one-sided derivative at 0 using w(0)=0
    return (4.0 * w[0] - w[1]) / (2.0 * h)


class TestScreenedKernels:
    def test_harmonic_limit(self):
        s, sampler = screened_kernels_ball_3d(1.0, 0.0)
        assert s == 1.0
        assert sampler.mass == pytest.approx(1.0 / 6.0)
        s = screened_surface_mass(2.0, 1e-8)
        assert 1.0 - 1e-6 <= s <= 1.0

    def test_surface_mass_value(self):
        s, _ = screened_kernels_ball_3d(1.0, 1.0)
        assert s == pytest.approx(1.0 / math.sinh(1.0), rel=1e-12)

    def test_surface_mass_against_fd_solve(self):
        for r, sig in [(1.0, 1.0), (0.5, 4.0), (2.0, 0.3), (1.0, 25.0)]:
            got = screened_surface_mass(r, sig)
            want = fd_surface_mass(r, sig)
            assert got == pytest.approx(want, rel=2e-6)

    def test_balance_identity_quadrature(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            r = float(rng.uniform(0.05, 3.0))
            sig = float(10.0 ** rng.uniform(-3, 2))
            surf, sampler = screened_kernels_ball_3d(r, sig)

            def integrand(rho):
                return 4.0 * math.pi * rho * rho * float(sampler.green(rho))

            vol, err = quad(integrand, 0.0, r, limit=200)
            assert surf + sig * vol == pytest.approx(1.0, abs=1e-6)
            assert sampler.mass == pytest.approx(vol, abs=max(1e-9, 10 * err))

    def test_radial_cdf_against_quadrature(self):
        for q2 in (0.25, 1.0, 9.0):
            sampler = ScreenedVolumeSampler(1.0, q2)
            q = math.sqrt(q2)

            def dens(t):
                # radius-fraction density: t^2 * green(t) up to normalization
                return t * math.sinh(q * (1.0 - t))

            total, _ = quad(dens, 0.0, 1.0)
            for t in (0.1, 0.35, 0.7, 0.95):
                part, _ = quad(dens, 0.0, t)
                assert float(sampler.radial_cdf(t)) == pytest.approx(
                    part / total, abs=1e-10
                )

    def test_radial_cdf_endpoints_and_monotonicity(self):
        for sig in (0.0, 1e-9, 0.5, 10.0, 400.0):
            sampler = ScreenedVolumeSampler(1.0, sig)
            t = np.linspace(0.0, 1.0, 257)
            cdf = sampler.radial_cdf(t)
            assert cdf[0] == pytest.approx(0.0, abs=1e-12)
            assert cdf[-1] == pytest.approx(1.0, abs=1e-12)
            assert np.all(np.diff(cdf) >= -1e-12)

    def test_sampler_inverts_cdf(self):
        rng = np.random.default_rng(11)
        u = rng.random(512)
        for sig in (1e-9, 0.3, 4.0, 50.0):
            sampler = ScreenedVolumeSampler(1.3, sig)
            t = sampler.sample_radius_fraction(u)
            assert np.max(np.abs(sampler.radial_cdf(t) - u)) < 1e-12

    def test_sampled_law_matches_density(self):
        # empirical CDF of sampled radii vs the analytic CDF
        rng = np.random.default_rng(3)
        sampler = ScreenedVolumeSampler(1.0, 2.0)
        t = sampler.sample_radius_fraction(rng.random(100_000))
        for tq in (0.2, 0.5, 0.8):
            emp = float(np.mean(t <= tq))
            assert emp == pytest.approx(float(sampler.radial_cdf(tq)), abs=5e-3)

    def test_balance_many_random_pairs(self):
        # closed-form surface and volume masses complement each other
        rng = np.random.default_rng(99)
        for _ in range(50):
            r = float(rng.uniform(0.01, 5.0))
            sig = float(10.0 ** rng.uniform(-6, 3))
            surf, sampler = screened_kernels_ball_3d(r, sig)
            assert surf + sig * sampler.mass == pytest.approx(1.0, abs=1e-9)

    def test_green_singularity_guard(self):
        sampler = ScreenedVolumeSampler(1.0, 1.0)
        with pytest.raises(SingularQueryError):
            sampler.green(0.0)
