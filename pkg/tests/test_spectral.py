"""Fourier transform, Poisson solve, and Dirichlet projection tests.

Derived expectations come from independent oracles: direct trigonometric
sums, the analytic Poisson solution for single-mode densities, and the
Dirichlet-kernel interpolation formula evaluated brute force.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpil.spectral import (
    FourierCoeffs,
    SpatialField,
    dirichlet_project,
    eval_trig,
    fourier_forward,
    fourier_inverse,
    poisson_coeffs,
    poisson_field,
    zero_coeffs,
)

LX = 10.0 * np.pi


def random_coeffs(rng, M, Lx=LX):
    return FourierCoeffs(
        a=rng.standard_normal(M), b=rng.standard_normal(M), mean=rng.standard_normal(), Lx=Lx
    )


def dirichlet_kernel_interp(values, N, Lx, x):
    """Brute-force P_N via the Dirichlet kernel sum (odd N)."""
    assert N % 2 == 1
    xi = np.arange(N) * Lx / N
    theta = 2.0 * np.pi * (x[:, None] - xi[None, :]) / Lx
    with np.errstate(divide="ignore", invalid="ignore"):
        ker = np.sin(N * theta / 2.0) / np.sin(theta / 2.0)
    ker[np.isclose(np.mod(theta, 2.0 * np.pi), 0.0) | np.isclose(np.mod(theta, 2 * np.pi), 2 * np.pi)] = N
    return ker @ values / N


class TestFourierForward:
    def test_constant_field(self):
        f = SpatialField(values=np.ones(32), Lx=LX)
        c = fourier_forward(f, M=4)
        assert c.mean == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(c.a, 0.0, atol=1e-14)
        assert np.allclose(c.b, 0.0, atol=1e-14)

    def test_single_mode_identity(self):
        x = np.arange(64) * LX / 64
        f = SpatialField(values=np.cos(2 * np.pi * x / LX), Lx=LX)
        c = fourier_forward(f, M=8)
        assert abs(c.a[0] - 1.0) < 1e-12
        assert abs(c.mean) < 1e-12
        assert np.max(np.abs(c.a[1:])) < 1e-12
        assert np.max(np.abs(c.b)) < 1e-12

    def test_dual_mode_perturbation(self):
        # the experiment's spatial profile at zero phases
        x = np.arange(1024) * LX / 1024
        f = SpatialField(values=1.0 + 0.05 * np.cos(2 * np.pi * x / LX) + 0.05 * np.cos(x), Lx=LX)
        c = fourier_forward(f, M=8)
        assert c.mean == pytest.approx(1.0, abs=1e-13)
        assert c.a[0] == pytest.approx(0.05, abs=1e-13)
        assert c.a[4] == pytest.approx(0.05, abs=1e-13)
        others = np.delete(np.concatenate([c.a, c.b]), [0, 4])
        assert np.max(np.abs(others)) < 1e-13

    def test_rejects_bad_degree(self):
        f = SpatialField(values=np.ones(8), Lx=LX)
        with pytest.raises(ValueError):
            fourier_forward(f, M=0)
        with pytest.raises(ValueError):
            fourier_forward(f, M=4)  # 2M+1 = 9 > 8


class TestFourierInverse:
    def test_zero_coeffs(self):
        f = fourier_inverse(zero_coeffs(3, LX), 16)
        assert np.all(f.values == 0.0)

    def test_direct_evaluation(self):
        c = FourierCoeffs(a=[1.0], b=[0.0], mean=0.0, Lx=LX)
        f = fourier_inverse(c, 8)
        expected = np.cos(2 * np.pi * np.arange(8) / 8)
        assert np.allclose(f.values, expected, atol=1e-14)

    def test_round_trip_oracle(self):
        rng = np.random.default_rng(7)
        c = random_coeffs(rng, M=8)
        f = fourier_inverse(c, 64)
        c2 = fourier_forward(f, M=8)
        assert np.max(np.abs(c2.a - c.a)) < 1e-12
        assert np.max(np.abs(c2.b - c.b)) < 1e-12
        assert abs(c2.mean - c.mean) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, M, seed):
        rng = np.random.default_rng(seed)
        c = random_coeffs(rng, M)
        nx = 2 * M + 1 + (seed % 7)
        c2 = fourier_forward(fourier_inverse(c, nx), M)
        assert np.max(np.abs(c2.a - c.a)) < 1e-10
        assert np.max(np.abs(c2.b - c.b)) < 1e-10


class TestPoisson:
    def test_homogeneous(self):
        rho = SpatialField(values=np.ones(64), Lx=LX)
        E = poisson_field(rho)
        assert np.max(np.abs(E.values)) < 1e-14

    def test_cosine_mode_analytic(self):
        # d^2 V/dx^2 = -eps cos(kx) has E = -(eps/k) sin(kx)
        eps, nx = 0.05, 256
        x = np.arange(nx) * LX / nx
        kappa = 2 * np.pi / LX
        rho = SpatialField(values=1.0 + eps * np.cos(kappa * x), Lx=LX)
        E = poisson_field(rho)
        exact = -(eps / kappa) * np.sin(kappa * x)
        assert eps / kappa == pytest.approx(0.25)
        assert np.max(np.abs(E.values - exact)) < 1e-10

    def test_sine_mode_analytic(self):
        eps, nx = 0.03, 256
        x = np.arange(nx) * LX / nx
        kappa = 2 * np.pi / LX
        rho = SpatialField(values=1.0 + eps * np.sin(kappa * x), Lx=LX)
        E = poisson_field(rho)
        exact = (eps / kappa) * np.cos(kappa * x)
        assert np.max(np.abs(E.values - exact)) < 1e-10

    def test_zero_mean(self):
        # mode 0 is forced to zero in the spectrum; the synthesized samples
        # carry only round-off in their mean
        rng = np.random.default_rng(3)
        rho_c = random_coeffs(rng, 5)
        rho_c = FourierCoeffs(a=0.01 * rho_c.a, b=0.01 * rho_c.b, mean=1.0, Lx=LX)
        E = poisson_field(fourier_inverse(rho_c, 128))
        assert abs(E.values.mean()) < 1e-15

    def test_rejects_non_neutral(self):
        rho = SpatialField(values=np.full(64, 1.001), Lx=LX)
        with pytest.raises(ValueError, match="non-neutral"):
            poisson_field(rho)

    def test_derivative_consistency(self):
        # spectral d/dx of E reproduces 1 - rho (fluctuation part)
        rng = np.random.default_rng(11)
        c = random_coeffs(rng, 6)
        c = FourierCoeffs(a=0.01 * c.a, b=0.01 * c.b, mean=1.0, Lx=LX)
        rho = fourier_inverse(c, 128)
        E = poisson_field(rho)
        spec = np.fft.rfft(E.values)
        kappa = 2 * np.pi * np.arange(spec.size) / LX
        dE = np.fft.irfft(1j * kappa * spec, n=128)
        assert np.max(np.abs(dE - (1.0 - rho.values))) < 1e-10

    def test_coeff_space_matches_grid_space(self):
        rng = np.random.default_rng(5)
        c = random_coeffs(rng, 4)
        c = FourierCoeffs(a=0.01 * c.a, b=0.01 * c.b, mean=1.0, Lx=LX)
        E_grid = poisson_field(fourier_inverse(c, 64))
        E_coeff = fourier_inverse(poisson_coeffs(c), 64)
        assert np.max(np.abs(E_grid.values - E_coeff.values)) < 1e-12


class TestDirichletProject:
    def test_constant(self):
        c = dirichlet_project(np.full(5, 3.25), 5, LX)
        assert c.mean == pytest.approx(3.25, abs=1e-14)
        assert np.allclose(c.a, 0.0, atol=1e-14) and np.allclose(c.b, 0.0, atol=1e-14)

    def test_exact_on_low_degree(self):
        xi = np.arange(5) * LX / 5
        c = dirichlet_project(np.cos(2 * np.pi * xi / LX), 5, LX)
        assert c.a[0] == pytest.approx(1.0, abs=1e-14)
        assert abs(c.b[0]) < 1e-14 and abs(c.mean) < 1e-14

    def test_aliasing_matches_kernel_formula(self):
        # mode 3 sampled at N=5 aliases onto mode |3-5| = 2
        N = 5
        xi = np.arange(N) * LX / N
        values = np.cos(6 * np.pi * xi / LX)
        c = dirichlet_project(values, N, LX)
        assert c.a[1] == pytest.approx(1.0, abs=1e-12)
        x = np.linspace(0, LX, 37, endpoint=False)
        brute = dirichlet_kernel_interp(values, N, LX, x)
        assert np.max(np.abs(eval_trig(c, x) - brute)) < 1e-10

    def test_interpolates_samples_odd_n(self):
        rng = np.random.default_rng(2)
        for N in (3, 5, 9, 17):
            values = rng.standard_normal(N)
            c = dirichlet_project(values, N, LX)
            xi = np.arange(N) * LX / N
            assert np.max(np.abs(eval_trig(c, xi) - values)) < 1e-11

    def test_projection_idempotent(self):
        rng = np.random.default_rng(8)
        for N in (4, 5, 8, 9):
            values = rng.standard_normal(N)
            c = dirichlet_project(values, N, LX)
            xi = np.arange(N) * LX / N
            c2 = dirichlet_project(np.asarray(eval_trig(c, xi)), N, LX)
            assert np.max(np.abs(c2.a - c.a)) < 1e-12
            assert np.max(np.abs(c2.b - c.b)) < 1e-12
            assert abs(c2.mean - c.mean) < 1e-12

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            dirichlet_project(np.zeros(0), 0, LX)


class TestEvalTrig:
    def test_zero(self):
        assert eval_trig(zero_coeffs(3, LX), 1.7) == 0.0

    def test_mean_plus_cosine_at_origin(self):
        c = FourierCoeffs(a=[0.05], b=[0.0], mean=1.0, Lx=LX)
        assert eval_trig(c, 0.0) == pytest.approx(1.05, abs=1e-15)

    def test_matches_inverse_on_nodes(self):
        rng = np.random.default_rng(4)
        c = random_coeffs(rng, 6)
        nx = 48
        f = fourier_inverse(c, nx)
        x = np.arange(nx) * LX / nx
        assert np.max(np.abs(eval_trig(c, x) - f.values)) < 1e-12

    def test_wraps_modulo_lx(self):
        rng = np.random.default_rng(9)
        c = random_coeffs(rng, 3)
        assert eval_trig(c, 1.0) == pytest.approx(eval_trig(c, 1.0 + LX), abs=1e-12)


class TestInvariants:
    def test_parseval_on_grid(self):
        rng = np.random.default_rng(12)
        c = random_coeffs(rng, 7)
        f = fourier_inverse(c, 64)
        grid_ms = np.mean(f.values**2)
        assert abs(grid_ms - c.mean_square()) < 1e-10

    def test_exact_sampling_isometry(self):
        # (1/N) sum f(x_i)^2 equals the Parseval mean square whenever N > 2M
        rng = np.random.default_rng(13)
        for N, M in [(5, 2), (7, 3), (8, 3), (16, 7), (9, 4)]:
            c = random_coeffs(rng, M)
            xi = np.arange(N) * LX / N
            samples = np.asarray(eval_trig(c, xi))
            assert abs(np.mean(samples**2) - c.mean_square()) < 1e-12
