"""Fourier analysis on the periodic domain [0, Lx).

Real trigonometric convention used throughout the package: a function with
truncation degree M is represented as

    g(x) = mean + sum_{m=1}^{M} a_m cos(kappa_m x) + b_m sin(kappa_m x),
    kappa_m = 2 pi m / Lx.

Grid fields are sampled at the uniform nodes x_i = i Lx / nx, i = 0..nx-1
(index 0 at x = 0, periodic wrap at Lx).  The complex exponential form is
used only internally (FFT plumbing); everything crossing a module boundary,
the dataset format, or the wire protocol is (mean, a, b).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEUTRALITY_TOL = 1e-8


@dataclass(frozen=True)
class SpatialField:
    """Real field sampled on the uniform periodic grid."""

    values: np.ndarray
    Lx: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("SpatialField values must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("SpatialField values must be finite")
        if self.Lx <= 0:
            raise ValueError(f"Lx must be positive, got {self.Lx}")

    @property
    def nx(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    def nodes(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class FourierCoeffs:
    """Degree-M truncated trigonometric polynomial in (mean, a, b) form."""

    a: np.ndarray
    b: np.ndarray
    mean: float
    Lx: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a and b must be 1-D arrays of equal length")
        if self.Lx <= 0:
            raise ValueError(f"Lx must be positive, got {self.Lx}")

    @property
    def M(self) -> int:
        return self.a.size

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(1, self.M + 1) / self.Lx

    def mean_square(self) -> float:
        """(1/Lx) integral of g^2, via Parseval on the truncated basis."""
        return float(self.mean**2 + 0.5 * np.sum(self.a**2 + self.b**2))

    def truncated(self, M: int) -> "FourierCoeffs":
        """Drop modes above M (pad with zeros if M exceeds the degree)."""
        if M <= 0:
            raise ValueError(f"truncation degree must be positive, got {M}")
        a = np.zeros(M)
        b = np.zeros(M)
        m = min(M, self.M)
        a[:m] = self.a[:m]
        b[:m] = self.b[:m]
        return FourierCoeffs(a=a, b=b, mean=self.mean, Lx=self.Lx)


def zero_coeffs(M: int, Lx: float) -> FourierCoeffs:
    return FourierCoeffs(a=np.zeros(M), b=np.zeros(M), mean=0.0, Lx=Lx)


def _check_resolution(M: int, grid_nx: int) -> None:
    if M <= 0:
        raise ValueError(f"truncation degree must be positive, got M={M}")
    if 2 * M + 1 > grid_nx:
        raise ValueError(
            f"grid too coarse for degree M={M}: need 2M+1 <= nx, got nx={grid_nx}"
        )


def fourier_forward(field: SpatialField, M: int) -> FourierCoeffs:
    """Degree-M truncation of the discrete Fourier series of `field`."""
    _check_resolution(M, field.nx)
    spec = np.fft.rfft(field.values) / field.nx
    a = 2.0 * spec[1 : M + 1].real
    b = -2.0 * spec[1 : M + 1].imag
    return FourierCoeffs(a=a, b=b, mean=float(spec[0].real), Lx=field.Lx)


def fourier_inverse(coeffs: FourierCoeffs, grid_nx: int) -> SpatialField:
    """Evaluate the trigonometric polynomial at the grid nodes."""
    _check_resolution(coeffs.M, grid_nx)
    spec = np.zeros(grid_nx // 2 + 1, dtype=complex)
    spec[0] = coeffs.mean * grid_nx
    spec[1 : coeffs.M + 1] = 0.5 * (coeffs.a - 1j * coeffs.b) * grid_nx
    return SpatialField(values=np.fft.irfft(spec, n=grid_nx), Lx=coeffs.Lx)


def poisson_fluctuation_field(rho: SpatialField) -> SpatialField:
    """Poisson solve on the fluctuating modes of rho; no neutrality check.

    The background neutralizes the instantaneous density mean, which is the
    only consistent reading on a periodic domain.  Callers are responsible
    for validating the mean (see poisson_field for the strict contract).
    The unpaired Nyquist mode (even nx) is zeroed: its phase is not
    determined by real samples.
    """
    spec = np.fft.rfft(rho.values)
    kappa = 2.0 * np.pi * np.arange(1, spec.size) / rho.Lx
    spec[1:] = 1j * spec[1:] / kappa
    spec[0] = 0.0
    if rho.nx % 2 == 0:
        spec[-1] = 0.0
    return SpatialField(values=np.fft.irfft(spec, n=rho.nx), Lx=rho.Lx)


def poisson_field(rho: SpatialField, tol: float = NEUTRALITY_TOL) -> SpatialField:
    """Electric field of the neutral plasma: dE/dx = 1 - rho, mean(E) = 0.

    In spectral form Ehat(m) = i rhohat(m) / kappa_m for m != 0 and
    Ehat(0) = 0.  Rejects non-neutral densities; a drifting mean signals a
    mass-conservation bug upstream.
    """
    mean = rho.mean()
    if abs(mean - 1.0) > tol:
        raise ValueError(
            f"non-neutral density: |mean(rho) - 1| = {abs(mean - 1.0):.3e} > {tol:.1e}"
        )
    return poisson_fluctuation_field(rho)


def poisson_coeffs(rho: FourierCoeffs) -> FourierCoeffs:
    """Coefficient-space Poisson solve: same field equation, mean forced to 0."""
    kappa = rho.wavenumbers()
    return FourierCoeffs(a=rho.b / kappa, b=-rho.a / kappa, mean=0.0, Lx=rho.Lx)


def dirichlet_project(values_at_sensors: np.ndarray, N: int, Lx: float) -> FourierCoeffs:
    """Trigonometric interpolation of samples at x_i = (i-1) Lx / N.

    Returns the unique degree-floor((N-1)/2) polynomial through the sensor
    values for odd N.  For even N the unpaired Nyquist mode is dropped (its
    phase is unobservable from real samples), leaving degree (N-2)/2 and a
    least-squares projection instead of an interpolant.
    """
    y = np.asarray(values_at_sensors, dtype=float)
    if N <= 0:
        raise ValueError(f"sensor count must be positive, got N={N}")
    if y.shape != (N,):
        raise ValueError(f"expected {N} sensor values, got shape {y.shape}")
    degree = (N - 1) // 2
    spec = np.fft.rfft(y) / N
    a = 2.0 * spec[1 : degree + 1].real
    b = -2.0 * spec[1 : degree + 1].imag
    return FourierCoeffs(a=a, b=b, mean=float(spec[0].real), Lx=Lx)


def eval_trig(coeffs: FourierCoeffs, x) -> np.ndarray | float:
    """Pointwise evaluation of the trigonometric polynomial (x wrapped mod Lx)."""
    x = np.mod(np.asarray(x, dtype=float), coeffs.Lx)
    phase = np.multiply.outer(x, coeffs.wavenumbers())
    out = coeffs.mean + np.cos(phase) @ coeffs.a + np.sin(phase) @ coeffs.b
    return float(out) if out.ndim == 0 else out
