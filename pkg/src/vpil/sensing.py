"""Observation model: uniform density sensors and the rolling window.

N sensors sit at x_i = (i-1) Lx / N, snapped onto solver grid nodes
(nx must be divisible by N) so no interpolation enters the measurement.
Readings are taken every eta time units with iid Gaussian noise and pushed
into a fixed-width ring buffer whose newest column is the current time.

Noise reproducibility: every (trajectory, sample step) pair owns a Philox
counter block derived from the manifest seed, so streams are independent
across sensors, steps, and trajectories, identical across policies run on
matched seeds, and insensitive to execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpatialField

_NOISE_STREAM = 0
_PHASE_STREAM = 1


def _generator(seed: int, trajectory: int, counter: int, stream: int) -> np.random.Generator:
    bitgen = np.random.Philox(
        counter=[counter, stream, 0, 0],
        key=[seed & 0xFFFFFFFFFFFFFFFF, trajectory & 0xFFFFFFFFFFFFFFFF],
    )
    return np.random.Generator(bitgen)


def noise_generator(seed: int, trajectory: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream for the sensor noise of one sample instant."""
    return _generator(seed, trajectory, sample_index, _NOISE_STREAM)


def phase_generator(seed: int, trajectory: int) -> np.random.Generator:
    """Counter-based stream for the random initial phases of one trajectory."""
    return _generator(seed, trajectory, 0, _PHASE_STREAM)


@dataclass(frozen=True)
class SensorConfig:
    N: int = 4
    sigma_rho: float = 0.02
    eta: float = 0.02
    K: int = 50

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one sensor")
        if self.sigma_rho < 0:
            raise ValueError("sigma_rho must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.K < 1:
            raise ValueError("window length must be at least 1")


class SensorArray:
    """Sensors bound to a solver grid; positions x_i = (i-1) Lx / N."""

    def __init__(self, config: SensorConfig, Lx: float, nx: int):
        if nx % config.N != 0:
            raise ValueError(
                f"nx={nx} not divisible by N={config.N}: sensors must sit on grid nodes"
            )
        self.config = config
        self.Lx = Lx
        self.node_indices = np.arange(config.N) * (nx // config.N)
        self.positions = self.node_indices * (Lx / nx)

    def sample(self, rho: SpatialField, rng: np.random.Generator | None) -> np.ndarray:
        """rho at the sensor nodes plus iid N(0, sigma_rho^2) noise."""
        readings = rho.values[self.node_indices].copy()
        if self.config.sigma_rho > 0.0:
            if rng is None:
                raise ValueError("noisy sensors need an rng stream")
            readings += rng.normal(0.0, self.config.sigma_rho, size=self.config.N)
        return readings


class ObservationWindow:
    """N x K ring buffer of sensor readings, newest column last.

    Before K pushes the missing leading columns are zero and `fill` counts
    the populated ones.
    """

    def __init__(self, N: int, K: int, eta: float):
        self.N = N
        self.K = K
        self.eta = eta
        self.matrix = np.zeros((N, K))
        self.fill = 0
        self.t_end: float | None = None

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, eta: float, t_end: float) -> "ObservationWindow":
        matrix = np.asarray(matrix, dtype=float)
        w = cls(N=matrix.shape[0], K=matrix.shape[1], eta=eta)
        w.matrix = matrix.copy()
        w.fill = matrix.shape[1]
        w.t_end = t_end
        return w

    @property
    def full(self) -> bool:
        return self.fill >= self.K

    def push(self, reading: np.ndarray, t: float) -> None:
        reading = np.asarray(reading, dtype=float)
        if reading.shape != (self.N,):
            raise ValueError(f"expected {self.N} readings, got shape {reading.shape}")
        if self.t_end is not None and not np.isclose(t, self.t_end + self.eta):
            raise ValueError(
                f"out-of-order push: expected t={self.t_end + self.eta:.6g}, got {t:.6g}"
            )
        self.matrix[:, :-1] = self.matrix[:, 1:]
        self.matrix[:, -1] = reading
        self.fill = min(self.fill + 1, self.K)
        self.t_end = t

    def column_at_lag(self, lag: int) -> np.ndarray:
        """Column `lag` steps before the newest; lag 0 is the newest."""
        if lag < 0 or lag > self.K - 1:
            raise ValueError(f"lag {lag} outside window of {self.K} columns")
        return self.matrix[:, self.K - 1 - lag]

    def as_matrix(self) -> np.ndarray:
        return self.matrix.copy()


def augment_differences(window: ObservationWindow) -> np.ndarray:
    """Concatenate [values | forward time differences]; first difference is 0.

    Requires a full window: differences across the zero-padded fill region
    would be fabricated jumps.
    """
    if not window.full:
        raise ValueError(f"window not full: {window.fill}/{window.K} columns")
    values = window.matrix
    diffs = np.zeros_like(values)
    diffs[:, 1:] = values[:, 1:] - values[:, :-1]
    return np.concatenate([values, diffs], axis=1)
