"""Phase-space grid and distribution-function container.

x is periodic on [0, Lx) with nodes x_i = i dx; v is truncated to
[-vmax, vmax) with cell-centered nodes v_j = -vmax + (j + 1/2) dv, so no
node sits on the boundary and the midpoint quadrature for velocity
integrals is spectrally accurate for rapidly decaying distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpatialField


@dataclass(frozen=True)
class PhaseGrid:
    Lx: float
    nx: int
    vmax: float
    nv: int

    def __post_init__(self):
        if self.Lx <= 0 or self.vmax <= 0:
            raise ValueError("Lx and vmax must be positive")
        if self.nx < 4 or self.nv < 4:
            raise ValueError("nx and nv must be at least 4")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.vmax / self.nv

    def x_nodes(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    def v_nodes(self) -> np.ndarray:
        return -self.vmax + (np.arange(self.nv) + 0.5) * self.dv


@dataclass
class DistributionField:
    """f(x, v) sampled on the phase grid; row = x index, column = v index."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.nx, self.grid.nv):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.nv})"
            )

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.dx * self.grid.dv)

    def density(self) -> SpatialField:
        """rho(x) = integral of f over v (midpoint sum times dv)."""
        return SpatialField(values=self.values.sum(axis=1) * self.grid.dv, Lx=self.grid.Lx)

    def copy(self) -> "DistributionField":
        return DistributionField(grid=self.grid, values=self.values.copy())
