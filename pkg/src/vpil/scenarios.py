"""Initial-condition construction for the two-stream control scenarios.

The experimental family is a two-stream Maxwellian equilibrium multiplied
by a low-frequency plus high-frequency cosine perturbation with phases
randomized per trajectory.  Constructors normalize total mass to exactly
Lx so the density mean is 1 (neutral plasma) regardless of the velocity
truncation deficit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .phase import DistributionField, PhaseGrid


@dataclass(frozen=True)
class ScenarioParams:
    vbar: float
    eps: float
    k1: int
    k2: int
    phi1: float | None = None
    phi2: float | None = None

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("mode indices must be >= 1")
        if self.k1 == self.k2:
            raise ValueError("mode indices must differ")

    def phases_fixed(self) -> bool:
        return self.phi1 is not None and self.phi2 is not None


def two_stream_mu(v, vbar: float):
    """Two-stream Maxwellian: unit-mass mixture of N(+-vbar, 1)."""
    v = np.asarray(v, dtype=float)
    norm = 1.0 / (2.0 * np.sqrt(2.0 * np.pi))
    return norm * (np.exp(-0.5 * (v - vbar) ** 2) + np.exp(-0.5 * (v + vbar) ** 2))


def perturbed_two_stream(
    grid: PhaseGrid, vbar: float, modes: list[tuple[int, float, float]]
) -> DistributionField:
    """f0(x,v) = mu(v) (1 + sum_m amp cos(2 pi k x / Lx + phase)), mass-normalized.

    `modes` is a list of (k, amplitude, phase).  Rejects parameter sets that
    make f0 negative anywhere on the grid.
    """
    x = grid.x_nodes()
    eta = np.zeros(grid.nx)
    for k, amp, phase in modes:
        if k < 1:
            raise ValueError(f"mode index must be >= 1, got {k}")
        eta += amp * np.cos(2.0 * np.pi * k * x / grid.Lx + phase)
    profile = 1.0 + eta
    if profile.min() <= 0.0:
        raise ValueError(
            f"perturbation makes f0 nonpositive (min spatial factor {profile.min():.3e})"
        )
    values = np.outer(profile, two_stream_mu(grid.v_nodes(), vbar))
    f = DistributionField(grid=grid, values=values)
    f.values *= grid.Lx / f.mass()
    return f


def dual_mode_init(grid: PhaseGrid, params: ScenarioParams) -> DistributionField:
    """The dual-mode perturbed equilibrium; phases must be fixed."""
    if not params.phases_fixed():
        raise ValueError("phases not fixed; draw them with sample_initial first")
    if 2.0 * params.eps >= 1.0:
        raise ValueError(f"eps={params.eps} too large: 2*eps must stay below 1")
    return perturbed_two_stream(
        grid,
        params.vbar,
        [(params.k1, params.eps, params.phi1), (params.k2, params.eps, params.phi2)],
    )


def sample_initial(
    grid: PhaseGrid, base: ScenarioParams, rng: np.random.Generator
) -> tuple[DistributionField, ScenarioParams]:
    """Draw phases uniformly on [0, 2 pi) unless fixed; return field + provenance."""
    phi1 = base.phi1 if base.phi1 is not None else float(rng.uniform(0.0, 2.0 * np.pi))
    phi2 = base.phi2 if base.phi2 is not None else float(rng.uniform(0.0, 2.0 * np.pi))
    realized = replace(base, phi1=phi1, phi2=phi2)
    return dual_mode_init(grid, realized), realized
