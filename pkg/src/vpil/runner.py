"""Closed-loop integration of the controlled system under one policy.

The loop alternates: diagnostics at the step boundary, sensor sampling
every eta, a policy query, then one split step.  Burn-in is enforced here:
the policy is never queried before t0 and zero control is applied instead.
The expert policy is special-cased to exact in-step field cancellation
(its privileged access to the solver-internal field).

Mass bookkeeping: the velocity box sheds real mass through its boundary
under nonzero force, so the density-mean check inside each step compares
against the outflow-reconciled mass.  Drift beyond tolerance there means a
scheme bug, and a blow-up guard on the electrical energy aborts (and
records) runaway runs instead of hiding them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from .config import SimConfig
from .controllers import ControlAction, ControlQuery, ExpertControl
from .phase import DistributionField
from .scenarios import ScenarioParams, sample_initial
from .sensing import ObservationWindow, SensorArray, noise_generator, phase_generator
from .solver import CANCEL_FIELD, OUTFLOW_WARN_FRACTION, step
from .spectral import SpatialField, poisson_fluctuation_field

RecordHook = Callable[[float, np.ndarray, SpatialField, ControlAction | None], None]


@dataclass
class RunResult:
    policy: str
    seed: int
    trajectory: int
    times: np.ndarray
    energy: np.ndarray
    linf_rho: np.ndarray
    status: str = "completed"
    abort_time: float | None = None
    scenario: ScenarioParams | None = None
    snapshots: list[tuple[float, DistributionField]] = dataclass_field(default_factory=list)
    mass_initial: float = 0.0
    mass_final: float = 0.0
    boundary_outflow: float = 0.0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def reconciled_mass_drift(self) -> float:
        """Relative drift of mass + accumulated boundary outflow."""
        return abs(self.mass_final + self.boundary_outflow - self.mass_initial) / self.mass_initial

    def raw_mass_drift(self) -> float:
        return abs(self.mass_final - self.mass_initial) / self.mass_initial


def electric_energy_of(field: SpatialField) -> float:
    return 0.5 * float(np.sum(field.values**2)) * field.dx


def run_closed_loop(
    config: SimConfig,
    policy,
    *,
    trajectory: int = 0,
    initial: DistributionField | None = None,
    scenario: ScenarioParams | None = None,
    on_record: RecordHook | None = None,
    snapshot_times: tuple[float, ...] = (),
    blowup_factor: float = 1e6,
) -> RunResult:
    """Integrate from t = 0 to T under `policy`; deterministic given seed.

    Every eta a (possibly noisy) sensor reading is pushed into the window;
    at each step the policy is queried for the control held during that
    step.  `on_record` fires at each sample time at or after t0 with
    (t, window copy, internal field, applied action).
    """
    grid = config.grid
    sensors = SensorArray(config.sensors, grid.Lx, grid.nx)
    if initial is not None:
        state = initial.copy()
        realized = scenario
    else:
        state, realized = sample_initial(
            grid, config.scenario, phase_generator(config.seed, trajectory)
        )
    is_expert = isinstance(policy, ExpertControl)
    columns = max(config.sensors.K, getattr(policy, "min_window_columns", 1))
    window = ObservationWindow(N=config.sensors.N, K=columns, eta=config.sensors.eta)

    n_steps = config.n_steps
    sps = config.steps_per_sample
    times = np.zeros(n_steps + 1)
    energy = np.zeros(n_steps + 1)
    linf = np.zeros(n_steps + 1)
    snapshots: list[tuple[float, DistributionField]] = []
    snap_steps = {round(t / config.dt) for t in snapshot_times}

    mass0 = state.mass()
    outflow_total = 0.0
    warned_outflow = False
    status = "completed"
    abort_time = None
    kept = n_steps + 1

    for k in range(n_steps + 1):
        t = k * config.dt
        rho = state.density()
        efield = poisson_fluctuation_field(rho)
        times[k] = t
        energy[k] = electric_energy_of(efield)
        linf[k] = float(np.max(np.abs(rho.values - 1.0)))
        if k in snap_steps:
            snapshots.append((t, state.copy()))

        burn_in_elapsed = t >= config.t0 - 1e-12

        action: ControlAction | None = None
        if k % sps == 0:
            rng = (
                noise_generator(config.seed, trajectory, k // sps)
                if config.sensors.sigma_rho > 0
                else None
            )
            window.push(sensors.sample(rho, rng), t)

        if burn_in_elapsed:
            if is_expert:
                action = ExpertControl.action_from_field(efield)
            else:
                action = policy.query(ControlQuery(t=t, window=window, burn_in_elapsed=True))

        if on_record is not None and burn_in_elapsed and k % sps == 0:
            on_record(t, window.as_matrix(), efield, action)

        if energy[k] > blowup_factor * max(energy[0], 1e-12):
            status = f"aborted: energy {energy[k]:.3e} exceeded {blowup_factor:.1e} x initial"
            abort_time = t
            kept = k + 1
            break
        if k == n_steps:
            break

        if not burn_in_elapsed:
            control = None
        elif is_expert:
            control = CANCEL_FIELD
        else:
            control = action.as_field(grid.nx)
        expected_mean = (mass0 - outflow_total) / grid.Lx
        result = step(state, control, config.dt, expected_density_mean=expected_mean)
        outflow_total += result.boundary_outflow
        if (
            not warned_outflow
            and result.boundary_outflow > OUTFLOW_WARN_FRACTION * mass0
        ):
            warnings.warn(
                f"velocity-boundary outflow {result.boundary_outflow / mass0:.2e} of total "
                f"mass in one step at t={t:.3f}: vmax may be too small",
                stacklevel=2,
            )
            warned_outflow = True
        state = result.state

    return RunResult(
        policy=getattr(policy, "name", "unknown"),
        seed=config.seed,
        trajectory=trajectory,
        times=times[:kept],
        energy=energy[:kept],
        linf_rho=linf[:kept],
        status=status,
        abort_time=abort_time,
        scenario=realized,
        snapshots=snapshots,
        mass_initial=mass0,
        mass_final=state.mass(),
        boundary_outflow=outflow_total,
    )
