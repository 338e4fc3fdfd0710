"""Run configuration: physical parameters, sensing, and reproducibility.

Config files are flat INI text (key = value under sections); every value
has a default matching the reference experimental setup, and command-line
flags override file keys.  Floats are rendered with round-trip-exact
formatting so a written config reproduces the run byte-identically.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .phase import PhaseGrid
from .scenarios import ScenarioParams
from .sensing import SensorConfig

FORMAT_VERSION = 1


def fmt(x: float) -> str:
    """Decimal rendering with enough digits to round-trip a float64."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SimConfig:
    grid: PhaseGrid = field(default_factory=lambda: PhaseGrid(Lx=10 * np.pi, nx=1024, vmax=6.0, nv=1024))
    dt: float = 0.02
    T: float = 80.0
    t0: float = 1.0
    seed: int = 0
    sensors: SensorConfig = field(default_factory=SensorConfig)
    scenario: ScenarioParams = field(default_factory=lambda: ScenarioParams(vbar=2.4, eps=0.05, k1=1, k2=5))
    mf: int = 8

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0 <= self.t0 < self.T):
            raise ValueError("need 0 <= t0 < T")
        ratio = self.sensors.eta / self.dt
        if self.sensors.eta < self.dt or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("eta must be a positive integer multiple of dt")
        if self.grid.nx % self.sensors.N != 0:
            raise ValueError("nx must be divisible by the sensor count")
        if self.mf < 1 or 2 * self.mf + 1 > self.grid.nx:
            raise ValueError("control degree mf must satisfy 1 <= mf and 2*mf+1 <= nx")

    @property
    def steps_per_sample(self) -> int:
        return round(self.sensors.eta / self.dt)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    def desk(self) -> "SimConfig":
        """Reduced-resolution preset for CI and desk-scale comparisons."""
        return replace(
            self, grid=replace(self.grid, nx=256, nv=256), T=min(self.T, 30.0)
        )


def config_to_ini(cfg: SimConfig) -> str:
    p = configparser.ConfigParser()
    p["grid"] = {
        "Lx": fmt(cfg.grid.Lx),
        "nx": str(cfg.grid.nx),
        "nv": str(cfg.grid.nv),
        "vmax": fmt(cfg.grid.vmax),
    }
    p["time"] = {"dt": fmt(cfg.dt), "T": fmt(cfg.T), "t0": fmt(cfg.t0)}
    sc = {
        "vbar": fmt(cfg.scenario.vbar),
        "eps": fmt(cfg.scenario.eps),
        "k1": str(cfg.scenario.k1),
        "k2": str(cfg.scenario.k2),
    }
    if cfg.scenario.phi1 is not None:
        sc["phi1"] = fmt(cfg.scenario.phi1)
    if cfg.scenario.phi2 is not None:
        sc["phi2"] = fmt(cfg.scenario.phi2)
    p["scenario"] = sc
    p["sensors"] = {
        "N": str(cfg.sensors.N),
        "sigma_rho": fmt(cfg.sensors.sigma_rho),
        "eta": fmt(cfg.sensors.eta),
        "K": str(cfg.sensors.K),
    }
    p["run"] = {"seed": str(cfg.seed), "mf": str(cfg.mf)}
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


class ConfigError(ValueError):
    """Bad key or value in a config file; the message names the offender."""


def config_from_ini(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse INI text, overriding fields of `base` (defaults if omitted)."""
    cfg = base if base is not None else SimConfig()
    p = configparser.ConfigParser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    known = {
        "grid": {"lx", "nx", "nv", "vmax"},
        "time": {"dt", "t", "t0"},
        "scenario": {"vbar", "eps", "k1", "k2", "phi1", "phi2"},
        "sensors": {"n", "sigma_rho", "eta", "k"},
        "run": {"seed", "mf"},
    }
    for section in p.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        for key in p[section]:
            if key not in known[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")

    def get(section, key, conv, current):
        if section in p and key in p[section]:
            try:
                return conv(p[section][key])
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
        return current

    grid = PhaseGrid(
        Lx=get("grid", "Lx", float, cfg.grid.Lx),
        nx=get("grid", "nx", int, cfg.grid.nx),
        nv=get("grid", "nv", int, cfg.grid.nv),
        vmax=get("grid", "vmax", float, cfg.grid.vmax),
    )
    scenario = ScenarioParams(
        vbar=get("scenario", "vbar", float, cfg.scenario.vbar),
        eps=get("scenario", "eps", float, cfg.scenario.eps),
        k1=get("scenario", "k1", int, cfg.scenario.k1),
        k2=get("scenario", "k2", int, cfg.scenario.k2),
        phi1=get("scenario", "phi1", float, cfg.scenario.phi1),
        phi2=get("scenario", "phi2", float, cfg.scenario.phi2),
    )
    sensors = SensorConfig(
        N=get("sensors", "N", int, cfg.sensors.N),
        sigma_rho=get("sensors", "sigma_rho", float, cfg.sensors.sigma_rho),
        eta=get("sensors", "eta", float, cfg.sensors.eta),
        K=get("sensors", "K", int, cfg.sensors.K),
    )
    try:
        return SimConfig(
            grid=grid,
            dt=get("time", "dt", float, cfg.dt),
            T=get("time", "T", float, cfg.T),
            t0=get("time", "t0", float, cfg.t0),
            seed=get("run", "seed", int, cfg.seed),
            sensors=sensors,
            scenario=scenario,
            mf=get("run", "mf", int, cfg.mf),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
