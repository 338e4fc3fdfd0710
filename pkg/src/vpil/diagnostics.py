"""Physical observables and file export.

Electric energy is the stabilization metric; the decay-rate fit extracts
the exponential slope of its log over a time window.  Exports are
deterministic: CSV numbers use round-trip-exact decimal rendering and the
snapshot binaries carry a fixed 64-byte header, so re-exporting identical
inputs reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import fmt
from .phase import DistributionField, PhaseGrid
from .runner import RunResult
from .spectral import SpatialField

SNAPSHOT_MAGIC = b"VPSN"
_SNAP_HEADER = struct.Struct("<4sIIIddd")
_SNAP_HEADER_BYTES = 64
ENERGY_FLOOR = 1e-300


@dataclass
class EnergySeries:
    times: np.ndarray
    energy: np.ndarray
    linf_rho: np.ndarray
    policy: str = ""
    seed: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float)
        self.linf_rho = np.asarray(self.linf_rho, dtype=float)
        if not (self.times.size == self.energy.size == self.linf_rho.size):
            raise ValueError("series arrays must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_run(cls, run: RunResult) -> "EnergySeries":
        return cls(
            times=run.times,
            energy=run.energy,
            linf_rho=run.linf_rho,
            policy=run.policy,
            seed=run.seed,
        )

    def time_average_energy(self, t_from: float, t_to: float) -> float:
        mask = (self.times >= t_from) & (self.times <= t_to)
        return float(np.mean(self.energy[mask]))


def electric_energy(E: SpatialField) -> float:
    """(1/2) integral of E^2 over the periodic domain."""
    return 0.5 * float(np.sum(E.values**2)) * E.dx


def kinetic_energy(f: DistributionField) -> float:
    """(1/2) integral of v^2 f over phase space."""
    v = f.grid.v_nodes()
    return 0.5 * float((f.values @ (v**2)).sum()) * f.grid.dx * f.grid.dv


def decay_rate_fit(series: EnergySeries, t_from: float, t_to: float) -> tuple[float, float]:
    """Least-squares slope of log energy on [t_from, t_to] and its r^2.

    A negative rate is decay, a positive rate growth.  Points at or below
    the underflow floor are dropped; fewer than 10 usable points (for
    example an all-zero window) make the fit undefined.
    """
    mask = (series.times >= t_from) & (series.times <= t_to) & (series.energy > ENERGY_FLOOR)
    t = series.times[mask]
    if t.size < 10:
        raise ValueError(
            f"decay fit undefined: only {t.size} usable points in [{t_from}, {t_to}]"
        )
    y = np.log(series.energy[mask])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), r2


def energy_csv_text(series: EnergySeries) -> str:
    lines = ["t,energy,linf_rho,policy,seed"]
    for t, e, li in zip(series.times, series.energy, series.linf_rho):
        lines.append(f"{fmt(t)},{fmt(e)},{fmt(li)},{series.policy},{series.seed}")
    return "\n".join(lines) + "\n"


def parse_energy_csv(text: str) -> EnergySeries:
    lines = text.strip().split("\n")
    if lines[0] != "t,energy,linf_rho,policy,seed":
        raise ValueError("unexpected CSV header")
    rows = [line.split(",") for line in lines[1:]]
    return EnergySeries(
        times=np.array([float(r[0]) for r in rows]),
        energy=np.array([float(r[1]) for r in rows]),
        linf_rho=np.array([float(r[2]) for r in rows]),
        policy=rows[0][3] if rows else "",
        seed=int(rows[0][4]) if rows else 0,
    )


def write_snapshot(path, f: DistributionField, t: float) -> None:
    """Binary snapshot: 64-byte header, then float32 nx x nv row-major."""
    g = f.grid
    header = _SNAP_HEADER.pack(SNAPSHOT_MAGIC, 1, g.nx, g.nv, g.Lx, g.vmax, t)
    with open(path, "wb") as fh:
        fh.write(header.ljust(_SNAP_HEADER_BYTES, b"\0"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f4").tobytes())


def read_snapshot(path) -> tuple[DistributionField, float]:
    raw = Path(path).read_bytes()
    magic, version, nx, nv, Lx, vmax, t = _SNAP_HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC or version != 1:
        raise ValueError(f"{path}: not a snapshot file")
    values = np.frombuffer(raw, dtype="<f4", offset=_SNAP_HEADER_BYTES).reshape(nx, nv)
    grid = PhaseGrid(Lx=Lx, nx=nx, vmax=vmax, nv=nv)
    return DistributionField(grid=grid, values=values.astype(float)), t


def export_run(
    series: EnergySeries,
    snapshots: list[tuple[float, DistributionField]],
    out_dir,
) -> list[Path]:
    """Write energy CSV, snapshot binaries, and a metadata index.

    Idempotent: identical inputs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "energy.csv"
    csv_path.write_text(energy_csv_text(series))
    written.append(csv_path)
    snap_names = []
    for t, f in snapshots:
        name = f"snap_{t:012.6f}.bin"
        write_snapshot(out / name, f, t)
        snap_names.append(name)
        written.append(out / name)
    meta = {
        "policy": series.policy,
        "seed": series.seed,
        "steps": int(series.times.size),
        "t_final": fmt(series.times[-1]) if series.times.size else "0",
        "snapshots": snap_names,
    }
    meta_path = out / "run_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written
