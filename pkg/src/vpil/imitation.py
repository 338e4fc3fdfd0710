"""Expert demonstrations, behavior-cloning risks, ERM training, evaluation,
and the resolution-entropy estimator.

Dataset layout: a directory with manifest.json plus one binary file per
trajectory.  Binary format (little-endian): header magic "VPIL",
version u32, N u32, K u32, Mf u32, record count u32; each record is
t f64, window N*K f32 (row-major), target 2*Mf f64 ([a | b] of the
degree-Mf expert action).  Files are byte-identical for identical
manifests.

Loss convention: Eq-style trajectory losses use the un-normalized L2 norm
on [0, Lx) evaluated by Parseval in the degree-Mf coefficient space, so a
control-vs-target mismatch integrates to (Lx/2) |delta|^2 per mode pair.
The spectral tail of E beyond Mf is reported as a per-dataset truncation
diagnostic instead of entering the loss.
"""

from __future__ import annotations

import json
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, config_from_ini, config_to_ini
from .controllers import ControlQuery, ExpertControl, LinearPolicy
from .runner import RunResult, run_closed_loop
from .sensing import ObservationWindow
from .spectral import FourierCoeffs, fourier_forward

DATASET_MAGIC = b"VPIL"
MODEL_MAGIC = b"VPLM"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass
class Trajectory:
    trajectory: int
    times: np.ndarray  # (R,)
    windows: np.ndarray  # (R, N, K) float32 as stored
    targets: np.ndarray  # (R, 2 Mf) float64

    @property
    def records(self) -> int:
        return self.times.size


@dataclass
class Dataset:
    config: SimConfig
    mf: int
    trajectories: list[Trajectory]
    defects: list[dict] = field(default_factory=list)
    tail_fraction_mean: float = 0.0
    tail_fraction_max: float = 0.0

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def N(self) -> int:
        return self.config.sensors.N

    @property
    def K(self) -> int:
        return self.config.sensors.K

    def record_count(self) -> int:
        return sum(t.records for t in self.trajectories)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All (features, targets): features are flattened windows plus bias."""
        feats = []
        targs = []
        for tr in self.trajectories:
            flat = tr.windows.reshape(tr.records, -1).astype(float)
            feats.append(np.concatenate([flat, np.ones((tr.records, 1))], axis=1))
            targs.append(tr.targets)
        return np.concatenate(feats), np.concatenate(targs)

    def target_actions(self) -> list[FourierCoeffs]:
        Lx = self.config.grid.Lx
        out = []
        for tr in self.trajectories:
            for row in tr.targets:
                out.append(FourierCoeffs(a=row[: self.mf], b=row[self.mf :], mean=0.0, Lx=Lx))
        return out


def _target_vector(efield, mf: int) -> tuple[np.ndarray, float]:
    """Degree-mf coefficients of -E plus the relative spectral tail of E."""
    c = fourier_forward(efield, mf)
    vec = np.concatenate([-c.a, -c.b])
    total = float(np.mean(efield.values**2))
    kept = c.mean_square() - c.mean**2
    tail = max(total - kept, 0.0) / total if total > 0 else 0.0
    return vec, tail


def _run_expert_trajectory(args) -> tuple[int, Trajectory, float, str]:
    config_ini, trajectory, mf = args
    config = config_from_ini(config_ini)
    times: list[float] = []
    windows: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    tails: list[float] = []

    def record(t, window, efield, action):
        vec, tail = _target_vector(efield, mf)
        times.append(t)
        windows.append(window.astype(np.float32))
        targets.append(vec)
        tails.append(tail)

    result = run_closed_loop(config, ExpertControl(), trajectory=trajectory, on_record=record)
    traj = Trajectory(
        trajectory=trajectory,
        times=np.asarray(times),
        windows=np.stack(windows) if windows else np.zeros((0, config.sensors.N, config.sensors.K), np.float32),
        targets=np.stack(targets) if targets else np.zeros((0, 2 * mf)),
    )
    return trajectory, traj, float(np.mean(tails)) if tails else 0.0, result.status


def trajectory_filename(index: int) -> str:
    return f"traj_{index:05d}.bin"


def write_trajectory_file(path, traj: Trajectory, N: int, K: int, mf: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, N, K, mf, traj.records))
        for r in range(traj.records):
            fh.write(struct.pack("<d", traj.times[r]))
            fh.write(np.ascontiguousarray(traj.windows[r], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(traj.targets[r], dtype="<f8").tobytes())


def read_trajectory_file(path, trajectory: int) -> tuple[Trajectory, tuple[int, int, int]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, N, K, mf, count = _HEADER.unpack_from(raw, 0)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    rec_size = 8 + 4 * N * K + 8 * 2 * mf
    expected = _HEADER.size + count * rec_size
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated file ({len(raw)} bytes, expected {expected})")
    times = np.empty(count)
    windows = np.empty((count, N, K), dtype=np.float32)
    targets = np.empty((count, 2 * mf))
    off = _HEADER.size
    for r in range(count):
        (times[r],) = struct.unpack_from("<d", raw, off)
        off += 8
        windows[r] = np.frombuffer(raw, dtype="<f4", count=N * K, offset=off).reshape(N, K)
        off += 4 * N * K
        targets[r] = np.frombuffer(raw, dtype="<f8", count=2 * mf, offset=off)
        off += 8 * 2 * mf
    return Trajectory(trajectory=trajectory, times=times, windows=windows, targets=targets), (N, K, mf)


def generate_dataset(
    config: SimConfig,
    n: int,
    out_dir,
    *,
    trajectory_offset: int = 0,
    jobs: int = 1,
) -> Dataset:
    """Run n expert trajectories and persist (window, target) records.

    Records are taken at every sampling instant in [t0, T] (both endpoints
    when on the sampling grid).  A blown-up trajectory is kept with the
    records gathered before the abort and marked as a defect.
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_ini = config_to_ini(config)
    indices = [trajectory_offset + i for i in range(n)]
    args = [(config_ini, idx, config.mf) for idx in indices]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_expert_trajectory, args))
    else:
        results = [_run_expert_trajectory(a) for a in args]
    results.sort(key=lambda r: r[0])

    trajectories = []
    defects = []
    tails = []
    for idx, traj, tail_mean, status in results:
        write_trajectory_file(out / trajectory_filename(idx), traj, config.sensors.N, config.sensors.K, config.mf)
        trajectories.append(traj)
        tails.append(tail_mean)
        if status != "completed":
            defects.append({"trajectory": idx, "status": status})
            warnings.warn(f"trajectory {idx} marked defective: {status}", stacklevel=2)

    manifest = {
        "format_version": DATASET_VERSION,
        "config_ini": config_ini,
        "mf": config.mf,
        "n": n,
        "trajectories": indices,
        "defects": defects,
        "tail_fraction_mean": float(np.mean(tails)) if tails else 0.0,
        "tail_fraction_max": float(np.max(tails)) if tails else 0.0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return Dataset(
        config=config,
        mf=config.mf,
        trajectories=trajectories,
        defects=defects,
        tail_fraction_mean=manifest["tail_fraction_mean"],
        tail_fraction_max=manifest["tail_fraction_max"],
    )


def load_dataset(path) -> Dataset:
    from pathlib import Path

    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    config = config_from_ini(manifest["config_ini"])
    mf = int(manifest["mf"])
    trajectories = []
    for idx in manifest["trajectories"]:
        traj, (N, K, file_mf) = read_trajectory_file(root / trajectory_filename(idx), idx)
        if (N, K, file_mf) != (config.sensors.N, config.sensors.K, mf):
            raise ValueError(
                f"geometry mismatch in {trajectory_filename(idx)}: "
                f"file ({N}, {K}, {file_mf}) vs manifest "
                f"({config.sensors.N}, {config.sensors.K}, {mf})"
            )
        trajectories.append(traj)
    return Dataset(
        config=config,
        mf=mf,
        trajectories=trajectories,
        defects=list(manifest.get("defects", [])),
        tail_fraction_mean=manifest.get("tail_fraction_mean", 0.0),
        tail_fraction_max=manifest.get("tail_fraction_max", 0.0),
    )


def export_dataset_csv(dataset: Dataset, out_path) -> None:
    """Flat CSV mirror of the records for inspection."""
    from .config import fmt

    with open(out_path, "w") as fh:
        n_cells = dataset.N * dataset.K
        window_cols = ",".join(f"w{i}" for i in range(n_cells))
        target_cols = ",".join(
            [f"a{m + 1}" for m in range(dataset.mf)] + [f"b{m + 1}" for m in range(dataset.mf)]
        )
        fh.write(f"trajectory,t,{window_cols},{target_cols}\n")
        for tr in dataset.trajectories:
            for r in range(tr.records):
                cells = ",".join(fmt(v) for v in tr.windows[r].reshape(-1))
                targ = ",".join(fmt(v) for v in tr.targets[r])
                fh.write(f"{tr.trajectory},{fmt(tr.times[r])},{cells},{targ}\n")


@dataclass
class RiskReport:
    risk: float
    per_trajectory: np.ndarray
    times: np.ndarray
    time_curve: np.ndarray  # mean record loss at each time


def coefficient_loss(pred: np.ndarray, target: np.ndarray, Lx: float) -> float:
    """Un-normalized L2 mismatch of two mean-free coefficient vectors."""
    d = pred - target
    return 0.5 * Lx * float(d @ d)


def empirical_risk(policy, dataset: Dataset) -> RiskReport:
    """Offline behavior-cloning risk of `policy` on stored windows.

    Per record: || pi(window) - target ||^2 in the degree-Mf space;
    trajectory loss is eta/(T - t0) times the record sum; the risk is the
    mean over trajectories.
    """
    cfg = dataset.config
    Lx = cfg.grid.Lx
    weight = cfg.sensors.eta / (cfg.T - cfg.t0)
    per_traj = np.zeros(dataset.n)
    times = None
    curve_acc = None
    for j, tr in enumerate(dataset.trajectories):
        losses = np.zeros(tr.records)
        for r in range(tr.records):
            window = ObservationWindow.from_matrix(
                tr.windows[r].astype(float), eta=cfg.sensors.eta, t_end=tr.times[r]
            )
            action = policy.query(
                ControlQuery(t=float(tr.times[r]), window=window, burn_in_elapsed=True)
            )
            pred = action.as_coeffs(dataset.mf)
            losses[r] = coefficient_loss(
                np.concatenate([pred.a, pred.b]), tr.targets[r], Lx
            )
        per_traj[j] = weight * losses.sum()
        if times is None:
            times = tr.times
            curve_acc = losses
        elif tr.records == times.size:
            curve_acc = curve_acc + losses
    return RiskReport(
        risk=float(per_traj.mean()),
        per_trajectory=per_traj,
        times=times if times is not None else np.zeros(0),
        time_curve=(curve_acc / dataset.n) if curve_acc is not None else np.zeros(0),
    )


def fit_linear_erm(dataset: Dataset, ridge: float = 1e-8) -> LinearPolicy:
    """Least-squares fit of the linear window policy.

    Parseval decouples the L2 trajectory loss into independent per-mode
    regressions, solved jointly through the shared normal equations.
    `ridge` is trace-scaled: the effective penalty is
    ridge * tr(X^T X) / n_features.  With ridge = 0 a rank-deficient
    system falls back to the minimum-norm solution (with a warning), which
    still attains the empirical-risk minimum.
    """
    if dataset.record_count() < 1:
        raise ValueError("empty dataset")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    X, Y = dataset.stacked()
    cfg = dataset.config
    if ridge > 0:
        gram = X.T @ X
        lam = ridge * np.trace(gram) / gram.shape[0]
        W = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), X.T @ Y).T
    else:
        W, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
        if rank < X.shape[1]:
            warnings.warn(
                f"normal equations rank-deficient ({rank}/{X.shape[1]}); "
                "returning the minimum-norm solution",
                stacklevel=2,
            )
        W = W.T
    return LinearPolicy(
        W=W,
        N=cfg.sensors.N,
        K=cfg.sensors.K,
        mf=dataset.mf,
        Lx=cfg.grid.Lx,
        ridge=ridge,
    )


_MODEL_HEADER = struct.Struct("<4sIIIIdd")


def save_linear(policy: LinearPolicy, path) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _MODEL_HEADER.pack(
                MODEL_MAGIC, 1, policy.N, policy.K, policy.mf, policy.Lx, policy.ridge
            )
        )
        fh.write(np.ascontiguousarray(policy.W, dtype="<f8").tobytes())


def load_linear(path) -> LinearPolicy:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, N, K, mf, Lx, ridge = _MODEL_HEADER.unpack_from(raw, 0)
    if magic != MODEL_MAGIC or version != 1:
        raise ValueError(f"{path}: not a linear policy file")
    W = np.frombuffer(raw, dtype="<f8", offset=_MODEL_HEADER.size).reshape(2 * mf, N * K + 1)
    return LinearPolicy(W=W.copy(), N=N, K=K, mf=mf, Lx=Lx, ridge=ridge)


@dataclass
class ClosedLoopReport:
    risk: float
    per_run: np.ndarray
    results: list[RunResult]

    @property
    def completed(self) -> int:
        return sum(r.completed for r in self.results)


def _eval_one(args):
    config_ini, trajectory, policy, mf = args
    config = config_from_ini(config_ini)
    Lx = config.grid.Lx
    losses: list[float] = []

    def record(t, window, efield, action):
        target, _ = _target_vector(efield, mf)
        pred = action.as_coeffs(mf)
        losses.append(coefficient_loss(np.concatenate([pred.a, pred.b]), target, Lx))

    result = run_closed_loop(config, policy, trajectory=trajectory, on_record=record)
    weight = config.sensors.eta / (config.T - config.t0)
    return trajectory, weight * float(np.sum(losses)), result


def eval_policy_closed_loop(
    policy,
    config: SimConfig,
    m: int,
    *,
    trajectory_offset: int = 10_000,
    jobs: int = 1,
) -> ClosedLoopReport:
    """Deploy `policy` on m fresh initial conditions; Monte-Carlo risk along
    the policy's own trajectories plus the stabilization energy curves.

    The default trajectory offset keeps evaluation seeds disjoint from
    training trajectories.  Blow-ups are recorded per run, not fatal.
    """
    config_ini = config_to_ini(config)
    args = [(config_ini, trajectory_offset + j, policy, config.mf) for j in range(m)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_eval_one, args))
    else:
        rows = [_eval_one(a) for a in args]
    rows.sort(key=lambda r: r[0])
    per_run = np.array([r[1] for r in rows])
    return ClosedLoopReport(
        risk=float(per_run.mean()), per_run=per_run, results=[r[2] for r in rows]
    )


@dataclass
class EntropyEstimate:
    value: float
    floored: int  # points whose eps-ball contained no neighbor


def estimate_resolution_entropy(samples: np.ndarray, eps: float) -> EntropyEstimate:
    """Leave-one-out plug-in estimate of the resolution entropy at scale eps.

    H = -(1/n) sum_i log( #{j != i : |f_j - f_i| <= eps} / (n-1) ), with
    empty neighborhoods floored at count 1 (bias reported via `floored`).
    Distances are Euclidean on the provided sample vectors; callers embed
    function-space samples so that Euclidean distance equals the L2 norm.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    sq = np.sum(samples**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (samples @ samples.T)
    np.fill_diagonal(d2, np.inf)
    counts = np.sum(d2 <= eps * eps + 1e-300, axis=1)
    floored = int(np.sum(counts == 0))
    counts = np.maximum(counts, 1)
    return EntropyEstimate(
        value=float(-np.mean(np.log(counts / (n - 1)))), floored=floored
    )


def coeff_rows_to_l2_embedding(rows: np.ndarray, Lx: float) -> np.ndarray:
    """Scale mean-free [a | b] rows so Euclidean distance is the L2 norm."""
    return np.sqrt(Lx / 2.0) * np.asarray(rows, dtype=float)
