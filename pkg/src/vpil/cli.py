"""Command-line workbench: simulate, generate datasets, train, evaluate,
compare baselines, and probe dataset complexity.

Every output directory receives a manifest (resolved config, tool version,
timestamp, seeds) sufficient to reproduce the data files byte-identically;
the timestamp is provenance only.  Exit codes: 0 ok, 1 runtime failure,
2 usage error.  The VPIL_SEED environment variable overrides the config
seed; explicit --seed beats both.
"""

from __future__ import annotations

import argparse
import datetime
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SimConfig, config_from_ini, config_to_ini, fmt
from .controllers import (
    AggregationConfig,
    ExpertControl,
    ExponentialWeightControl,
    ExtrapolationConfig,
    InstantSpectralControl,
    WindowExtrapolationControl,
    ZeroControl,
    atoms_from_actions,
)
from .diagnostics import EnergySeries, energy_csv_text, export_run
from .imitation import (
    coeff_rows_to_l2_embedding,
    empirical_risk,
    estimate_resolution_entropy,
    eval_policy_closed_loop,
    fit_linear_erm,
    generate_dataset,
    load_dataset,
    load_linear,
    save_linear,
)
from .protocol import ExternalProcessControl
from .runner import run_closed_loop

POLICY_NAMES = ("b0", "b1", "expert", "pi0", "agg", "linear:PATH", "external:CMD")


class UsageError(Exception):
    pass


def resolve_config(args) -> SimConfig:
    cfg = SimConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        cfg = config_from_ini(path.read_text(), base=cfg)
    if getattr(args, "desk", False):
        cfg = cfg.desk()
    env_seed = os.environ.get("VPIL_SEED")
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError as exc:
            raise UsageError(f"VPIL_SEED must be an integer: {env_seed!r}") from exc
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    for item in getattr(args, "set", None) or []:
        cfg = apply_override(cfg, item)
    return cfg


def apply_override(cfg: SimConfig, item: str) -> SimConfig:
    """--set section.key=value, routed through the INI parser."""
    try:
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
    except ValueError as exc:
        raise UsageError(f"bad --set (want section.key=value): {item!r}") from exc
    snippet = f"[{section.strip()}]\n{key.strip()} = {value.strip()}\n"
    try:
        return config_from_ini(snippet, base=cfg)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def default_extrapolation(cfg: SimConfig, p: int = 2) -> ExtrapolationConfig:
    # largest horizon whose deepest tap fits the sensing window
    K = cfg.sensors.K - 1
    M = max(1, (cfg.sensors.N - 1) // 2)
    return ExtrapolationConfig(p=p, K=K, M=M)


def build_policy(name: str, cfg: SimConfig, args):
    Lx = cfg.grid.Lx
    N = cfg.sensors.N
    if name == "b0":
        return ZeroControl(Lx)
    if name == "b1":
        return InstantSpectralControl(Lx, N)
    if name == "expert":
        return ExpertControl()
    if name == "pi0":
        return WindowExtrapolationControl(default_extrapolation(cfg, p=args.order), Lx, N)
    if name == "agg":
        if not getattr(args, "data", None):
            raise UsageError("policy 'agg' needs --data DIR for its atom library")
        dataset = load_dataset(args.data)
        base = WindowExtrapolationControl(default_extrapolation(cfg, p=args.order), Lx, N)
        atoms = atoms_from_actions(dataset.target_actions(), N=N, Lx=Lx, cap=args.atom_cap)
        if args.tau is not None:
            tau = args.tau
        else:
            delta = base.cfg.max_lag * cfg.sensors.eta
            tau = max(cfg.sensors.sigma_rho**2 * cfg.sensors.eta / delta, 1e-8)
        return ExponentialWeightControl(
            base, AggregationConfig(atoms=atoms, M=base.cfg.M, Lx=Lx, tau=tau, N=N)
        )
    if name.startswith("linear:"):
        path = Path(name.split(":", 1)[1])
        if not path.exists():
            raise UsageError(f"linear policy file not found: {path}")
        policy = load_linear(path)
        from .controllers import LinearWindowControl

        if policy.N != N or policy.K != cfg.sensors.K:
            raise UsageError(
                f"model geometry (N={policy.N}, K={policy.K}) does not match config "
                f"(N={N}, K={cfg.sensors.K})"
            )
        return LinearWindowControl(policy)
    if name.startswith("external:"):
        import shlex

        cmd = shlex.split(name.split(":", 1)[1])
        if not cmd:
            raise UsageError("external policy needs a command")
        return ExternalProcessControl(
            cmd, N=N, K=cfg.sensors.K, eta=cfg.sensors.eta, Lx=Lx, mf=cfg.mf,
            timeout=args.timeout,
        )
    raise UsageError(
        f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}"
    )


def write_manifest(out: Path, cfg: SimConfig, command: str, extra: dict | None = None) -> None:
    lines = [config_to_ini(cfg)]
    lines.append("[provenance]")
    lines.append(f"tool_version = {__version__}")
    lines.append(f"command = {command}")
    lines.append(f"timestamp = {datetime.datetime.now(datetime.timezone.utc).isoformat()}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    (out / "manifest.cfg").write_text("\n".join(lines) + "\n")


class StagedDir:
    """Write outputs into a staging directory; publish on success only."""

    def __init__(self, target):
        self.target = Path(target)
        self.staging = self.target.with_name(self.target.name + f".partial-{os.getpid()}")

    def __enter__(self) -> Path:
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir(parents=True)
        return self.staging

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        os.replace(self.staging, self.target)
        return False


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    policy = build_policy(args.policy, cfg, args)
    snap_times = tuple(float(s) for s in args.snap.split(",")) if args.snap else ()
    try:
        with StagedDir(args.out) as out:
            result = run_closed_loop(
                cfg, policy, trajectory=args.trajectory, snapshot_times=snap_times,
                blowup_factor=args.blowup_factor,
            )
            export_run(EnergySeries.from_run(result), result.snapshots, out)
            write_manifest(
                out, cfg, "simulate",
                {"policy": args.policy, "trajectory": str(args.trajectory), "status": result.status},
            )
    finally:
        if hasattr(policy, "close"):
            policy.close()
    print(
        f"simulate {policy.name}: {result.status}; "
        f"energy {result.energy[0]:.6g} -> {result.energy[-1]:.6g}; "
        f"wrote {args.out}"
    )
    return 0 if result.completed else 1


def cmd_dataset(args) -> int:
    cfg = resolve_config(args)
    with StagedDir(args.out) as out:
        ds = generate_dataset(
            cfg, args.n, out, trajectory_offset=args.offset, jobs=args.jobs
        )
        write_manifest(
            out, cfg, "dataset",
            {
                "n": str(args.n),
                "trajectory_offset": str(args.offset),
                "tail_fraction_max": fmt(ds.tail_fraction_max),
            },
        )
        if args.csv:
            from .imitation import export_dataset_csv

            export_dataset_csv(ds, out / "records.csv")
    print(
        f"dataset: {ds.n} trajectories, {ds.record_count()} records, "
        f"{len(ds.defects)} defects, spectral tail <= {ds.tail_fraction_max:.2e}; wrote {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    policy = fit_linear_erm(dataset, ridge=args.ridge)
    from .controllers import LinearWindowControl

    risk = empirical_risk(LinearWindowControl(policy), dataset).risk
    out = Path(args.out)
    tmp = out.with_name(out.name + f".partial-{os.getpid()}")
    save_linear(policy, tmp)
    os.replace(tmp, out)
    print(
        f"train: {dataset.record_count()} records, ridge={args.ridge:g}, "
        f"empirical risk {risk:.6e}; wrote {out}"
    )
    return 0


def cmd_eval(args) -> int:
    if args.data:
        dataset = load_dataset(args.data)
        cfg = dataset.config
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    else:
        cfg = resolve_config(args)
    policy = build_policy(args.policy, cfg, args)
    try:
        with StagedDir(args.out) as out:
            report = eval_policy_closed_loop(
                policy, cfg, args.m, trajectory_offset=args.offset, jobs=args.jobs
            )
            for run in report.results:
                series = EnergySeries.from_run(run)
                (out / f"energy_t{run.trajectory:05d}.csv").write_text(energy_csv_text(series))
            lines = ["trajectory,loss,status,final_energy"]
            for run, loss in zip(report.results, report.per_run):
                lines.append(f"{run.trajectory},{fmt(loss)},{run.status.split(':')[0]},{fmt(run.energy[-1])}")
            (out / "risks.csv").write_text("\n".join(lines) + "\n")
            write_manifest(
                out, cfg, "eval",
                {"policy": args.policy, "m": str(args.m), "risk": fmt(report.risk)},
            )
    finally:
        if hasattr(policy, "close"):
            policy.close()
    print(
        f"eval {policy.name}: closed-loop risk {report.risk:.6e} over {args.m} runs "
        f"({report.completed} completed); wrote {args.out}"
    )
    return 0


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if not names:
        raise UsageError("no policies given")
    policies = {name: build_policy(name, cfg, args) for name in names}
    averages: dict[str, list[float]] = {name: [] for name in names}
    try:
        with StagedDir(args.out) as out:
            for name, policy in policies.items():
                for j in range(args.m):
                    traj = args.offset + j
                    result = run_closed_loop(
                        cfg, policy, trajectory=traj, blowup_factor=args.blowup_factor
                    )
                    series = EnergySeries.from_run(result)
                    safe = name.replace(":", "_").replace("/", "_")
                    (out / f"energy_{safe}_t{traj:05d}.csv").write_text(energy_csv_text(series))
                    mask = series.times >= cfg.t0
                    averages[name].append(float(np.mean(series.energy[mask])))
            lines = ["policy,trajectory,time_averaged_energy"]
            for name in names:
                for j, avg in enumerate(averages[name]):
                    lines.append(f"{name},{args.offset + j},{fmt(avg)}")
            (out / "summary.csv").write_text("\n".join(lines) + "\n")
            write_manifest(out, cfg, "compare", {"policies": ",".join(names), "m": str(args.m)})
    finally:
        for policy in policies.values():
            if hasattr(policy, "close"):
                policy.close()
    for name in names:
        mean = np.mean(averages[name])
        print(f"compare {name}: mean time-averaged energy {mean:.6g} over {args.m} runs")
    print(f"wrote {args.out}")
    return 0


def cmd_entropy(args) -> int:
    dataset = load_dataset(args.data)
    rows = np.concatenate([t.targets for t in dataset.trajectories])
    if args.limit and rows.shape[0] > args.limit:
        idx = np.linspace(0, rows.shape[0] - 1, args.limit).round().astype(int)
        rows = rows[idx]
    samples = coeff_rows_to_l2_embedding(rows, dataset.config.grid.Lx)
    print("eps,entropy,floored")
    for token in args.eps_grid.split(","):
        eps = float(token)
        est = estimate_resolution_entropy(samples, eps)
        print(f"{fmt(eps)},{fmt(est.value)},{est.floored}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpil",
        description="Vlasov-Poisson stabilization workbench: simulate, learn, compare.",
    )
    parser.add_argument("--version", action="version", version=f"vpil {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="INI config file (defaults embed the reference setup)")
        p.add_argument("--desk", action="store_true", help="desk-scale preset: 256x256 grid, T<=30")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a single config key (repeatable)")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    def policy_flags(p):
        p.add_argument("--data", help="dataset directory (atoms for agg; geometry source)")
        p.add_argument("--order", type=int, default=2, help="extrapolation order for pi0/agg")
        p.add_argument("--tau", type=float, default=None, help="aggregation temperature")
        p.add_argument("--atom-cap", type=int, default=2000)
        p.add_argument("--timeout", type=float, default=5.0, help="external controller timeout (s)")

    p = sub.add_parser("simulate", help="run one closed loop under a policy")
    common(p)
    policy_flags(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--trajectory", type=int, default=0, help="trajectory index (phase/noise streams)")
    p.add_argument("--snap", help="comma-separated snapshot times")
    p.add_argument("--blowup-factor", type=float, default=1e6)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("dataset", help="generate expert demonstrations")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--offset", type=int, default=0, help="first trajectory index")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", action="store_true", help="also export records.csv")
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("train", help="fit the linear window policy by ERM")
    p.add_argument("--data", required=True)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="closed-loop evaluation on held-out initial conditions")
    common(p)
    policy_flags(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--offset", type=int, default=10_000, help="first held-out trajectory index")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="matched-seed baseline comparison")
    common(p)
    policy_flags(p)
    p.add_argument("--policies", required=True, help="comma-separated policy names")
    p.add_argument("--m", type=int, default=1, help="random-phase trajectories per policy")
    p.add_argument("--offset", type=int, default=20_000)
    p.add_argument("--blowup-factor", type=float, default=1e6)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("entropy", help="resolution entropy of dataset expert actions")
    p.add_argument("--data", required=True)
    p.add_argument("--eps-grid", required=True, help="comma-separated radii")
    p.add_argument("--limit", type=int, default=4000, help="subsample cap")
    p.set_defaults(fn=cmd_entropy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
