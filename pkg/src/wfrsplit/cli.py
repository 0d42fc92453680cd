"""``wfrsplit`` command line.

Exit codes: 0 success, 1 configuration error (nothing written), 2 a transport
step hit ``wstep.max_iter`` (outputs written and flagged in the manifest).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .grid import read_snapshot_csv, write_pgm, write_snapshot_csv
from .models import Diagnostics, Trajectory, run_model

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2

RUN_COMMANDS = {"run-scalar": "scalar", "run-system": "prey_predator",
                "run-heleshaw": "heleshaw", "run-nutrient": "nutrient"}

_SECOND = {"prey_predator": "mass_rho2", "nutrient": "mass_c"}


def diagnostics_columns(family: str) -> list[str]:
    """CSV header for a family; ``wall_time`` is left out so outputs are reproducible."""
    cols = ["step", "t", "mass_rho"]
    if family in _SECOND:
        cols.append(_SECOND[family])
    rest = [c for c in Diagnostics.COLUMNS if c not in ("step", "t", "mass_rho", "mass_2", "wall_time")]
    if family not in _SECOND:
        rest = [c for c in rest if c not in ("linf_2", "linf_2_half")]
    return cols + rest


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_diagnostics(path: Path, traj: Trajectory) -> Path:
    fam = traj.config.family
    cols = diagnostics_columns(fam)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for d in traj.diagnostics:
            row = d.as_row()
            if fam in _SECOND:
                row[_SECOND[fam]] = row["mass_2"]
            w.writerow([_fmt(row[c]) for c in cols])
    return path


def _snapshot_files(out: Path, rc: RunConfig, traj: Trajectory) -> list[Path]:
    grid = traj.grid
    files = []
    every = rc.every
    for k, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
        if k % every and k != len(traj.times) - 1:
            continue
        for name, values in snap.items():
            stem = f"{name}_{k:05d}"
            files.append(write_snapshot_csv(out / f"{stem}.csv", grid, values, t))
            if rc.pgm and grid.dim == 2:
                vmax = 1.0 if name == "rho" and traj.config.family in ("heleshaw", "nutrient") else rc.vmax
                files.append(write_pgm(out / f"{stem}.pgm", values, vmax))
    if rc.half:
        for k, snap in enumerate(traj.half_snapshots, 1):
            if k % every and k != len(traj.half_snapshots):
                continue
            t = (k - 0.5) * traj.config.h
            for name, values in snap.items():
                files.append(write_snapshot_csv(out / f"{name}_half_{k:05d}.csv", grid, values, t))
    return files


def _summary(traj: Trajectory) -> dict:
    rows = traj.diagnostics[1:]
    if not rows:
        return {"steps": 0, "converged": True}
    return {
        "steps": len(rows),
        "converged": traj.converged,
        "nonconverged_steps": [d.step for d in rows if not d.converged],
        "wstep_iters_total": int(sum(d.wstep_iters for d in rows)),
        "wstep_iters_max": int(max(d.wstep_iters for d in rows)),
        "max_w_mass_drift": max(d.w_mass_drift for d in rows),
        "sandwich_violations": int(sum(d.sandwich_violations for d in rows)),
        "final_mass_rho": rows[-1].mass_rho,
        "final_linf_rho": rows[-1].linf_rho,
    }


def write_outputs(out: Path, rc: RunConfig, traj: Trajectory, config_path, wall: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = _snapshot_files(out, rc, traj)
    files.append(write_diagnostics(out / "diagnostics.csv", traj))
    manifest = {
        "family": traj.config.family,
        "config_path": str(config_path),
        "config": rc.raw,
        "output_dir": str(out),
        "files": sorted(p.name for p in files) + ["manifest.json"],
        "wall_clock_seconds": wall,
        "warnings": rc.warnings,
        "solver": _summary(traj),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _thread_limit():
    n = os.environ.get("WFR_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def cmd_run(family: str, config, out, quiet: bool = False) -> int:
    try:
        rc = load_config(config, family)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in rc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    model = rc.model

    def progress(d):
        if not quiet and (d.step % max(1, model.steps // 10) == 0 or d.step == model.steps):
            print(f"step {d.step}/{model.steps}  t={d.t:.4g}  mass={d.mass_rho:.6g}  "
                  f"max={d.linf_rho:.4g}  iters={d.wstep_iters}", file=sys.stderr)

    t0 = time.perf_counter()
    try:
        with _thread_limit():
            traj = run_model(model, rc.initial, progress)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = write_outputs(Path(out), rc, traj, config, time.perf_counter() - t0)
    if not manifest["solver"]["converged"]:
        print(f"warning: transport step did not converge at steps "
              f"{manifest['solver']['nonconverged_steps']}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_validate(level: str, fr_tol: float = 1e-12, seed: int = 42) -> int:
    from .validation import run_validation

    t0 = time.perf_counter()
    with _thread_limit():
        results = run_validation(level, fr_tol=fr_tol, seed=seed)
    failed = sum(not c.passed for c in results)
    print(f"{len(results) - failed}/{len(results)} checks passed in {time.perf_counter() - t0:.1f}s")
    return 0 if failed == 0 else 1


def cmd_w2(a, b, n_t: int = 16, tol: float = 1e-6, max_iter: int = 3000) -> int:
    from .wstep import ALG2Config, dynamic_w2

    try:
        fa, fb = read_snapshot_csv(a), read_snapshot_csv(b)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if fa.grid.n != fb.grid.n or not np.allclose(fa.grid.lengths, fb.grid.lengths):
        print("error: snapshots live on different grids", file=sys.stderr)
        return EXIT_CONFIG
    ma, mb = fa.mass, fb.mass
    if not math.isclose(ma, mb, rel_tol=1e-6):
        print(f"error: masses differ ({ma!r} vs {mb!r})", file=sys.stderr)
        return EXIT_CONFIG
    vb = fb.values * (ma / mb) if mb > 0 else fb.values
    with _thread_limit():
        d2, rep = dynamic_w2(fa.values, vb, fa.grid, ALG2Config(n_t=n_t, tol=tol, max_iter=max_iter),
                             return_report=True)
    print(repr(d2))
    if rep is not None and not rep.converged:
        print(f"warning: ALG2 stopped after {rep.iterations} iterations with residuals "
              f"primal={rep.primal_residual:.2e} dual={rep.dual_residual:.2e} > tol={tol:g}",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wfrsplit", description="Wasserstein-Fisher-Rao splitting simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fam in RUN_COMMANDS.items():
        s = sub.add_parser(name, help=f"run the {fam.replace('_', '-')} model")
        s.add_argument("config", help="key = value configuration file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--quiet", action="store_true")
    v = sub.add_parser("validate", help="compare solvers against independent oracles")
    v.add_argument("level", choices=("quick", "full"), nargs="?", default="quick")
    v.add_argument("--frstep-tol", type=float, default=1e-12,
                   help="Newton tolerance handed to the FR step (for fault injection)")
    v.add_argument("--seed", type=int, default=42)
    w = sub.add_parser("w2", help="squared dynamic W2 distance between two snapshot CSVs")
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("--n-t", type=int, default=16)
    w.add_argument("--tol", type=float, default=1e-6)
    w.add_argument("--max-iter", type=int, default=3000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in RUN_COMMANDS:
        return cmd_run(RUN_COMMANDS[args.command], args.config, args.out, args.quiet)
    if args.command == "validate":
        return cmd_validate(args.level, args.frstep_tol, args.seed)
    return cmd_w2(args.a, args.b, args.n_t, args.tol, args.max_iter)


if __name__ == "__main__":
    sys.exit(main())
