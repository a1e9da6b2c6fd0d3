"""Command-line entry points: run / verify / calibrate.

`run` executes an ensemble described by a plain-text manifest (INI sections,
documented in the README), writing per-member snapshots, a diagnostics CSV
and a stop record, and echoing the manifest for provenance.  Exit codes:
0 completed, 2 when any member's stopping rule fired (so scripts can tell
blow-up-suspect runs from failures), 1 on errors.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import platform
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import calibration as cal
from . import noise
from . import operators as op
from . import stepper as st
from . import verify
from .field import ConfigError, Grid, abc_field, random_divfree, read_snapshot, write_snapshot

WORKERS_ENV = "STOCHVORT_WORKERS"


def _load_manifest(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"manifest parse error: {exc}") from exc
    return cp


def _get(cp, section, key, cast=str, default=None, required=False):
    if not cp.has_section(section) and required:
        raise ConfigError(f"manifest missing section [{section}]")
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"manifest missing key '{key}' in section [{section}]")
        return default
    raw = cp.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if cast is float and raw.strip().lower() in ("inf", "infinity"):
            return math.inf
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: invalid value {raw!r}") from exc


def _build_grid(cp) -> Grid:
    n = _get(cp, "grid", "n", int, required=True)
    L = _get(cp, "grid", "L", float, default=2.0 * math.pi)
    return Grid(n, L)


def _build_basis(cp, grid: Grid):
    kind = _get(cp, "noise", "kind", str, default="none").strip().lower()
    if kind in ("none", ""):
        return None
    if kind == "fourier":
        kmax = _get(cp, "noise", "kmax", int, required=True)
        alpha = _get(cp, "noise", "alpha", float, required=True)
        seed = _get(cp, "noise", "seed", int, default=0)
        return noise.build_fourier_basis(grid, kmax=kmax, alpha=alpha, seed=seed)
    if kind == "imported":
        path = _get(cp, "noise", "path", str, required=True)
        if not os.path.exists(path):
            raise ConfigError(f"[noise] path: no such basis directory {path!r}")
        return noise.load_basis(path, grid)
    raise ConfigError(f"[noise] kind: unknown value {kind!r} (fourier | imported | none)")


def _build_initial(cp, grid: Grid):
    kind = _get(cp, "initial", "kind", str, required=True).strip().lower()
    if kind == "beltrami":
        return abc_field(grid)
    if kind == "zero":
        from .field import VectorField

        return VectorField.zeros(grid)
    if kind == "random":
        seed = _get(cp, "initial", "seed", int, default=1)
        kmax = _get(cp, "initial", "kmax", int, default=4)
        amp = _get(cp, "initial", "amplitude", float, default=1.0)
        return random_divfree(grid, kmax, seed) * amp
    if kind == "snapshot":
        path = _get(cp, "initial", "path", str, required=True)
        if not os.path.exists(path):
            raise ConfigError(f"[initial] path: no such snapshot {path!r}")
        f, _ = read_snapshot(path, grid)
        return f
    raise ConfigError(f"[initial] kind: unknown value {kind!r}")


def _build_sim_config(cp, basis, member_seed: int) -> st.SimConfig:
    return st.SimConfig(
        dt=_get(cp, "sim", "dt", float, required=True),
        T=_get(cp, "sim", "T", float, required=True),
        R=_get(cp, "sim", "R", float, default=math.inf),
        nu=_get(cp, "sim", "nu", float, default=0.0),
        scheme=_get(cp, "sim", "scheme", str, default="strat_heun").strip(),
        basis=basis,
        seed=member_seed,
        transport=_get(cp, "sim", "transport", bool, default=True),
        snapshot_every=_get(cp, "sim", "snapshot_every", int, default=0),
        diag_every=_get(cp, "sim", "diag_every", int, default=1),
    )


def _member_seed(master: int, member: int) -> int:
    return int(np.random.SeedSequence((master, member)).generate_state(1)[0])


def _run_member(manifest_path: str, member: int, outdir: str) -> dict:
    cp = _load_manifest(manifest_path)
    grid = _build_grid(cp)
    basis = _build_basis(cp, grid)
    omega0 = _build_initial(cp, grid)
    master = _get(cp, "sim", "seed", int, default=0)
    config = _build_sim_config(cp, basis, _member_seed(master, member))
    traj = st.run(config, omega0)

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "diagnostics.csv"), "w") as fh:
        fh.write(",".join(st.DiagRecord.CSV_COLUMNS) + "\n")
        for rec in traj.diagnostics[1:]:
            fh.write(",".join(f"{v:.17g}" for v in rec.csv_row()) + "\n")
    for t, snap in traj.snapshots:
        write_snapshot(os.path.join(outdir, f"snapshot_t{t:011.6f}.f64"), snap, t)
    with open(os.path.join(outdir, "stop.txt"), "w") as fh:
        fh.write(f"flag = {traj.stop_flag}\n")
        fh.write(f"tau = {'' if traj.tau is None else repr(traj.tau)}\n")
        fh.write(f"step = {'' if traj.stop_step is None else traj.stop_step}\n")
        fh.write(f"c_bs = {'' if traj.c_bs is None else repr(traj.c_bs)}\n")
    return {"member": member, "stop_flag": traj.stop_flag, "tau": traj.tau}


def cmd_run(args) -> int:
    cp = _load_manifest(args.manifest)
    outdir = _get(cp, "output", "dir", str, required=True)
    # validate the full manifest before touching the filesystem
    grid = _build_grid(cp)
    _build_basis(cp, grid)
    _build_initial(cp, grid)
    _build_sim_config(cp, None, 0)
    try:
        os.makedirs(outdir, exist_ok=False)
    except FileExistsError:
        raise ConfigError(f"[output] dir: {outdir!r} already exists (refusing to overwrite)")
    # reproducibility record: exact manifest plus environment versions
    shutil.copyfile(args.manifest, os.path.join(outdir, "manifest.txt"))
    with open(os.path.join(outdir, "provenance.txt"), "w") as fh:
        fh.write(f"stochvort = {__version__}\n")
        fh.write(f"numpy = {np.__version__}\n")
        fh.write(f"python = {platform.python_version()}\n")
        fh.write(f"platform = {platform.platform()}\n")

    size = _get(cp, "ensemble", "size", int, default=1)
    if size < 1:
        raise ConfigError(f"[ensemble] size must be >= 1, got {size}")
    member_dirs = [os.path.join(outdir, f"member_{m:03d}") for m in range(size)]
    workers = int(os.environ.get(WORKERS_ENV, "0")) or min(size, os.cpu_count() or 1)
    results = []
    if size == 1 or workers == 1:
        for m in range(size):
            results.append(_run_member(args.manifest, m, member_dirs[m]))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(_run_member, args.manifest, m, member_dirs[m]) for m in range(size)
            ]
            results = [f.result() for f in futs]
    stopped = [r for r in results if r["stop_flag"] == "stopped_at_tau"]
    failed = [r for r in results if r["stop_flag"] == "nan"]
    for r in results:
        tau = "" if r["tau"] is None else f" tau={r['tau']:.6g}"
        print(f"member {r['member']:03d}: {r['stop_flag']}{tau}")
    if failed:
        print(f"{len(failed)} member(s) hit non-finite states", file=sys.stderr)
        return 1
    return 2 if stopped else 0


def cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    if any(s not in verify.SUITES for s in names):
        print(f"unknown suite {args.suite!r}; choose from {verify.SUITES} or 'all'", file=sys.stderr)
        return 1
    if args.corrupt_s4 != 1.0:
        op.set_s4_corruption(args.corrupt_s4)
    failed = 0
    try:
        for name in names:
            print(f"== suite {name} (n={args.n}, seed={args.seed})")
            for check in verify.run_suite(name, n=args.n, trials=args.trials, seed=args.seed):
                print(check.line())
                failed += 0 if check.passed else 1
    finally:
        op.set_s4_corruption(1.0)
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_calibrate(args) -> int:
    cp = _load_manifest(args.config)
    L = _get(cp, "calibration", "L", float, default=2.0 * math.pi)
    coarse_n = _get(cp, "calibration", "coarse_n", int, default=8)
    m_min = _get(cp, "calibration", "m_min", int, default=10)
    top_m = _get(cp, "calibration", "top_m", int, default=1)
    grid_n = _get(cp, "calibration", "grid_n", int, required=True)
    outdir = _get(cp, "calibration", "out", str, required=True)

    traj = cal.load_trajectories(args.csv, L)
    model = cal.build_correlation(traj, coarse_n=coarse_n, m_min=m_min)
    if model.partial:
        print(
            f"coverage failure: {len(model.undersampled)} cells below {m_min} samples:",
            file=sys.stderr,
        )
        print(" ".join(str(c) for c in model.undersampled[:64]), file=sys.stderr)
        return 1
    basis = cal.export_basis(model, top_m, Grid(grid_n, L))
    noise.export_basis(basis, outdir)
    consts, partial_sums = noise.ck0_constants(basis)
    rep = noise.summability_check(basis)
    print(f"modes exported: {len(basis.modes)} -> {outdir}")
    print(f"eigenvalues: {[f'{v:.4g}' for v in model.eigenvalues[:top_m]]}")
    print(f"C0 constants: {[f'{c:.4g}' for c in consts]}")
    print(f"sum C0 partial: {[f'{s:.4g}' for s in partial_sums]}")
    print(f"summability: sum lambda^2 |k|^2 = {rep.sum_lambda_k2_k2:.4g}, converged = {rep.converged}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochvort",
        description="Stochastic Euler vorticity dynamics on the periodic torus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an ensemble from a manifest")
    p_run.add_argument("manifest")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run a fixed-seed property suite")
    p_ver.add_argument("suite", choices=list(verify.SUITES) + ["all"])
    p_ver.add_argument("--n", type=int, default=32)
    p_ver.add_argument("--trials", type=int, default=4)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument(
        "--corrupt-s4",
        type=float,
        default=1.0,
        help="test hook: scale the S4 coefficients (negative control)",
    )
    p_ver.set_defaults(func=cmd_verify)

    p_cal = sub.add_parser("calibrate", help="build a noise basis from trajectory data")
    p_cal.add_argument("csv")
    p_cal.add_argument("config")
    p_cal.set_defaults(func=cmd_calibrate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
