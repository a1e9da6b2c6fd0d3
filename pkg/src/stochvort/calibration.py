"""Data-driven noise fields from drifter-style trajectories.

Pipeline: finite-difference velocities along each trajectory, bin them on a
coarse grid, remove the per-cell mean flow, form the cell velocity-velocity
covariance, and take its eigenfields as correlated noise modes.  Missing
cells at a snapshot contribute zero fluctuation (mean imputation), which
makes the covariance a Gram matrix and therefore positive semi-definite by
construction.  Exported fields are spectrally upsampled to the simulation
grid, Leray-projected and scaled by the square root of their eigenvalue.

The whole estimation procedure is a construction of this package, validated
against synthetic truth; only the covariance-eigenfield principle comes from
the source model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .field import ConfigError, Grid, VectorField, l2_norm, leray_project
from .noise import NoiseBasis, NoiseMode
from .operators import LieOperand

__all__ = [
    "TrajectorySet",
    "CorrelationModel",
    "load_trajectories",
    "estimate_velocities",
    "build_correlation",
    "export_basis",
]

log = logging.getLogger(__name__)


@dataclass
class TrajectorySet:
    """Per-drifter sorted position series on the torus [0, L]^3."""

    L: float
    ids: list
    times: dict  # id -> (nt,) strictly increasing
    positions: dict  # id -> (nt, 3) wrapped

    @property
    def sample_interval(self) -> float:
        dts = [np.diff(t) for t in self.times.values() if len(t) > 1]
        if not dts:
            return 0.0
        return float(np.median(np.concatenate(dts)))


def load_trajectories(path, L: float) -> TrajectorySet:
    """Read `id,t,x,y,z` CSV (header required); duplicate timestamps per
    drifter are rejected records (skipped with a warning)."""
    ids, times, positions = [], {}, {}
    with open(path) as fh:
        header = fh.readline().strip().lower().replace(" ", "")
        if header != "id,t,x,y,z":
            raise ConfigError(f"{path}: expected header 'id,t,x,y,z', got {header!r}")
        rows = {}
        dupes = 0
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ConfigError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            did = parts[0]
            t = float(parts[1])
            xyz = [float(v) for v in parts[2:]]
            bucket = rows.setdefault(did, {})
            if t in bucket:
                dupes += 1
                continue
            bucket[t] = xyz
        if dupes:
            log.warning("%s: skipped %d duplicate-timestamp records", path, dupes)
    if not rows:
        raise ConfigError(f"{path}: no trajectory records")
    for did in sorted(rows):
        ts = np.array(sorted(rows[did]))
        pos = np.array([rows[did][t] for t in ts])
        ids.append(did)
        times[did] = ts
        positions[did] = np.mod(pos, L)
    return TrajectorySet(L=L, ids=ids, times=times, positions=positions)


def _min_image(d, L):
    return d - L * np.round(d / L)


def estimate_velocities(traj: TrajectorySet):
    """Finite-difference velocities: central in the interior, one-sided at the
    ends, with minimum-image displacements.  Single-sample drifters are
    dropped with a warning.

    Returns (times, points, velocities) arrays over all retained samples.
    """
    all_t, all_x, all_v = [], [], []
    dropped = 0
    for did in traj.ids:
        ts = traj.times[did]
        xs = traj.positions[did]
        if len(ts) < 2:
            dropped += 1
            continue
        v = np.empty_like(xs)
        dx = _min_image(np.diff(xs, axis=0), traj.L)
        dt = np.diff(ts)[:, None]
        v[0] = dx[0] / dt[0]
        v[-1] = dx[-1] / dt[-1]
        if len(ts) > 2:
            span = (ts[2:] - ts[:-2])[:, None]
            v[1:-1] = _min_image(xs[2:] - xs[:-2], traj.L) / span
        all_t.append(ts)
        all_x.append(xs)
        all_v.append(v)
    if dropped:
        log.warning("dropped %d single-sample drifters", dropped)
    if not all_t:
        raise ConfigError("no drifter has two or more samples")
    return np.concatenate(all_t), np.concatenate(all_x), np.concatenate(all_v)


@dataclass
class CorrelationModel:
    coarse_n: int
    L: float
    mean_velocity: np.ndarray  # (M, 3)
    covariance: np.ndarray  # (3M, 3M), symmetric PSD
    eigenvalues: np.ndarray  # descending
    eigenfields: np.ndarray  # (k, M, 3)
    cell_counts: np.ndarray  # (M,)
    undersampled: list
    partial: bool


def build_correlation(traj: TrajectorySet, coarse_n: int = 8, m_min: int = 10) -> CorrelationModel:
    """Bin velocity samples per coarse cell and per snapshot time, remove the
    per-cell mean, and eigendecompose the snapshot covariance."""
    ts, xs, vs = estimate_velocities(traj)
    nc = coarse_n
    M = nc**3
    cell = (
        (np.floor(xs[:, 0] / traj.L * nc).astype(int) % nc) * nc * nc
        + (np.floor(xs[:, 1] / traj.L * nc).astype(int) % nc) * nc
        + (np.floor(xs[:, 2] / traj.L * nc).astype(int) % nc)
    )
    counts = np.bincount(cell, minlength=M)
    undersampled = [int(c) for c in np.flatnonzero(counts < m_min)]
    partial = bool(undersampled)
    if partial:
        log.warning("%d of %d coarse cells have fewer than %d samples", len(undersampled), M, m_min)

    mean = np.zeros((M, 3))
    for c in range(3):
        sums = np.bincount(cell, weights=vs[:, c], minlength=M)
        mean[:, c] = np.divide(sums, counts, out=np.zeros(M), where=counts > 0)

    # snapshot matrix: per unique time, per cell, mean fluctuation (0 if absent)
    t_round = np.round(ts, 9)
    t_vals, t_idx = np.unique(t_round, return_inverse=True)
    T = len(t_vals)
    X = np.zeros((T, 3 * M))
    flat = t_idx * M + cell
    n_tm = np.bincount(flat, minlength=T * M).reshape(T, M)
    for c in range(3):
        fluct = vs[:, c] - mean[cell, c]
        s = np.bincount(flat, weights=fluct, minlength=T * M).reshape(T, M)
        X[:, c::3] = np.where(n_tm > 0, s / np.maximum(n_tm, 1), 0.0)
    cov = X.T @ X / max(T, 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    fields = evecs.T.reshape(-1, M, 3)
    return CorrelationModel(
        coarse_n=nc,
        L=traj.L,
        mean_velocity=mean,
        covariance=cov,
        eigenvalues=evals,
        eigenfields=fields,
        cell_counts=counts,
        undersampled=undersampled,
        partial=partial,
    )


def _upsample_to_grid(coarse: np.ndarray, nc: int, grid: Grid) -> np.ndarray:
    """Spectral (zero-pad) interpolation of a (M, 3) coarse field to the grid.

    Cell values are statistics over the cell, i.e. samples at cell centers;
    a half-cell phase shift realigns them with the grid convention (samples
    at cell corners).
    """
    n = grid.n
    arr = coarse.reshape(nc, nc, nc, 3).transpose(3, 0, 1, 2)
    spec_c = np.fft.rfftn(arr, axes=(-3, -2, -1))
    spec_f = np.zeros((3, n, n, n // 2 + 1), dtype=np.complex128)
    h = nc // 2
    pos = slice(0, h)
    neg_src = slice(h, nc)
    neg_dst = slice(n - h, n)
    for sx, dx in ((pos, pos), (neg_src, neg_dst)):
        for sy, dy in ((pos, pos), (neg_src, neg_dst)):
            spec_f[:, dx, dy, : h + 1] = spec_c[:, sx, sy, :]
    off = 0.5 * grid.L / nc
    spec_f *= (n / nc) ** 3 * np.exp(-1j * off * (grid.kx + grid.ky + grid.kz))
    return np.fft.irfftn(spec_f, s=(n, n, n), axes=(-3, -2, -1))


def export_basis(
    model: CorrelationModel, top_m: int, grid: Grid, min_rel_norm: float = 1e-8
) -> NoiseBasis:
    """Turn the leading eigenfields into simulation-grid noise modes.

    Each field is upsampled, mean-removed, Leray-projected, normalized to a
    unit-L2 shape and scaled by sqrt(eigenvalue).  Fields that lose nearly
    all their norm to the projection are skipped with a warning.  Signs are
    fixed deterministically (largest-magnitude sample positive).
    """
    if top_m > len(model.eigenvalues):
        raise ConfigError(f"top_m={top_m} exceeds available eigenpairs ({len(model.eigenvalues)})")
    modes = []
    for i in range(top_m):
        lam = float(model.eigenvalues[i])
        if lam <= 0:
            log.warning("eigenfield %d has nonpositive eigenvalue %.3e; skipped", i, lam)
            continue
        raw = _upsample_to_grid(model.eigenfields[i], model.coarse_n, grid)
        f = VectorField.from_phys(grid, raw)
        pre = l2_norm(f)
        f = VectorField.from_phys(grid, f.phys - f.mean()[:, None, None, None])
        f = leray_project(f)
        post = l2_norm(f)
        if pre == 0.0 or post < min_rel_norm * pre:
            log.warning("eigenfield %d lost its norm under projection; skipped", i)
            continue
        shape = f * (1.0 / post)
        flat = shape.phys.reshape(3, -1)
        j = np.unravel_index(np.argmax(np.abs(flat)), flat.shape)
        if flat[j] < 0:
            shape = shape * -1.0
        xi = LieOperand(shape * np.sqrt(lam), name=f"eof{i}")
        modes.append(
            NoiseMode(xi=xi, amplitude=float(np.sqrt(lam)), k_index=None, stream_key=(9_000 + i,))
        )
    return NoiseBasis(grid=grid, modes=modes, alpha=None, kmax=None)
