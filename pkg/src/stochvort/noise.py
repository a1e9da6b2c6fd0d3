"""Cylindrical-noise machinery: divergence-free Fourier mode families
{xi_k, lambda_k}, summability checks for the noise assumptions, and
reproducible counter-based Brownian increments.

Mode streams are keyed by the mode identity (not its position in the list),
so Brownian paths do not depend on iteration order or thread schedule, and
halving the step refines a path without changing its coarse increments.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .field import ConfigError, Grid, VectorField, read_snapshot, write_snapshot
from .operators import LieOperand

__all__ = [
    "NoiseMode",
    "NoiseBasis",
    "BrownianPath",
    "build_fourier_basis",
    "constant_basis",
    "summability_check",
    "ck0_constants",
    "sample_path",
    "export_basis",
    "load_basis",
]

_KEY_OFFSET = 512  # shifts signed wavenumber components into SeedSequence range


@dataclass(frozen=True)
class NoiseMode:
    xi: LieOperand
    amplitude: float
    k_index: tuple[int, int, int] | None
    stream_key: tuple[int, ...]


@dataclass
class NoiseBasis:
    grid: Grid
    modes: list[NoiseMode]
    alpha: float | None = None
    kmax: int | None = None
    seed: int = 0

    def __len__(self):
        return len(self.modes)

    def aggregate(self, coeffs) -> VectorField:
        """Linear combination sum_k coeffs[k] * xi_k as a single field."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (len(self.modes),):
            raise ValueError(f"need {len(self.modes)} coefficients, got {coeffs.shape}")
        n = self.grid.n
        acc = np.zeros((3, n, n, n))
        for c, mode in zip(coeffs, self.modes):
            if c != 0.0:
                acc += c * mode.xi.phys
        return VectorField.from_phys(self.grid, acc)

    def release(self):
        for mode in self.modes:
            mode.xi.release()


def _polarization(k: np.ndarray):
    """Two orthonormal vectors perpendicular to k; smallest-index axis first."""
    khat = k / np.linalg.norm(k)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        w = e - np.dot(e, khat) * khat
        norm = np.linalg.norm(w)
        if norm > 1e-12:
            p1 = w / norm
            break
    p2 = np.cross(khat, p1)
    return p1, p2


def _half_space_triples(kmax: int):
    """Integer triples with 0 < |k| <= kmax, one per {k, -k} pair."""
    out = []
    for kx in range(-kmax, kmax + 1):
        for ky in range(-kmax, kmax + 1):
            for kz in range(-kmax, kmax + 1):
                if kx == 0 and ky == 0 and kz == 0:
                    continue
                if kx * kx + ky * ky + kz * kz > kmax * kmax:
                    continue
                lead = kx if kx != 0 else (ky if ky != 0 else kz)
                if lead < 0:
                    continue
                out.append((kx, ky, kz))
    out.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2 + k[2] ** 2, k))
    return out


def build_fourier_basis(grid: Grid, kmax: int, alpha: float, seed: int = 0) -> NoiseBasis:
    """Sine/cosine mode family: for each half-space triple 0 < |k| <= kmax,
    both trigonometric parities in both polarizations, amplitude |k|^-alpha.

    The underlying waves are L2-orthonormal (the amplitudes multiply a
    complete orthonormal system), so each mode field is
    lambda_k * sqrt(2/L^3) * p_hat * trig(k.x).  All modes are
    divergence-free (polarization is perpendicular to k) and mean-zero.
    ``kmax`` is capped at n/6 so the operator-identity algebra in the test
    suites stays below the dealiasing cutoff.
    """
    if alpha <= 0:
        raise ConfigError(f"spectrum exponent must be positive, got {alpha}")
    if kmax > grid.n // 6:
        raise ConfigError(f"kmax={kmax} too large for n={grid.n} (limit n/6 = {grid.n // 6})")
    X, Y, Z = grid.mesh
    unit = math.sqrt(2.0 / grid.L**3)
    modes = []
    for k in _half_space_triples(kmax):
        kk = np.array(k, dtype=np.float64)
        lam = float(np.linalg.norm(kk) ** (-alpha))
        phase = grid.scale * (k[0] * X + k[1] * Y + k[2] * Z)
        for trig_idx, tr in enumerate((np.sin, np.cos)):
            wave = tr(phase)
            for pol_idx, p in enumerate(_polarization(kk)):
                phys = lam * unit * p[:, None, None, None] * wave[None]
                xi = LieOperand(VectorField.from_phys(grid, phys), name=f"xi{k}")
                key = (
                    k[0] + _KEY_OFFSET,
                    k[1] + _KEY_OFFSET,
                    k[2] + _KEY_OFFSET,
                    trig_idx,
                    pol_idx,
                )
                modes.append(NoiseMode(xi=xi, amplitude=lam, k_index=k, stream_key=key))
    return NoiseBasis(grid=grid, modes=modes, alpha=alpha, kmax=kmax, seed=seed)


def constant_basis(grid: Grid, direction, amplitude: float = 1.0) -> NoiseBasis:
    """Single spatially constant mode (exact-transport test case)."""
    d = np.asarray(direction, dtype=np.float64)
    phys = amplitude * np.broadcast_to(d[:, None, None, None], (3, grid.n, grid.n, grid.n)).copy()
    xi = LieOperand(VectorField.from_phys(grid, phys), name="const")
    mode = NoiseMode(xi=xi, amplitude=amplitude, k_index=(0, 0, 0), stream_key=(0, 0, 0, 0, 0))
    return NoiseBasis(grid=grid, modes=[mode], alpha=None, kmax=0)


@dataclass
class SummabilityReport:
    sum_lambda_k2_k2: float
    tail_estimate: float
    converged: bool


def summability_check(basis: NoiseBasis) -> SummabilityReport:
    """Evaluate sum lambda_k^2 |k|^2 over the basis plus an integral-test tail.

    For the |k|^-alpha family the full lattice sum converges iff alpha > 5/2;
    a basis without a spectrum exponent (data-driven, finite) counts as
    convergent.
    """
    total = 0.0
    for m in basis.modes:
        if m.k_index is None:
            continue
        total += m.amplitude**2 * float(np.dot(m.k_index, m.k_index))
    if basis.alpha is None or basis.kmax is None or not basis.modes:
        return SummabilityReport(total, 0.0, True)
    a = basis.alpha
    r = max(basis.kmax, 1)
    if 2 * a - 4 > 1:  # integral of 4 pi r^(4 - 2a) from kmax to infinity
        tail = 4.0 * np.pi * r ** (5 - 2 * a) / (2 * a - 5)
        return SummabilityReport(total, float(tail), True)
    return SummabilityReport(total, float("inf"), False)


def ck0_constants(basis: NoiseBasis, c: float = 48.0):
    """Per-mode constants c (||xi|| ||lap xi|| + ||grad xi||^2) and partial sums."""
    consts = [m.xi.c0_constant(c) for m in basis.modes]
    return consts, list(np.cumsum(consts))


# -- Brownian driving ---------------------------------------------------------


def _mode_rng(seed: int, stream_key: tuple[int, ...], level: int) -> Generator:
    return Generator(Philox(SeedSequence((int(seed), level, *stream_key))))


@dataclass
class BrownianPath:
    """Per-mode Wiener increments on a uniform step grid, refinable in place.

    Increments live on a power-of-two lattice ~2^-40 relative to the step
    scale (a statistically invisible quantization), so every pairwise sum is
    exact float arithmetic: summing the two children produced by
    :meth:`refine` reproduces the parent increment bit-exactly, at any depth.
    ``increments[j, m]`` is the mode-m increment over step j.
    """

    dt: float
    increments: np.ndarray  # (nsteps, nmodes)
    seed: int
    stream_keys: list[tuple[int, ...]]
    quantum: float
    level: int = 0

    @property
    def nsteps(self):
        return self.increments.shape[0]

    @property
    def nmodes(self):
        return self.increments.shape[1]

    def cumulative(self) -> np.ndarray:
        """B at the step endpoints, shape (nsteps + 1, nmodes); B_0 = 0."""
        out = np.zeros((self.nsteps + 1, self.nmodes))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def refine(self) -> "BrownianPath":
        """Halve dt via the Brownian bridge, staying on the lattice."""
        coarse = self.increments
        nsteps, nm = coarse.shape
        fine = np.empty((2 * nsteps, nm))
        q = self.quantum
        half_sd = np.sqrt(0.25 * self.dt)
        for m in range(nm):
            rng = _mode_rng(self.seed, self.stream_keys[m], self.level + 1)
            z = rng.normal(0.0, half_sd, nsteps)
            u = np.round((0.5 * coarse[:, m] + z) / q) * q
            fine[0::2, m] = u
            fine[1::2, m] = coarse[:, m] - u  # exact: both lattice multiples
        return BrownianPath(
            dt=0.5 * self.dt,
            increments=fine,
            seed=self.seed,
            stream_keys=self.stream_keys,
            quantum=q,
            level=self.level + 1,
        )

    def coarsen_sums(self) -> np.ndarray:
        """Pairwise sums (the parent increments, bit-exact after refine)."""
        if self.nsteps % 2:
            raise ValueError("odd step count cannot be coarsened")
        return self.increments[0::2] + self.increments[1::2]


def _lattice_quantum(dt: float) -> float:
    return 2.0 ** (math.floor(math.log2(math.sqrt(dt))) - 40)


def sample_path(basis: NoiseBasis, nsteps: int, dt: float, seed: int) -> BrownianPath:
    """Draw level-0 increments; each mode uses a stream keyed by its identity."""
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    keys = [m.stream_key for m in basis.modes]
    inc = np.empty((nsteps, len(keys)))
    sd = np.sqrt(dt)
    q = _lattice_quantum(dt)
    for m, key in enumerate(keys):
        inc[:, m] = np.round(_mode_rng(seed, key, 0).normal(0.0, sd, nsteps) / q) * q
    return BrownianPath(dt=dt, increments=inc, seed=seed, stream_keys=keys, quantum=q)


# -- basis export / import ----------------------------------------------------


def export_basis(basis: NoiseBasis, outdir: str):
    """Write one snapshot file per mode plus a plain-text key-value manifest."""
    os.makedirs(outdir, exist_ok=True)
    lines = [
        "format = stochvort-basis-1",
        f"n = {basis.grid.n}",
        f"L = {basis.grid.L!r}",
        f"alpha = {'none' if basis.alpha is None else repr(basis.alpha)}",
        f"kmax = {'none' if basis.kmax is None else basis.kmax}",
        f"seed = {basis.seed}",
        f"nmodes = {len(basis.modes)}",
    ]
    for i, mode in enumerate(basis.modes):
        fname = f"mode_{i:04d}.f64"
        write_snapshot(os.path.join(outdir, fname), mode.xi.field)
        kidx = "none" if mode.k_index is None else " ".join(str(v) for v in mode.k_index)
        lines.append(f"mode_{i:04d}.file = {fname}")
        lines.append(f"mode_{i:04d}.k = {kidx}")
        lines.append(f"mode_{i:04d}.amplitude = {mode.amplitude!r}")
        lines.append(f"mode_{i:04d}.stream_key = {' '.join(str(v) for v in mode.stream_key)}")
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_manifest(path):
    kv = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: malformed manifest line {line!r}")
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
    return kv


def load_basis(indir: str, grid: Grid | None = None) -> NoiseBasis:
    manifest = os.path.join(indir, "manifest.txt")
    kv = _parse_manifest(manifest)
    if kv.get("format") != "stochvort-basis-1":
        raise ConfigError(f"{manifest}: unknown format {kv.get('format')!r}")
    n = int(kv["n"])
    L = float(kv["L"])
    if grid is None:
        grid = Grid(n, L)
    nmodes = int(kv["nmodes"])
    alpha = None if kv["alpha"] == "none" else float(kv["alpha"])
    kmax = None if kv["kmax"] == "none" else int(kv["kmax"])
    modes = []
    for i in range(nmodes):
        pref = f"mode_{i:04d}"
        f, _ = read_snapshot(os.path.join(indir, kv[f"{pref}.file"]), grid)
        kidx = kv[f"{pref}.k"]
        k_index = None if kidx == "none" else tuple(int(v) for v in kidx.split())
        key = tuple(int(v) for v in kv[f"{pref}.stream_key"].split())
        modes.append(
            NoiseMode(
                xi=LieOperand(f, name=f"{pref}"),
                amplitude=float(kv[f"{pref}.amplitude"]),
                k_index=k_index,
                stream_key=key,
            )
        )
    return NoiseBasis(grid=grid, modes=modes, alpha=alpha, kmax=kmax, seed=int(kv["seed"]))
