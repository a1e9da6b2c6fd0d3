"""Periodic spectral vector fields on the torus [0, L]^3.

Fields are stored as three real scalar components on an n^3 grid together
with a lazily cached half-complex spectrum (numpy rfftn layout).  All
differential operators act by spectral multipliers; nonlinear work elsewhere
in the package happens on the physical representation followed by 2/3-rule
dealiasing.

Conventions
-----------
* Grid points x_i = i * L / n.  Integer wavenumbers are scaled by 2*pi/L.
* Spectral arrays hold the raw (unnormalized) rfftn output; the Fourier
  coefficient of exp(i k.x) is spec / n^3.
* Sobolev norms use the multiplier (1 + |k|^2)^(s/2).
* The zero mode of every evolved field is kept at zero; inv_laplacian and
  biot_savart project it out and record that in the field metadata.
"""

from __future__ import annotations

import struct
from functools import cached_property

import numpy as np

__all__ = [
    "ConfigError",
    "GridMismatchError",
    "Grid",
    "VectorField",
    "to_spectral",
    "to_physical",
    "dealias",
    "grad_tensor",
    "hessian_tensor",
    "curl",
    "div",
    "laplacian",
    "inv_laplacian",
    "leray_project",
    "l2_inner",
    "l2_norm",
    "sobolev_norm",
    "sup_norm",
    "divergence_free_error",
    "remove_mean",
    "translate",
    "random_divfree",
    "abc_field",
    "write_snapshot",
    "read_snapshot",
]


class ConfigError(ValueError):
    """Invalid grid or run configuration."""


class GridMismatchError(ValueError):
    """Operands live on different grids."""


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid is not g and (f.grid.n != g.n or f.grid.L != g.L):
            raise GridMismatchError(f"grids differ: {f.grid} vs {g}")


class Grid:
    """Uniform periodic grid with cached wavenumber arrays and dealias mask."""

    def __init__(self, n: int, L: float = 2.0 * np.pi):
        if n < 8 or n % 2:
            raise ConfigError(f"grid size must be even and >= 8, got {n}")
        self.n = int(n)
        self.L = float(L)
        self.dx = self.L / self.n
        self.dV = self.dx**3
        self.scale = 2.0 * np.pi / self.L

        ki = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        kzi = np.arange(n // 2 + 1, dtype=np.int64)
        self.kx_int = ki.reshape(n, 1, 1)
        self.ky_int = ki.reshape(1, n, 1)
        self.kz_int = kzi.reshape(1, 1, n // 2 + 1)
        self.kx = self.kx_int * self.scale
        self.ky = self.ky_int * self.scale
        self.kz = self.kz_int * self.scale
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2

        cut = n // 3
        self.dealias_cut = cut
        self.dealias_mask = (
            (np.abs(self.kx_int) <= cut)
            & (np.abs(self.ky_int) <= cut)
            & (np.abs(self.kz_int) <= cut)
        )

        # Parseval weight: interior rfft planes stand for a conjugate pair.
        w = np.full((n, n, n // 2 + 1), 2.0)
        w[:, :, 0] = 1.0
        w[:, :, -1] = 1.0
        self.parseval_weight = w

    @cached_property
    def mesh(self):
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")

    @cached_property
    def inv_k2(self):
        ik = np.zeros_like(self.k2)
        nz = self.k2 > 0
        ik[nz] = 1.0 / self.k2[nz]
        return ik

    def __repr__(self):
        return f"Grid(n={self.n}, L={self.L:g})"

    def __eq__(self, other):
        return isinstance(other, Grid) and other.n == self.n and other.L == self.L

    def __hash__(self):
        return hash((self.n, self.L))


class VectorField:
    """Three-component field caching physical and spectral representations.

    Treat instances as values: operators return new fields, and the lazy
    representation swap is the only interior mutation.
    """

    __slots__ = ("grid", "_phys", "_spec", "meta")

    def __init__(self, grid: Grid, phys=None, spec=None, meta=None):
        if phys is None and spec is None:
            raise ValueError("need at least one representation")
        self.grid = grid
        self._phys = phys
        self._spec = spec
        self.meta = dict(meta) if meta else {}

    @classmethod
    def from_phys(cls, grid, phys, meta=None):
        phys = np.asarray(phys, dtype=np.float64)
        if phys.shape != (3, grid.n, grid.n, grid.n):
            raise ValueError(f"bad physical shape {phys.shape}")
        return cls(grid, phys=phys, meta=meta)

    @classmethod
    def from_spec(cls, grid, spec, meta=None):
        spec = np.asarray(spec, dtype=np.complex128)
        if spec.shape != (3, grid.n, grid.n, grid.n // 2 + 1):
            raise ValueError(f"bad spectral shape {spec.shape}")
        return cls(grid, spec=spec, meta=meta)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, phys=np.zeros((3, grid.n, grid.n, grid.n)))

    @property
    def phys(self) -> np.ndarray:
        if self._phys is None:
            n = self.grid.n
            self._phys = np.fft.irfftn(self._spec, s=(n, n, n), axes=(-3, -2, -1))
        return self._phys

    @property
    def spec(self) -> np.ndarray:
        if self._spec is None:
            self._spec = np.fft.rfftn(self._phys, axes=(-3, -2, -1))
        return self._spec

    def copy(self):
        return VectorField(
            self.grid,
            phys=None if self._phys is None else self._phys.copy(),
            spec=None if self._spec is None else self._spec.copy(),
            meta=self.meta,
        )

    def mean(self):
        return self.phys.mean(axis=(1, 2, 3))

    def __add__(self, other):
        _check_same_grid(self, other)
        return VectorField(self.grid, phys=self.phys + other.phys)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return VectorField(self.grid, phys=self.phys - other.phys)

    def __mul__(self, a):
        return VectorField(self.grid, phys=self.phys * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        reps = [r for r, v in (("phys", self._phys), ("spec", self._spec)) if v is not None]
        return f"VectorField({self.grid}, cached={'+'.join(reps)})"


def to_spectral(f: VectorField) -> VectorField:
    """Return the field with its spectral representation materialized."""
    f.spec
    return f


def to_physical(f: VectorField) -> VectorField:
    f.phys
    return f


def dealias(f: VectorField) -> VectorField:
    """Apply the 2/3-rule mask (zero every mode with any |k_i| > n/3)."""
    return VectorField.from_spec(f.grid, f.spec * f.grid.dealias_mask, meta=f.meta)


def _dphys(spec, grid, axis_k):
    n = grid.n
    return np.fft.irfftn(1j * axis_k * spec, s=(n, n, n), axes=(-3, -2, -1))


def grad_tensor(f: VectorField) -> np.ndarray:
    """Physical gradient tensor G[a, c] = d f_c / d x_a, shape (3, 3, n, n, n)."""
    g = f.grid
    s = f.spec
    stacked = np.stack(
        [1j * g.kx * s, 1j * g.ky * s, 1j * g.kz * s]
    )  # (3 axes, 3 comps, ...)
    n = g.n
    return np.fft.irfftn(stacked, s=(n, n, n), axes=(-3, -2, -1))


def hessian_tensor(f: VectorField) -> np.ndarray:
    """Second derivatives H[a, b, c] = d^2 f_c / dx_a dx_b, shape (3, 3, 3, n^3...)."""
    g = f.grid
    s = f.spec
    iks = (1j * g.kx, 1j * g.ky, 1j * g.kz)
    rows = []
    for a in range(3):
        rows.append(np.stack([iks[a] * iks[b] * s for b in range(3)]))
    n = g.n
    return np.fft.irfftn(np.stack(rows), s=(n, n, n), axes=(-3, -2, -1))


def curl(f: VectorField) -> VectorField:
    g = f.grid
    s = f.spec
    ikx, iky, ikz = 1j * g.kx, 1j * g.ky, 1j * g.kz
    out = np.empty_like(s)
    out[0] = iky * s[2] - ikz * s[1]
    out[1] = ikz * s[0] - ikx * s[2]
    out[2] = ikx * s[1] - iky * s[0]
    return VectorField.from_spec(g, out)


def div(f: VectorField) -> np.ndarray:
    """Divergence as a physical scalar array."""
    g = f.grid
    s = f.spec
    d = 1j * (g.kx * s[0] + g.ky * s[1] + g.kz * s[2])
    n = g.n
    return np.fft.irfftn(d, s=(n, n, n), axes=(0, 1, 2))


def laplacian(f: VectorField) -> VectorField:
    return VectorField.from_spec(f.grid, -f.grid.k2 * f.spec)


def inv_laplacian(f: VectorField) -> VectorField:
    """Zero-mean inverse Laplacian: multiplier -1/|k|^2, zero at k = 0.

    A nonzero mean is silently projected out and flagged in the result
    metadata under ``"mean_projected"``.
    """
    g = f.grid
    s = f.spec
    out = -g.inv_k2 * s
    meta = {}
    mean_amp = np.max(np.abs(s[:, 0, 0, 0])) / g.n**3
    if mean_amp > 1e-13 * max(np.max(np.abs(s)) / g.n**3, 1e-300):
        meta["mean_projected"] = True
    return VectorField.from_spec(g, out, meta=meta)


def leray_project(f: VectorField) -> VectorField:
    """L2-orthogonal projection onto divergence-free fields (k = 0 untouched).

    Exactly orthogonal and idempotent for fields without Nyquist-plane
    energy; every dealiased field qualifies.
    """
    g = f.grid
    s = f.spec
    kdotf = g.kx * s[0] + g.ky * s[1] + g.kz * s[2]
    corr = kdotf * g.inv_k2
    out = np.empty_like(s)
    out[0] = s[0] - g.kx * corr
    out[1] = s[1] - g.ky * corr
    out[2] = s[2] - g.kz * corr
    return VectorField.from_spec(g, out, meta=f.meta)


def remove_mean(f: VectorField) -> VectorField:
    return VectorField.from_phys(f.grid, f.phys - f.mean()[:, None, None, None])


def l2_inner(f: VectorField, g: VectorField) -> float:
    """Integral of f.g over the torus (exact quadrature for band-limited fields)."""
    _check_same_grid(f, g)
    return float(np.vdot(f.phys, g.phys).real * f.grid.dV)


def l2_norm(f: VectorField) -> float:
    return float(np.sqrt(np.vdot(f.phys, f.phys).real * f.grid.dV))


def sobolev_norm(f: VectorField, s: float) -> float:
    """W^{s,2} norm via the multiplier (1 + |k|^2)^(s/2)."""
    if not -10.0 <= s <= 10.0:
        raise ValueError(f"order s must lie in [-10, 10], got {s}")
    g = f.grid
    c2 = (np.abs(f.spec) / g.n**3) ** 2
    mult = (1.0 + g.k2) ** s
    total = np.sum(g.parseval_weight * mult * c2)
    return float(np.sqrt(g.L**3 * total))


def _pad_spectrum(spec, grid: Grid, m: int) -> np.ndarray:
    """Zero-pad a half-complex spectrum from n^3 to m^3 (m > n, both even)."""
    n = grid.n
    lead = spec.shape[:-3]
    out = np.zeros(lead + (m, m, m // 2 + 1), dtype=np.complex128)
    h = n // 2
    # Nyquist rows/planes carry no energy for dealiased fields; split them
    # evenly so the padded field stays real for arbitrary input.
    pos = slice(0, h)
    neg_src = slice(h, n)
    neg_dst = slice(m - h, m)
    for src_x, dst_x in ((pos, pos), (neg_src, neg_dst)):
        for src_y, dst_y in ((pos, pos), (neg_src, neg_dst)):
            out[..., dst_x, dst_y, : h + 1] = spec[..., src_x, src_y, :]
    return out


def pad_spectrum_scaled(spec, grid: Grid, m: int) -> np.ndarray:
    """Zero-pad a spectrum to an m^3 grid with the irfftn scale folded in."""
    return _pad_spectrum(spec, grid, m) * (m / grid.n) ** 3


def sup_norm(f: VectorField, oversample: int = 2) -> float:
    """Sup of the pointwise Euclidean magnitude, on an oversampled grid.

    The plain grid maximum underestimates the continuous sup norm; the
    default evaluates on a 2x zero-padded grid.
    """
    if oversample <= 1:
        p = f.phys
    else:
        m = f.grid.n * oversample
        padded = _pad_spectrum(f.spec, f.grid, m)
        scale = (m / f.grid.n) ** 3
        p = np.fft.irfftn(padded * scale, s=(m, m, m), axes=(-3, -2, -1))
    return float(np.sqrt(np.max(np.sum(p * p, axis=0))))


def sup_norm_tensor(t: np.ndarray, grid: Grid, oversample: int = 2) -> float:
    """Sup of the pointwise Frobenius norm of a stacked tensor field.

    ``t`` has shape (..., n, n, n); leading axes are tensor slots.
    """
    flat = t.reshape((-1,) + t.shape[-3:])
    if oversample <= 1:
        p = flat
    else:
        m = grid.n * oversample
        spec = np.fft.rfftn(flat, axes=(-3, -2, -1))
        padded = _pad_spectrum(spec, grid, m)
        scale = (m / grid.n) ** 3
        p = np.fft.irfftn(padded * scale, s=(m, m, m), axes=(-3, -2, -1))
    return float(np.sqrt(np.max(np.sum(p * p, axis=0))))


def divergence_free_error(f: VectorField) -> float:
    """max_k |k.u(k)| / max_k |k||u(k)|, zero for divergence-free fields."""
    g = f.grid
    s = f.spec
    kdot = np.abs(g.kx * s[0] + g.ky * s[1] + g.kz * s[2])
    ref = np.max(np.sqrt(g.k2) * np.max(np.abs(s), axis=0))
    if ref == 0.0:
        return 0.0
    return float(np.max(kdot) / ref)


def translate(f: VectorField, shift) -> VectorField:
    """Exact spectral translation: g(x) = f(x - shift)."""
    g = f.grid
    sx, sy, sz = (float(v) for v in shift)
    phase = np.exp(-1j * (g.kx * sx + g.ky * sy + g.kz * sz))
    return VectorField.from_spec(g, f.spec * phase)


def random_divfree(grid: Grid, kcap: int, seed, unit_norm: bool = True) -> VectorField:
    """Random real divergence-free mean-zero field, band-limited to |k_i| <= kcap."""
    rng = np.random.default_rng(seed)
    n = grid.n
    raw = rng.standard_normal((3, n, n, n))
    spec = np.fft.rfftn(raw, axes=(-3, -2, -1))
    band = (
        (np.abs(grid.kx_int) <= kcap)
        & (np.abs(grid.ky_int) <= kcap)
        & (np.abs(grid.kz_int) <= kcap)
    )
    spec *= band
    spec[:, 0, 0, 0] = 0.0
    f = leray_project(VectorField.from_spec(grid, spec))
    if unit_norm:
        nrm = l2_norm(f)
        if nrm > 0:
            f = f * (1.0 / nrm)
    return to_physical(f)


def abc_field(grid: Grid, A: float = 1.0, B: float = 1.0, C: float = 1.0) -> VectorField:
    """Arnold-Beltrami-Childress field; for A=B=C it satisfies curl(u) = u."""
    X, Y, Z = grid.mesh
    phys = np.stack(
        [
            A * np.sin(Z) + C * np.cos(Y),
            B * np.sin(X) + A * np.cos(Z),
            C * np.sin(Y) + B * np.cos(X),
        ]
    )
    return VectorField.from_phys(grid, phys)


# -- binary snapshot format ("SEU1") -----------------------------------------
#
# Little-endian header:  magic "SEU1" | uint32 n | float64 L | uint32 ncomp |
# float64 time, followed by ncomp row-major float64 arrays of shape (n, n, n).

_MAGIC = b"SEU1"
_HEADER = struct.Struct("<4sIdId")


def write_snapshot(path, f: VectorField, time: float = 0.0):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, f.grid.n, f.grid.L, 3, float(time)))
        fh.write(np.ascontiguousarray(f.phys, dtype="<f8").tobytes())


def read_snapshot(path, grid: Grid | None = None):
    """Read a snapshot file; returns (field, time)."""
    with open(path, "rb") as fh:
        magic, n, L, ncomp, time = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ConfigError(f"{path}: not a field snapshot (magic {magic!r})")
        if ncomp != 3:
            raise ConfigError(f"{path}: expected 3 components, got {ncomp}")
        data = np.frombuffer(fh.read(ncomp * n**3 * 8), dtype="<f8")
    if grid is None:
        grid = Grid(n, L)
    elif grid.n != n or abs(grid.L - L) > 1e-12:
        raise GridMismatchError(f"{path}: snapshot grid ({n}, {L}) != {grid}")
    phys = data.reshape(3, n, n, n).astype(np.float64)
    return VectorField.from_phys(grid, phys), time
