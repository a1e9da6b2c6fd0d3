"""Lie-derivative algebra on vector fields: transport operator, its dual,
the double bracket, Biot-Savart reconstruction, and the zero/second-order
commutator remainders S1..S4.

All nonlinear products are formed in physical space from spectrally computed
derivative factors and dealiased with the 2/3 rule.  S1 and S3 are evaluated
as the literal operator differences that define them; the expanded coefficient
tables (a, b, c) back S2/S4 and the identity test suites.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from . import kernels
from .field import (
    VectorField,
    _check_same_grid,
    curl,
    dealias,
    divergence_free_error,
    grad_tensor,
    hessian_tensor,
    inv_laplacian,
    laplacian,
    pad_spectrum_scaled,
)

if TYPE_CHECKING:
    from .noise import NoiseBasis

__all__ = [
    "LieOperand",
    "lie_derivative",
    "lie_adjoint",
    "double_lie",
    "biot_savart",
    "s1_apply",
    "s2_apply",
    "s3_apply",
    "s4_apply",
    "ito_correction",
]

DIV_FREE_TOL = 1e-10

# Test hook: scales the S4 coefficient table so negative-control checks can
# verify that the identity suites actually detect a corrupted operator.
_s4_scale = 1.0


def set_s4_corruption(scale: float):
    global _s4_scale
    _s4_scale = float(scale)


class LieOperand:
    """A divergence-free vector field with cached derivative/coefficient tables.

    Immutable after construction; the caches are filled lazily and can be
    dropped with :meth:`release` when iterating over many operands.
    """

    def __init__(self, field: VectorField, check_div: bool = True, name: str = ""):
        err = divergence_free_error(field)
        if check_div and err > DIV_FREE_TOL:
            raise ValueError(f"operand {name or 'xi'} is not divergence-free (rel err {err:.2e})")
        self.field = field
        self.grid = field.grid
        self.name = name
        self._cache: dict[str, np.ndarray] = {}
        self._sups: tuple | None = None

    @property
    def phys(self):
        return self.field.phys

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def grad(self):
        """G[a, c] = d xi_c / d x_a."""
        return self._get("grad", lambda: grad_tensor(self.field))

    @property
    def hess(self):
        return self._get("hess", lambda: hessian_tensor(self.field))

    @property
    def lap(self):
        return self._get("lap", lambda: laplacian(self.field).phys)

    @property
    def a_table(self):
        """a_ij = -(d_i xi^j + d_j xi^i); symmetric zero-order S2 coefficients."""

        def build():
            G = self.grad
            return -(G + G.transpose(1, 0, 2, 3, 4))

        return self._get("a", build)

    @property
    def grad_a(self):
        """Ga[m, i, j] = d_m a_ij, from the cached Hessian."""

        def build():
            H = self.hess
            # d_m a_ij = -(H[m,i,j-comp] + H[m,j,i-comp]) with H[a,b,c] = d_a d_b xi_c
            return -(H + H.transpose(0, 2, 1, 3, 4, 5))

        return self._get("grad_a", build)

    @property
    def b_table(self):
        """b_il = sum_j (xi^j d_j a_il - a_jl d_j xi^i)."""

        def build():
            xi = self.phys
            G = self.grad
            a = self.a_table
            Ga = self.grad_a
            b = np.einsum("jxyz,jilxyz->ilxyz", xi, Ga)
            b -= np.einsum("jlxyz,jixyz->ilxyz", a, G)
            return b

        return self._get("b", build)

    @property
    def c_table(self):
        """c_ij = sum_l a_il d_j xi^l."""

        def build():
            return np.einsum("ilxyz,jlxyz->ijxyz", self.a_table, self.grad)

        return self._get("c", build)

    @property
    def s4_table(self):
        """S4 coefficients: (S4 f)_i = sum_l m_il f_l with m = -(b + c)."""

        def build():
            return -(self.b_table + self.c_table) * _s4_scale

        return self._get("s4", build)

    def c0_constant(self, c: float = 48.0) -> float:
        """Per-mode constant c (||xi||_inf ||lap xi||_inf + ||grad xi||_inf^2).

        Sup norms are evaluated on the oversampled grid in one batched
        transform; the three values persist across :meth:`release`.
        """
        if self._sups is None:
            g = self.grid
            s = self.field.spec
            iks = (1j * g.kx, 1j * g.ky, 1j * g.kz)
            stack = np.concatenate(
                [s, np.concatenate([ik * s for ik in iks]), -g.k2 * s]
            )  # xi (3) | grad xi (9) | lap xi (3)
            m = 2 * g.n
            padded = pad_spectrum_scaled(stack, g, m)
            p = np.fft.irfftn(padded, s=(m, m, m), axes=(-3, -2, -1))
            mag = lambda block: float(np.sqrt(np.max(np.sum(block**2, axis=0))))
            self._sups = (mag(p[0:3]), mag(p[3:12]), mag(p[12:15]))
        xi_sup, grad_sup, lap_sup = self._sups
        return float(c * (xi_sup * lap_sup + grad_sup**2))

    def release(self):
        """Drop cached derivative tables (the field and sup norms are kept)."""
        self._cache.clear()


def _as_operand(xi) -> LieOperand:
    return xi if isinstance(xi, LieOperand) else LieOperand(xi)


def lie_derivative(xi, w: VectorField, gw: np.ndarray | None = None) -> VectorField:
    """Transport operator (xi . grad) w - (w . grad) xi, dealiased.

    ``gw`` may pass a precomputed gradient tensor of ``w`` to share across
    several operands.
    """
    xi = _as_operand(xi)
    _check_same_grid(xi.field, w)
    if gw is None:
        gw = grad_tensor(w)
    out = kernels.lie_product(xi.phys, xi.grad, w.phys, gw)
    return dealias(VectorField.from_phys(w.grid, out))


def lie_adjoint(xi, g: VectorField, gg: np.ndarray | None = None) -> VectorField:
    """Dual of the Lie derivative: (L*_xi g)_i = -sum_j (xi^j d_j g_i + g_j d_i xi^j).

    Valid only for divergence-free xi (enforced by LieOperand).
    """
    xi = _as_operand(xi)
    _check_same_grid(xi.field, g)
    if gg is None:
        gg = grad_tensor(g)
    out = kernels.adjoint_product(xi.phys, xi.grad, g.phys, gg)
    return dealias(VectorField.from_phys(g.grid, out))


def double_lie(xi, w: VectorField) -> VectorField:
    """Double bracket [xi, [xi, w]]: literal composition of lie_derivative."""
    xi = _as_operand(xi)
    return lie_derivative(xi, lie_derivative(xi, w))


def s2_apply(xi, f: VectorField) -> VectorField:
    xi = _as_operand(xi)
    out = kernels.mat_apply(xi.a_table, f.phys)
    return dealias(VectorField.from_phys(f.grid, out))


def s4_apply(xi, f: VectorField) -> VectorField:
    xi = _as_operand(xi)
    out = kernels.mat_apply(xi.s4_table, f.phys)
    return dealias(VectorField.from_phys(f.grid, out))


def s1_apply(xi, f: VectorField) -> VectorField:
    """S1 f = lap(L_xi f) - L_xi(lap f), evaluated as the literal difference."""
    xi = _as_operand(xi)
    return laplacian(lie_derivative(xi, f)) - lie_derivative(xi, laplacian(f))


def s3_apply(xi, f: VectorField) -> VectorField:
    """S3 f = S1(L_xi f) - L_xi(S1 f)."""
    xi = _as_operand(xi)
    return s1_apply(xi, lie_derivative(xi, f)) - lie_derivative(xi, s1_apply(xi, f))


def biot_savart(w: VectorField) -> VectorField:
    """Velocity reconstruction v = -curl(inv_laplacian(w)).

    Requires w mean-zero and divergence-free; a nonzero mean is projected out
    and flagged in the result metadata.
    """
    minus_psi = inv_laplacian(w)  # spectral multiplier -1/|k|^2
    v = curl(minus_psi)
    v = VectorField.from_spec(w.grid, -v.spec, meta=minus_psi.meta)
    return v


def _mode_chunks(modes, size):
    for i in range(0, len(modes), size):
        yield modes[i : i + size]


def ito_correction(basis: "NoiseBasis", w: VectorField, chunk: int = 8) -> VectorField:
    """Stratonovich-to-Ito drift: (1/2) sum_k double_lie(xi_k, w).

    Evaluated mode by mode as the literal composition; the only batching is
    of the intermediate transforms, which leaves the result identical to
    summing double_lie calls.
    """
    g = w.grid
    if basis is None or len(basis.modes) == 0:
        return VectorField.zeros(g)
    gw = grad_tensor(w)
    n = g.n
    acc = np.zeros((3, n, n, n))
    for group in _mode_chunks(basis.modes, chunk):
        brs = np.empty((len(group), 3, n, n, n))
        for m, mode in enumerate(group):
            xi = mode.xi
            brs[m] = kernels.lie_product(xi.phys, xi.grad, w.phys, gw)
        spec = np.fft.rfftn(brs, axes=(-3, -2, -1))
        spec *= g.dealias_mask
        gbr = np.fft.irfftn(
            np.stack([1j * g.kx * spec, 1j * g.ky * spec, 1j * g.kz * spec], axis=1),
            s=(n, n, n),
            axes=(-3, -2, -1),
        )  # (len(group), 3 axes, 3 comps, ...)
        br_phys = np.fft.irfftn(spec, s=(n, n, n), axes=(-3, -2, -1))
        for m, mode in enumerate(group):
            xi = mode.xi
            acc += kernels.lie_product(xi.phys, xi.grad, br_phys[m], gbr[m])
    out = dealias(VectorField.from_phys(g, 0.5 * acc))
    return out
