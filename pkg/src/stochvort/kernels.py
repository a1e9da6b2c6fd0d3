"""Backend selection for the pointwise product kernels.

The compiled Cython module is used when it imported cleanly; otherwise the
NumPy fallback takes over.  Set ``STOCHVORT_KERNELS=numpy`` (or ``cython``)
to force a backend; forcing ``cython`` when the extension is missing raises.

Wrappers below accept grid-shaped arrays (trailing (n, n, n) axes) and
handle the flattening the kernels expect.
"""

import os

import numpy as np

from . import _kernels_py

_requested = os.environ.get("STOCHVORT_KERNELS", "auto").lower()
if _requested in ("auto", "cython"):
    try:
        from . import _kernels_cy as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _kernels_py
elif _requested == "numpy":
    _impl = _kernels_py
else:
    raise ValueError(f"STOCHVORT_KERNELS={_requested!r} (want auto, cython or numpy)")

BACKEND = _impl.BACKEND


def _flat(a, rank):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(a.shape[:rank] + (-1,))


def lie_product(xi, gxi, w, gw):
    """(xi . grad) w - (w . grad) xi from precomputed gradients."""
    out = np.empty_like(_flat(w, 1))
    _impl.lie_product(_flat(xi, 1), _flat(gxi, 2), _flat(w, 1), _flat(gw, 2), out)
    return out.reshape(w.shape)


def adjoint_product(xi, gxi, g, gg):
    """Dual Lie operator product: -(xi . grad) g_i - g_j d_i xi^j."""
    out = np.empty_like(_flat(g, 1))
    _impl.adjoint_product(_flat(xi, 1), _flat(gxi, 2), _flat(g, 1), _flat(gg, 2), out)
    return out.reshape(g.shape)


def mat_apply(m, f):
    """Apply a pointwise 3x3 coefficient table to a vector field."""
    out = np.empty_like(_flat(f, 1))
    _impl.mat_apply(_flat(m, 2), _flat(f, 1), out)
    return out.reshape(f.shape)


def identity_checks(xi, gxi, hxi, f, gf, hf, g, gg, s4_scale=1.0):
    """Quadrature sums for the operator-identity suites in one fused pass.

    Returns the 14 accumulators documented in the kernel: cancellation
    identity terms, adjoint/dual/commutator residual norms, and the duality
    pair against the second field g.
    """
    acc = np.empty(14)
    _impl.identity_checks(
        _flat(xi, 1), _flat(gxi, 2), _flat(hxi, 3),
        _flat(f, 1), _flat(gf, 2), _flat(hf, 3),
        _flat(g, 1), _flat(gg, 2), float(s4_scale), acc,
    )
    return acc
