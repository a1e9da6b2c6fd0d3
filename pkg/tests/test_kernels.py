"""Backend parity: the compiled kernels must match the NumPy fallback, and
the fused identity kernel must match literal operator compositions."""

import numpy as np
import pytest

import stochvort._kernels_py as kpy
from stochvort import diagnostics as diag
from stochvort import kernels, noise, operators as op
from stochvort.field import Grid, grad_tensor, hessian_tensor, l2_inner

try:
    import stochvort._kernels_cy as kcy
except ImportError:
    kcy = None


def _flat(a, rank):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(a.shape[:rank] + (-1,))


@pytest.fixture(scope="module")
def setup():
    g = Grid(16)
    basis = noise.build_fourier_basis(g, kmax=2, alpha=3.0, seed=0)
    xi = basis.modes[5].xi
    f = diag.random_trig_field(g, 3, seed=21)
    gfld = diag.random_trig_field(g, 3, seed=22)
    return g, xi, f, gfld


@pytest.mark.skipif(kcy is None, reason="compiled kernels unavailable")
def test_backend_parity(setup):
    g, xi, f, gfld = setup
    gf, hf = grad_tensor(f), hessian_tensor(f)
    gg = grad_tensor(gfld)

    out_cy = np.empty_like(_flat(f.phys, 1))
    out_py = np.empty_like(out_cy)
    kcy.lie_product(_flat(xi.phys, 1), _flat(xi.grad, 2), _flat(f.phys, 1), _flat(gf, 2), out_cy)
    kpy.lie_product(_flat(xi.phys, 1), _flat(xi.grad, 2), _flat(f.phys, 1), _flat(gf, 2), out_py)
    assert np.allclose(out_cy, out_py, rtol=0, atol=1e-14)

    kcy.adjoint_product(_flat(xi.phys, 1), _flat(xi.grad, 2), _flat(f.phys, 1), _flat(gf, 2), out_cy)
    kpy.adjoint_product(_flat(xi.phys, 1), _flat(xi.grad, 2), _flat(f.phys, 1), _flat(gf, 2), out_py)
    assert np.allclose(out_cy, out_py, rtol=0, atol=1e-14)

    kcy.mat_apply(_flat(xi.a_table, 2), _flat(f.phys, 1), out_cy)
    kpy.mat_apply(_flat(xi.a_table, 2), _flat(f.phys, 1), out_py)
    assert np.allclose(out_cy, out_py, rtol=0, atol=1e-14)

    acc_cy, acc_py = np.empty(14), np.empty(14)
    args = (
        _flat(xi.phys, 1), _flat(xi.grad, 2), _flat(xi.hess, 3),
        _flat(f.phys, 1), _flat(gf, 2), _flat(hf, 3),
        _flat(gfld.phys, 1), _flat(gg, 2), 1.0,
    )
    kcy.identity_checks(*args, acc_cy)
    kpy.identity_checks(*args, acc_py)
    assert np.allclose(acc_cy, acc_py, rtol=1e-12, atol=1e-12)


def test_fused_kernel_matches_compositions(setup):
    """The one-pass quadrature kernel must agree with the literal operator
    chain; this is the guard pinning the algebraic expansion."""
    g, xi, f, gfld = setup
    gf, hf = grad_tensor(f), hessian_tensor(f)
    gg = grad_tensor(gfld)
    acc = kernels.identity_checks(xi.phys, xi.grad, xi.hess, f.phys, gf, hf, gfld.phys, gg)
    dV = g.dV

    LLf = op.double_lie(xi, f)
    Lf = op.lie_derivative(xi, f)
    S2f = op.s2_apply(xi, f)
    S4f = op.s4_apply(xi, f)
    checks = [
        (acc[0] * dV, l2_inner(LLf, f)),
        (acc[1] * dV, l2_inner(Lf, Lf)),
        (acc[2] * dV, l2_inner(f, op.s2_apply(xi, S2f))),
        (acc[3] * dV, l2_inner(f, S4f)),
        (acc[11] * dV, l2_inner(Lf, gfld)),
        (acc[12] * dV, l2_inner(f, op.lie_adjoint(xi, gfld))),
    ]
    for got, want in checks:
        assert abs(got - want) <= 1e-12 * max(abs(want), 1e-6)


def test_lie_product_is_einsum(setup):
    g, xi, f, _ = setup
    gf = grad_tensor(f)
    out = kernels.lie_product(xi.phys, xi.grad, f.phys, gf)
    ref = np.einsum("j...,ji...->i...", xi.phys, gf) - np.einsum(
        "j...,ji...->i...", f.phys, xi.grad
    )
    assert np.allclose(out, ref, rtol=0, atol=1e-14)
