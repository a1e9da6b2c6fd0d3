"""Pure-NumPy fallback for the pointwise product kernels.

Same call signatures as the compiled ``_kernels_cy`` module: all arrays are
float64 and C-contiguous, with components flattened to shape (3, N),
(3, 3, N) or (3, 3, 3, N).
"""

import numpy as np

BACKEND = "numpy"


def lie_product(xi, gxi, w, gw, out):
    """out_i = sum_j xi_j d_j w_i - w_j d_j xi_i."""
    np.einsum("jp,jip->ip", xi, gw, out=out)
    out -= np.einsum("jp,jip->ip", w, gxi)
    return out


def adjoint_product(xi, gxi, g, gg, out):
    """out_i = -sum_j (xi_j d_j g_i + g_j d_i xi_j)."""
    np.einsum("jp,jip->ip", xi, gg, out=out)
    out += np.einsum("jp,ijp->ip", g, gxi)
    np.negative(out, out=out)
    return out


def mat_apply(m, f, out):
    """out_i = sum_j m_ij f_j for a pointwise 3x3 coefficient table."""
    np.einsum("ijp,jp->ip", m, f, out=out)
    return out


def identity_checks(xi, gxi, hxi, f, gf, hf, g, gg, s4_scale, acc):
    """Identity-suite quadrature sums; see the compiled twin for the
    accumulator layout.  Vectorized composition of the individual products
    (correctness fallback, allocates intermediates)."""
    a = -(gxi + gxi.transpose(1, 0, 2))
    ga = -(hxi + hxi.transpose(0, 2, 1, 3))  # d_m a_il = -(H[m,i,l] + H[m,l,i])
    xa = np.einsum("jp,jilp->ilp", xi, ga)
    b = xa - np.einsum("jlp,jip->ilp", a, gxi)
    c = np.einsum("imp,lmp->ilp", a, gxi)
    advf = np.einsum("jp,jip->ip", xi, gf)
    Lf = advf - np.einsum("jp,jip->ip", f, gxi)
    w1 = np.einsum("jp,jmp->mp", xi, gxi)
    w2 = np.einsum("jp,jmip->mip", xi, hxi)
    LLf = (
        np.einsum("mp,mip->ip", w1, gf)
        + np.einsum("jp,mp,jmip->ip", xi, xi, hf)
        - np.einsum("mp,mip->ip", advf + Lf, gxi)
        - np.einsum("mp,mip->ip", f, w2)
    )
    S2f = np.einsum("ijp,jp->ip", a, f)
    S2S2f = np.einsum("ijp,jp->ip", a, S2f)
    S4f = -s4_scale * np.einsum("ilp,lp->ip", b + c, f)
    S2Lf = np.einsum("ijp,jp->ip", a, Lf)
    Lsf = -advf - np.einsum("jp,ijp->ip", f, gxi)
    Lsg = -np.einsum("jp,jip->ip", xi, gg) - np.einsum("jp,ijp->ip", g, gxi)
    LS2f = (
        np.einsum("ilp,lp->ip", xa, f)
        + np.einsum("ilp,lp->ip", a, advf)
        - np.einsum("mp,mip->ip", S2f, gxi)
    )
    resid_a = Lsf + Lf - S2f
    resid_c = LS2f - S2Lf + S4f
    vals = [
        np.sum(LLf * f),
        np.sum(Lf * Lf),
        np.sum(f * S2S2f),
        np.sum(f * S4f),
        np.sum(f * f),
        np.sum(resid_a * resid_a),
        np.sum(Lsf * Lsf),
        np.sum(resid_c * resid_c),
        np.sum(LS2f * LS2f),
        np.sum(S2Lf * S2Lf),
        np.sum(S4f * S4f),
        np.sum(Lf * g),
        np.sum(f * Lsg),
        np.sum(g * g),
    ]
    acc[:] = vals
    return acc
