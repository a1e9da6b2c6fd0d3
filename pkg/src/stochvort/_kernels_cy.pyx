# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pointwise product kernels.

These fuse the component sums of the Lie-derivative products into single
passes over the grid, avoiding the temporaries einsum allocates.  Interface
mirrors ``_kernels_py``.
"""

BACKEND = "cython"


def lie_product(double[:, ::1] xi, double[:, :, ::1] gxi,
                double[:, ::1] w, double[:, :, ::1] gw,
                double[:, ::1] out):
    cdef Py_ssize_t npts = xi.shape[1]
    cdef Py_ssize_t i, j, p
    with nogil:
        for i in range(3):
            for p in range(npts):
                out[i, p] = 0.0
            for j in range(3):
                for p in range(npts):
                    out[i, p] += xi[j, p] * gw[j, i, p] - w[j, p] * gxi[j, i, p]
    return out


def adjoint_product(double[:, ::1] xi, double[:, :, ::1] gxi,
                    double[:, ::1] g, double[:, :, ::1] gg,
                    double[:, ::1] out):
    cdef Py_ssize_t npts = xi.shape[1]
    cdef Py_ssize_t i, j, p
    with nogil:
        for i in range(3):
            for p in range(npts):
                out[i, p] = 0.0
            for j in range(3):
                for p in range(npts):
                    out[i, p] -= xi[j, p] * gg[j, i, p] + g[j, p] * gxi[i, j, p]
    return out


def mat_apply(double[:, :, ::1] m, double[:, ::1] f, double[:, ::1] out):
    cdef Py_ssize_t npts = f.shape[1]
    cdef Py_ssize_t i, p
    with nogil:
        for i in range(3):
            for p in range(npts):
                out[i, p] = m[i, 0, p] * f[0, p] + m[i, 1, p] * f[1, p] + m[i, 2, p] * f[2, p]
    return out


def identity_checks(double[:, ::1] xi, double[:, :, ::1] gxi, double[:, :, :, ::1] hxi,
                    double[:, ::1] f, double[:, :, ::1] gf, double[:, :, :, ::1] hf,
                    double[:, ::1] g, double[:, :, ::1] gg,
                    double s4_scale, double[::1] acc):
    """All identity-suite quadratures for one (operand, field pair) in a
    single pass; every intermediate field lives in registers.

    Accumulator layout (unweighted point sums):
      0 <L^2 f, f>      1 <Lf, Lf>        2 <f, S2^2 f>     3 <f, S4 f>
      4 <f, f>          5 |L*f + Lf - S2 f|^2               6 |L*f|^2
      7 |L S2 f - S2 L f + S4 f|^2        8 |L S2 f|^2      9 |S2 L f|^2
      10 |S4 f|^2       11 <Lf, g>        12 <f, L* g>      13 <g, g>
    """
    cdef Py_ssize_t npts = f.shape[1]
    cdef Py_ssize_t p, i, j, l, m
    cdef double x[3]
    cdef double fv[3]
    cdef double gv[3]
    cdef double G[3][3]
    cdef double Hx[3][3][3]
    cdef double gF[3][3]
    cdef double Hf[3][3][3]
    cdef double gG[3][3]
    cdef double aa[3][3]
    cdef double xa[3][3]
    cdef double bc[3][3]
    cdef double w1[3]
    cdef double w2[3][3]
    cdef double advf[3]
    cdef double Lf[3]
    cdef double LLf[3]
    cdef double S2f[3]
    cdef double S2S2f[3]
    cdef double S4f[3]
    cdef double Lsf[3]
    cdef double LS2f[3]
    cdef double S2Lf[3]
    cdef double Lsg[3]
    cdef double t, racc
    cdef double out[14]
    for i in range(14):
        out[i] = 0.0
    with nogil:
        for p in range(npts):
            for i in range(3):
                x[i] = xi[i, p]
                fv[i] = f[i, p]
                gv[i] = g[i, p]
            for i in range(3):
                for j in range(3):
                    G[i][j] = gxi[i, j, p]
                    gF[i][j] = gf[i, j, p]
                    gG[i][j] = gg[i, j, p]
            for i in range(3):
                for j in range(3):
                    for l in range(3):
                        Hx[i][j][l] = hxi[i, j, l, p]
                        Hf[i][j][l] = hf[i, j, l, p]
            # zero-order tables from the operand derivatives
            for i in range(3):
                for j in range(3):
                    aa[i][j] = -(G[i][j] + G[j][i])
            for i in range(3):
                for l in range(3):
                    t = 0.0
                    for j in range(3):
                        t -= x[j] * (Hx[j][i][l] + Hx[j][l][i])
                    xa[i][l] = t
            for i in range(3):
                for l in range(3):
                    t = xa[i][l]
                    for j in range(3):
                        t -= aa[j][l] * G[j][i]  # b_il
                    for m in range(3):
                        t += aa[i][m] * G[l][m]  # + c_il
                    bc[i][l] = t
            for m in range(3):
                t = 0.0
                for j in range(3):
                    t += x[j] * G[j][m]
                w1[m] = t
            for m in range(3):
                for i in range(3):
                    t = 0.0
                    for j in range(3):
                        t += x[j] * Hx[j][m][i]
                    w2[m][i] = t
            # first application and friends
            for i in range(3):
                t = 0.0
                for j in range(3):
                    t += x[j] * gF[j][i]
                advf[i] = t
                for j in range(3):
                    t -= fv[j] * G[j][i]
                Lf[i] = t
            for i in range(3):
                t = 0.0
                for m in range(3):
                    t += (w1[m] * gF[m][i]
                          - (advf[m] + Lf[m]) * G[m][i]
                          - fv[m] * w2[m][i])
                t += (x[0] * x[0] * Hf[0][0][i] + x[1] * x[1] * Hf[1][1][i]
                      + x[2] * x[2] * Hf[2][2][i]
                      + 2.0 * (x[0] * x[1] * Hf[0][1][i]
                               + x[0] * x[2] * Hf[0][2][i]
                               + x[1] * x[2] * Hf[1][2][i]))
                LLf[i] = t
            for i in range(3):
                S2f[i] = aa[i][0] * fv[0] + aa[i][1] * fv[1] + aa[i][2] * fv[2]
            for i in range(3):
                S2S2f[i] = aa[i][0] * S2f[0] + aa[i][1] * S2f[1] + aa[i][2] * S2f[2]
                S4f[i] = -s4_scale * (bc[i][0] * fv[0] + bc[i][1] * fv[1] + bc[i][2] * fv[2])
                S2Lf[i] = aa[i][0] * Lf[0] + aa[i][1] * Lf[1] + aa[i][2] * Lf[2]
            for i in range(3):
                t = advf[i]
                for j in range(3):
                    t += fv[j] * G[i][j]
                Lsf[i] = -t
                t = 0.0
                for j in range(3):
                    t += x[j] * gG[j][i] + gv[j] * G[i][j]
                Lsg[i] = -t
            for i in range(3):
                t = 0.0
                for l in range(3):
                    t += xa[i][l] * fv[l] + aa[i][l] * advf[l]
                for m in range(3):
                    t -= S2f[m] * G[m][i]
                LS2f[i] = t
            # quadrature accumulators
            for i in range(3):
                out[0] += LLf[i] * fv[i]
                out[1] += Lf[i] * Lf[i]
                out[2] += fv[i] * S2S2f[i]
                out[3] += fv[i] * S4f[i]
                out[4] += fv[i] * fv[i]
                racc = Lsf[i] + Lf[i] - S2f[i]
                out[5] += racc * racc
                out[6] += Lsf[i] * Lsf[i]
                racc = LS2f[i] - S2Lf[i] + S4f[i]
                out[7] += racc * racc
                out[8] += LS2f[i] * LS2f[i]
                out[9] += S2Lf[i] * S2Lf[i]
                out[10] += S4f[i] * S4f[i]
                out[11] += Lf[i] * gv[i]
                out[12] += fv[i] * Lsg[i]
                out[13] += gv[i] * gv[i]
    for i in range(14):
        acc[i] = out[i]
    return acc


