"""Run diagnostics and the estimate-verification suites.

Covers per-step norm records with the blow-up functional (time integral of
the vorticity sup norm), the stopping-rule check, probes for the logarithmic
gradient inequality and the interpolation estimate, and the identity suites
for the operator algebra: adjoint duality, the zero-order cancellation
identity with its explicit constant, and the Laplacian-level analogue
assembled from S1..S4.

Inequality probes report empirical constants; nothing asserts a particular
constant value, only existence/stability.  Identity checks are exact up to
round-off when the test fields keep every product below the dealiasing
cutoff, which the suites enforce by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .field import (
    Grid,
    VectorField,
    grad_tensor,
    hessian_tensor,
    l2_inner,
    l2_norm,
    laplacian,
    sobolev_norm,
    sup_norm,
    sup_norm_tensor,
)
from .operators import LieOperand, biot_savart, lie_derivative

__all__ = [
    "DiagRecord",
    "bkm_update",
    "StopDecision",
    "stopping_check",
    "log_inequality_probe",
    "gn_estimate_probe",
    "norm_equivalence_probe",
    "random_trig_field",
    "striking_suite",
    "striking_delta_suite",
    "operator_identity_suite",
    "hp_ratio_probe",
]


# -- per-step records ----------------------------------------------------------


@dataclass(frozen=True)
class DiagRecord:
    t: float
    l2: float
    w22: float
    sup: float
    gradv_sup: float
    kappa: float
    bkm_integral: float
    alpha_t: float
    sup_limsup: float

    CSV_COLUMNS = ("t", "l2", "w22", "sup", "gradv_sup", "kappa", "bkm_integral", "alpha_t")

    def csv_row(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def bkm_update(
    record: DiagRecord | None,
    omega: VectorField,
    dt: float,
    t: float | None = None,
    gradv_sup: float = math.nan,
    kappa: float = math.nan,
) -> DiagRecord:
    """Extend the diagnostics record by one sample of ``omega``.

    The blow-up integral accumulates the sup norm by the trapezoid rule from
    the previous record; passing ``record=None`` starts the series at ``t``
    (default 0) with a zero integral.
    """
    g = omega.grid
    sup = sup_norm(omega)
    l2 = l2_norm(omega)
    c2 = (np.abs(omega.spec) / g.n**3) ** 2
    lap2 = float(g.L**3 * np.sum(g.parseval_weight * g.k2**2 * c2))
    alpha_t = l2**2 + lap2
    w22 = sobolev_norm(omega, 2.0)
    if record is None:
        return DiagRecord(
            t=0.0 if t is None else t,
            l2=l2,
            w22=w22,
            sup=sup,
            gradv_sup=gradv_sup,
            kappa=kappa,
            bkm_integral=0.0,
            alpha_t=alpha_t,
            sup_limsup=sup,
        )
    new_t = record.t + dt if t is None else t
    integral = record.bkm_integral + 0.5 * dt * (record.sup + sup)
    return DiagRecord(
        t=new_t,
        l2=l2,
        w22=w22,
        sup=sup,
        gradv_sup=gradv_sup,
        kappa=kappa,
        bkm_integral=integral,
        alpha_t=alpha_t,
        sup_limsup=max(record.sup_limsup, sup),
    )


def write_probe_report(path, report: dict):
    """Plain-text key-value dump of a probe report."""
    with open(path, "w") as fh:
        for key, val in report.items():
            if isinstance(val, (list, tuple, np.ndarray)):
                val = " ".join(f"{float(v):.17g}" for v in np.asarray(val).ravel())
            elif isinstance(val, float):
                val = f"{val:.17g}"
            fh.write(f"{key} = {val}\n")


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    tau: float | None = None
    trigger: float | None = None


def stopping_check(record: DiagRecord, R: float, C_BS: float) -> StopDecision:
    """Fire at the first crossing of ||omega||_{W^{2,2}} >= R / C_BS."""
    if not math.isfinite(R):
        return StopDecision(False)
    if C_BS <= 0:
        raise ValueError("C_BS must be positive")
    if record.w22 >= R / C_BS:
        return StopDecision(True, tau=record.t, trigger=record.w22)
    return StopDecision(False)


# -- inequality probes ----------------------------------------------------------


def log_inequality_probe(omega: VectorField, v: VectorField | None = None) -> dict:
    """Both sides of ||grad v||_inf <= C (1 + log(||w||_{2,2}^2 + e)) ||w||_inf.

    Returns lhs, rhs (with C = 1) and their ratio; the constant is empirical.
    """
    if v is None:
        v = biot_savart(omega)
    lhs = sup_norm_tensor(grad_tensor(v), omega.grid)
    w_sup = sup_norm(omega)
    w22 = sobolev_norm(omega, 2.0)
    rhs = (1.0 + math.log(w22**2 + math.e)) * w_sup
    ratio = 0.0 if w_sup == 0.0 else lhs / rhs
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}


def gn_estimate_probe(u: VectorField, omega: VectorField) -> dict:
    """Interpolation estimate probe:
    |<lap L_u w, lap w>| vs ||grad u||_inf ||w||_{2,2}^2
                           + ||w||_inf ||grad u||_{2,2} ||w||_{2,2}.
    """
    g = omega.grid
    lw = laplacian(lie_derivative(LieOperand(u), omega))
    lhs = abs(l2_inner(lw, laplacian(omega)))
    gu = grad_tensor(u)
    w22 = sobolev_norm(omega, 2.0)
    term1 = sup_norm_tensor(gu, g) * w22**2
    gu_field_sq = sum(
        sobolev_norm(VectorField.from_phys(g, gu[a]), 2.0) ** 2 for a in range(3)
    )
    term2 = sup_norm(omega) * math.sqrt(gu_field_sq) * w22
    denom = term1 + term2
    return {
        "lhs": lhs,
        "term_gradu": term1,
        "term_sup": term2,
        "constant": 0.0 if denom == 0 else lhs / denom,
    }


def norm_equivalence_probe(omega: VectorField) -> dict:
    """Ratio ||v||_{3,2} / ||omega||_{2,2} for v = biot_savart(omega)."""
    w22 = sobolev_norm(omega, 2.0)
    if w22 == 0.0:
        return {"ratio": math.nan, "v32": 0.0, "w22": 0.0, "skipped": True}
    v = biot_savart(omega)
    v32 = sobolev_norm(v, 3.0)
    return {"ratio": v32 / w22, "v32": v32, "w22": w22, "skipped": False}


# -- grid-independent random test fields ----------------------------------------


def random_trig_field(
    grid: Grid, band: int, seed, divfree: bool = False, unit_norm: bool = True
) -> VectorField:
    """Random trigonometric polynomial with |k_i| <= band, mean zero.

    Coefficients are drawn per lattice site in a fixed order, so the same
    seed produces the same underlying function on any grid that resolves the
    band (used for refinement-stability measurements).
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    if band >= n // 2:
        raise ValueError(f"band {band} too wide for grid n={n}")
    spec = np.zeros((3, n, n, n // 2 + 1), dtype=np.complex128)
    triples = []
    for kx in range(-band, band + 1):
        for ky in range(-band, band + 1):
            for kz in range(0, band + 1):
                if kz == 0:
                    lead = kx if kx != 0 else ky
                    if lead <= 0 and not (kx == 0 and ky == 0 and kz == 0):
                        continue
                if kx == 0 and ky == 0 and kz == 0:
                    continue
                triples.append((kx, ky, kz))
    triples.sort()
    for k in triples:
        c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        if divfree:
            kk = np.array(k, dtype=np.float64)
            khat = kk / np.linalg.norm(kk)
            c = c - np.dot(c, khat) * khat
        px, py, kz = k[0] % n, k[1] % n, k[2]
        spec[:, px, py, kz] = c * n**3
        if kz == 0:
            spec[:, (-k[0]) % n, (-k[1]) % n, 0] = np.conj(c) * n**3
    f = VectorField.from_spec(grid, spec)
    if unit_norm:
        nrm = l2_norm(f)
        if nrm > 0:
            f = f * (1.0 / nrm)
    return f


# -- operator identity suites ----------------------------------------------------


def _dot(a, b, dV):
    return float(np.vdot(a, b).real * dV)


@dataclass
class ModeReport:
    k_index: tuple | None
    c0: float
    identity_relerr: float = 0.0
    bound_ratio: float = 0.0
    delta_relerr: float = 0.0
    c2_measured: float = 0.0
    trials: int = 0


@dataclass
class SuiteReport:
    per_mode: list
    max_identity_relerr: float = 0.0
    max_bound_ratio: float = 0.0
    max_duality_relerr: float = 0.0
    max_adjoint_relerr: float = 0.0
    max_commutator_relerr: float = 0.0
    max_delta_relerr: float = 0.0

    def mode(self, i):
        return self.per_mode[i]


def _field_pack(grid, band, seed):
    f = random_trig_field(grid, band, seed)
    gf = grad_tensor(f)
    hf = hessian_tensor(f)
    return f, gf, hf


def suite_band(grid: Grid, xi_kmax: int = 2) -> int:
    """Widest test-field band keeping all chained products inside the
    dealiasing cutoff (products add up to 2 * xi_kmax per axis)."""
    return min(6, grid.dealias_cut - 2 * xi_kmax)


def _mode_blocks(modes, bytes_per_mode, budget=1.2e9):
    size = max(1, min(len(modes), int(budget / max(bytes_per_mode, 1))))
    for i in range(0, len(modes), size):
        yield modes[i : i + size]


def _identity_engine(basis, trials: int, seed: int, band: int | None) -> SuiteReport:
    """All operator-identity families in one pass per (mode, field pair):
    adjoint duality, L* = -L + S2, L S2 = S2 L - S4, the zero-order
    cancellation identity, and its explicit-constant bound.

    Each check runs through the fused quadrature kernel, which rebuilds the
    zero-order coefficient tables pointwise from the operand derivatives; a
    unit test pins those expansions to the literal operator compositions.
    """
    from .operators import _s4_scale

    grid = basis.grid
    if band is None:
        band = suite_band(grid, basis.kmax or 2)
    per_mode = {id(m): ModeReport(k_index=m.k_index, c0=m.xi.c0_constant()) for m in basis.modes}
    report = SuiteReport(per_mode=[per_mode[id(m)] for m in basis.modes])
    tiny = 1e-300
    bytes_per_mode = 39 * grid.n**3 * 8  # phys + gradient + Hessian resident
    for block in _mode_blocks(basis.modes, bytes_per_mode):
        packs = [(m, m.xi.phys, m.xi.grad, m.xi.hess) for m in block]
        for trial in range(trials):
            f, gf, hf = _field_pack(grid, band, (seed, 7_001, trial))
            gfld = random_trig_field(grid, band, (seed, 7_003, trial))
            gg = grad_tensor(gfld)
            fp, gp = f.phys, gfld.phys
            for mode, xp, xg, xh in packs:
                mrep = per_mode[id(mode)]
                acc = kernels.identity_checks(xp, xg, xh, fp, gf, hf, gp, gg, _s4_scale)
                (t_ll, t_ee, s22, s4, fn2, ra2, lsf2, rc2, ls2f2, s2lf2, s4f2,
                 dual_fg, dual_gf, gn2) = acc
                # cancellation identity and explicit-constant bound
                rhs = 0.5 * (s22 + s4)
                lhs = t_ll + t_ee
                denom = abs(t_ll) + t_ee + abs(rhs)
                rel = 0.0 if denom == 0.0 else abs(lhs - rhs) / denom
                mrep.identity_relerr = max(mrep.identity_relerr, rel)
                if mrep.c0 > 0:
                    # both sides are raw point sums; the quadrature weight cancels
                    mrep.bound_ratio = max(mrep.bound_ratio, abs(lhs) / (mrep.c0 * fn2))
                elif abs(lhs) > 1e-20 * fn2:
                    mrep.bound_ratio = math.inf
                report.max_duality_relerr = max(
                    report.max_duality_relerr,
                    abs(dual_fg - dual_gf) / (math.sqrt(fn2 * gn2) + tiny),
                )
                report.max_adjoint_relerr = max(
                    report.max_adjoint_relerr,
                    math.sqrt(ra2) / (math.sqrt(lsf2) + math.sqrt(t_ee) + tiny),
                )
                report.max_commutator_relerr = max(
                    report.max_commutator_relerr,
                    math.sqrt(rc2)
                    / (math.sqrt(ls2f2) + math.sqrt(s2lf2) + math.sqrt(s4f2) + tiny),
                )
                mrep.trials += 1
        for mode, *_ in packs:
            mode.xi.release()
        del packs
    for mrep in report.per_mode:
        report.max_identity_relerr = max(report.max_identity_relerr, mrep.identity_relerr)
        report.max_bound_ratio = max(report.max_bound_ratio, mrep.bound_ratio)
    return report


def striking_suite(basis, trials: int, seed: int = 0, band: int | None = None) -> SuiteReport:
    """Zero-order cancellation identity and bound, for every basis mode.

    For each mode and random band-limited f checks
        <L^2 f, f> + <L f, L f> = (1/2) <f, (S2^2 + S4) f>
    (relative to the summed magnitudes of the participating terms) and the
    bound |lhs| <= C_k^(0) ||f||^2 with the explicit constant (c = 48).
    Chained operators are evaluated from pre-contracted operand tables; unit
    tests pin that expansion to the literal compositions.
    """
    return _identity_engine(basis, trials, seed, band)


def operator_identity_suite(
    basis, trials: int, seed: int = 0, band: int | None = None
) -> SuiteReport:
    """Adjoint duality, the dual-operator identity L* = -L + S2, and the
    commutator identity L S2 = S2 L - S4, for every mode and random fields."""
    return _identity_engine(basis, trials, seed, band)


def striking_delta_suite(
    basis,
    trials: int,
    seed: int = 0,
    band: int | None = None,
    modes: list | None = None,
) -> SuiteReport:
    """Laplacian-level cancellation: <lap L^2 f, lap f> + ||lap L f||^2 equals
    the S1/S2/S3/S4 assembly; also measures the per-mode constant
    C_k^(2) = max |lhs| / ||f||_{2,2}^2.

    Identity trials cycle round-robin through the modes; the constant is
    additionally measured once per mode with a fixed field.
    """
    grid = basis.grid
    if band is None:
        band = suite_band(grid, basis.kmax or 2)
    n = grid.n
    dV = grid.dV
    mode_list = basis.modes if modes is None else modes
    per_mode = [ModeReport(k_index=m.k_index, c0=0.0) for m in mode_list]
    report = SuiteReport(per_mode=per_mode)

    def lap_arr(arr):
        s = np.fft.rfftn(arr, axes=(-3, -2, -1))
        return np.fft.irfftn(-grid.k2 * s, s=(n, n, n), axes=(-3, -2, -1))

    def grad_arr(arr):
        s = np.fft.rfftn(arr, axes=(-3, -2, -1))
        stacked = np.stack([1j * grid.kx * s, 1j * grid.ky * s, 1j * grid.kz * s])
        return np.fft.irfftn(stacked, s=(n, n, n), axes=(-3, -2, -1))

    checks = [(t % len(mode_list), (seed, 7_004, t)) for t in range(trials)]
    checks += [(i, (seed, 7_005, 0)) for i in range(len(mode_list))]  # C2 measurement
    field_cache = {}
    prev_mode = None
    for mode_i, fkey in checks:
        mode = mode_list[mode_i]
        if prev_mode is not None and prev_mode is not mode:
            prev_mode.xi.release()
        prev_mode = mode
        xi = mode.xi
        mrep = per_mode[mode_i]
        if fkey not in field_cache:
            f = random_trig_field(grid, band, fkey)
            gf = grad_tensor(f)
            lapf = laplacian(f)
            glapf = grad_tensor(lapf)
            field_cache = {fkey: (f, gf, lapf, glapf)}  # keep one pack live
        f, gf, lapf, glapf = field_cache[fkey]
        fp = f.phys
        Lf = kernels.lie_product(xi.phys, xi.grad, fp, gf)
        LLf = kernels.lie_product(xi.phys, xi.grad, Lf, grad_arr(Lf))
        lapLf = lap_arr(Lf)
        lapLLf = lap_arr(LLf)
        L_lapf = kernels.lie_product(xi.phys, xi.grad, lapf.phys, glapf)
        S1f = lapLf - L_lapf
        # S3 f = S1(L f) - L(S1 f), with S1(L f) = lap(L L f) - L(lap L f)
        gLapLf = grad_arr(lapLf)
        S1Lf = lapLLf - kernels.lie_product(xi.phys, xi.grad, lapLf, gLapLf)
        gS1f = grad_arr(S1f)
        LS1f = kernels.lie_product(xi.phys, xi.grad, S1f, gS1f)
        S3f = S1Lf - LS1f
        a = xi.a_table
        m4 = xi.s4_table
        lapfp = lapf.phys
        S2lapf = kernels.mat_apply(a, lapfp)
        S2S2lapf = kernels.mat_apply(a, S2lapf)
        S4lapf = kernels.mat_apply(m4, lapfp)
        S2S1f = kernels.mat_apply(a, S1f)
        t1 = _dot(lapLLf, lapfp, dV)
        t2 = _dot(lapLf, lapLf, dV)
        lhs = t1 + t2
        # The cross term <S2 lap f, S1 f> enters with coefficient 1: it comes
        # from the single substitution lap L = L lap + S1 outside the
        # symmetrization, not from the halved self-adjoint pair.
        rhs_terms = [
            _dot(lapfp, S3f, dV),
            _dot(lapfp, S2S1f, dV),
            _dot(S1f, S1f, dV),
            0.5 * _dot(S4lapf, lapfp, dV),
            0.5 * _dot(S2S2lapf, lapfp, dV),
            _dot(S2lapf, S1f, dV),
        ]
        rhs = sum(rhs_terms)
        denom = abs(t1) + abs(t2) + sum(abs(x) for x in rhs_terms)
        rel = 0.0 if denom == 0.0 else abs(lhs - rhs) / denom
        mrep.delta_relerr = max(mrep.delta_relerr, rel)
        w22sq = sobolev_norm(f, 2.0) ** 2
        mrep.c2_measured = max(mrep.c2_measured, abs(lhs) / w22sq)
        mrep.trials += 1
        report.max_delta_relerr = max(report.max_delta_relerr, rel)
    for mode in mode_list:
        mode.xi.release()
    return report


def hp_ratio_probe(basis, trials: int = 20, seed: int = 0, band: int | None = None) -> dict:
    """Empirical boundedness of the two square-sum noise assumptions.

    Returns per-sample ratios sum_k ||L_k f||^2 / ||f||_{2,2}^2 and
    ||sum_k L_k^2 f||^2 / ||f||_{2,2}^2 over random f; callers assert only
    that the spread is finite (the constants are existential).
    """
    from .operators import ito_correction

    grid = basis.grid
    if band is None:
        band = suite_band(grid, basis.kmax or 2)
    hp1, hp2 = [], []
    for t in range(trials):
        f = random_trig_field(grid, band, (seed, 7_006, t))
        gf = grad_tensor(f)
        total = 0.0
        for mode in basis.modes:
            Lf = kernels.lie_product(mode.xi.phys, mode.xi.grad, f.phys, gf)
            total += _dot(Lf, Lf, grid.dV)
        w22sq = sobolev_norm(f, 2.0) ** 2
        hp2.append(total / w22sq)
        sum_ll = ito_correction(basis, f) * 2.0
        hp1.append(l2_norm(sum_ll) ** 2 / w22sq)
    return {
        "hp1_ratios": hp1,
        "hp2_ratios": hp2,
        "hp1_max": max(hp1),
        "hp2_max": max(hp2),
        "hp1_spread": max(hp1) / max(min(hp1), 1e-300),
        "hp2_spread": max(hp2) / max(min(hp2), 1e-300),
    }
