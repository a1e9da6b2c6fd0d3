"""Fixed-seed property suites behind the `verify` CLI command.

Each suite returns a list of named checks with residuals and tolerances;
any failed check makes the command exit nonzero.  These are quick versions
of the acceptance properties (smaller trial counts, same identities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as diag
from . import noise
from . import operators as op
from . import stepper as st
from .field import Grid, VectorField, abc_field, curl, l2_norm, random_divfree
from .lagrangian import (
    FieldEvaluator,
    circle_loop,
    circulation,
    make_flow,
    advect,
    resample_loop,
)

SUITES = ("operators", "stepper", "lagrangian", "noise")


@dataclass
class Check:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: residual={self.residual:.3e} tol={self.tol:.1e}"


def _default_basis(n: int, kmax: int = 2, alpha: float = 3.0):
    return noise.build_fourier_basis(Grid(n), kmax=kmax, alpha=alpha)


def suite_operators(n: int = 32, trials: int = 4, seed: int = 0) -> list[Check]:
    basis = _default_basis(n)
    grid = basis.grid
    checks = []
    rep = diag.operator_identity_suite(basis, trials=trials, seed=seed)
    checks.append(Check("adjoint duality <Lf,g>=<f,L*g>", rep.max_duality_relerr, 1e-10))
    checks.append(Check("dual identity L* = -L + S2", rep.max_adjoint_relerr, 1e-10))
    checks.append(Check("commutator L S2 = S2 L - S4", rep.max_commutator_relerr, 1e-9))
    srep = diag.striking_suite(basis, trials=trials, seed=seed)
    checks.append(Check("cancellation <L2f,f>+||Lf||^2 = (S2^2+S4)/2", srep.max_identity_relerr, 1e-9))
    checks.append(Check("bound ratio vs C_k^(0) (<= 1)", srep.max_bound_ratio, 1.0))
    drep = diag.striking_delta_suite(basis, trials=2 * trials, seed=seed)
    checks.append(Check("Laplacian-level cancellation (p1)+(p2)", drep.max_delta_relerr, 1e-8))
    bs_resid = 0.0
    for t in range(trials):
        w = random_divfree(grid, 8, (seed, 31, t))
        v = op.biot_savart(w)
        bs_resid = max(bs_resid, l2_norm(curl(v) - w) / l2_norm(w))
    checks.append(Check("curl(biot_savart) = id", bs_resid, 1e-12))
    return checks


def suite_stepper(n: int = 32, seed: int = 0) -> list[Check]:
    grid = Grid(n)
    X, Y, Z = grid.mesh
    checks = []
    # hyperviscous factor is exact per mode
    one = VectorField.from_phys(grid, np.stack([np.sin(2 * Y), 0 * X, 0 * X]))
    cfg = st.SimConfig(dt=1e-3, T=1e-3, scheme="ito_em", nu=1e-5, transport=False)
    s1 = st.step_ito_em(st.SimState(0.0, one, op.biot_savart(one)), None, cfg)
    expected = math.exp(-1e-5 * 2**10 * 1e-3)
    checks.append(
        Check("hyperviscous one-mode decay", abs(l2_norm(s1.omega) / l2_norm(one) - expected), 1e-13)
    )
    # one Euler-Maruyama step against the hand formula (constant xi)
    cb = noise.constant_basis(grid, [0.0, 0.0, 1.0])
    wz = VectorField.from_phys(grid, np.stack([np.sin(Z), 0 * X, 0 * X]))
    cfg = st.SimConfig(dt=2e-3, T=2e-3, scheme="ito_em", basis=cb, transport=False)
    dB = np.array([0.017])
    out = st.step_ito_em(st.SimState(0.0, wz, op.biot_savart(wz)), dB, cfg)
    hand = np.stack([np.sin(Z) - dB[0] * np.cos(Z) - 0.5 * 2e-3 * np.sin(Z), 0 * X, 0 * X])
    checks.append(
        Check("EM step matches hand formula", float(np.max(np.abs(out.omega.phys - hand))), 1e-12)
    )
    # steady Beltrami under deterministic Heun
    ab = abc_field(grid)
    traj = st.run(st.SimConfig(dt=1e-3, T=0.02, scheme="strat_heun", diag_every=20), ab)
    checks.append(
        Check(
            "Beltrami steady state (short)",
            abs(traj.diagnostics[-1].l2 - l2_norm(ab)) / l2_norm(ab),
            1e-10,
        )
    )
    # cutoff plateau values and monotonicity
    kappa_low = st.cutoff_kappa(ab, R=1.0, gradv_sup=0.5)
    kappa_high = st.cutoff_kappa(ab, R=1.0, gradv_sup=2.5)
    xs = np.linspace(1.0, 2.0, 101)
    ks = [st.cutoff_kappa(ab, R=1.0, gradv_sup=float(x)) for x in xs]
    mono = float(np.max(np.diff(ks)))
    checks.append(Check("cutoff is 1 below R", abs(kappa_low - 1.0), 0.0))
    checks.append(Check("cutoff is 0 above R+1", abs(kappa_high), 0.0))
    checks.append(Check("cutoff monotone on [R, R+1]", max(mono, 0.0), 0.0))
    # divergence/mean preservation over a short noisy run
    basis = _default_basis(n, kmax=1)
    w0 = random_divfree(grid, 4, (seed, 5))
    cfg = st.SimConfig(dt=1e-3, T=0.01, scheme="strat_heun", basis=basis, seed=seed, diag_every=10)
    traj = st.run(cfg, w0)
    checks.append(Check("run completes", 0.0 if traj.stop_flag == "completed" else 1.0, 0.0))
    return checks


def suite_lagrangian(n: int = 32, seed: int = 0) -> list[Check]:
    grid = Grid(n)
    X, Y, Z = grid.mesh
    checks = []
    f = VectorField.from_phys(grid, np.stack([np.sin(X), 0 * X, 0 * X]))
    val = FieldEvaluator(f).values(np.array([[np.pi / 2, 0.3, 1.1]]))
    checks.append(Check("trig interpolation exact", abs(val[0, 0] - 1.0), 1e-12))
    # constant-field transport is exact per step
    basis = noise.constant_basis(grid, [0.0, 0.0, 1.0])
    path = noise.sample_path(basis, 10, 1e-2, seed=seed)
    flow = make_flow(np.array([[1.0, 2.0, 3.0], [0.4, 0.5, 0.6]]))
    for j in range(10):
        flow = advect(flow, None, basis, path.increments[j], 1e-2)
    bt = path.cumulative()[-1, 0]
    expect = np.mod(flow.labels + np.array([0, 0, bt]), grid.L)
    checks.append(
        Check("constant-noise flow map exact", float(np.max(np.abs(flow.positions - expect))), 1e-12)
    )
    # circulation: constant field -> 0; resampling invariance
    loop = circle_loop([np.pi, np.pi, np.pi], 1.0, 64, grid.L)
    vconst = VectorField.from_phys(grid, np.stack([np.ones_like(X), 0 * X, 0 * X]))
    checks.append(Check("circulation of constant field", abs(circulation(loop, vconst)), 1e-12))
    # midpoint polygon quadrature is O(h^2); at 1024 markers the value is
    # converged past the 1e-6 invariance tolerance
    fine = circle_loop([np.pi, np.pi, np.pi], 1.0, 1024, grid.L)
    vf = VectorField.from_phys(grid, np.stack([0 * X, np.sin(X), 0 * X]))
    c0 = circulation(fine, vf)
    c1 = circulation(resample_loop(fine, 0.5 * float(np.max(fine.spacing()))), vf)
    checks.append(Check("circulation resampling invariance", abs(c1 - c0) / abs(c0), 1e-6))
    return checks


def suite_noise(n: int = 32, seed: int = 0) -> list[Check]:
    grid = Grid(n)
    checks = []
    basis = _default_basis(n, kmax=2)
    div_err = max(
        float(np.max(np.abs(m.xi.field.spec[0] * grid.kx + m.xi.field.spec[1] * grid.ky + m.xi.field.spec[2] * grid.kz)))
        / max(float(np.max(np.abs(m.xi.field.spec))), 1e-300)
        for m in basis.modes
    )
    checks.append(Check("generated modes divergence-free", div_err, 1e-12))
    rep3 = noise.summability_check(basis)
    rep2 = noise.summability_check(noise.build_fourier_basis(grid, 2, 2.0))
    checks.append(Check("alpha=3 summable", 0.0 if rep3.converged else 1.0, 0.0))
    checks.append(Check("alpha=2 not summable", 0.0 if not rep2.converged else 1.0, 0.0))
    p = noise.sample_path(basis, 32, 4e-3, seed=seed)
    p2 = p.refine()
    exact = np.array_equal(p2.coarsen_sums(), p.increments)
    checks.append(Check("refinement pair-sums bit-exact", 0.0 if exact else 1.0, 0.0))
    q = noise.sample_path(basis, 32, 4e-3, seed=seed)
    checks.append(
        Check(
            "same seed bit-identical",
            0.0 if np.array_equal(p.increments, q.increments) else 1.0,
            0.0,
        )
    )
    big = noise.sample_path(noise.build_fourier_basis(grid, 1, 3.0), 100_000, 1e-2, seed=seed)
    var_err = abs(float(big.increments[:, 0].var()) - 1e-2)
    checks.append(Check("increment variance = dt", var_err, 3 * 1e-2 * math.sqrt(2 / 1e5)))
    rho = abs(float(np.corrcoef(big.increments[:, 0], big.increments[:, 1])[0, 1]))
    checks.append(Check("distinct modes uncorrelated", rho, 0.02))
    hp = diag.hp_ratio_probe(basis, trials=5, seed=seed)
    finite = math.isfinite(hp["hp1_max"]) and math.isfinite(hp["hp2_max"])
    checks.append(Check("Hp ratio proxies finite", 0.0 if finite else 1.0, 0.0))
    return checks


def run_suite(name: str, n: int = 32, trials: int = 4, seed: int = 0) -> list[Check]:
    if name == "operators":
        return suite_operators(n=n, trials=trials, seed=seed)
    if name == "stepper":
        return suite_stepper(n=n, seed=seed)
    if name == "lagrangian":
        return suite_lagrangian(n=n, seed=seed)
    if name == "noise":
        return suite_noise(n=n, seed=seed)
    raise ValueError(f"unknown suite {name!r} (choose from {SUITES} or 'all')")
