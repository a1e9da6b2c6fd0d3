"""Noise basis construction, summability, and Brownian path reproducibility."""

import math

import numpy as np
import pytest

from stochvort import noise
from stochvort.field import ConfigError, VectorField, divergence_free_error, l2_norm
from stochvort.operators import LieOperand


def test_fourier_basis_kmax1(grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0)
    # 3 half-space wavevectors x {sin, cos} x 2 polarizations
    assert len(basis.modes) == 12
    assert all(abs(m.amplitude - 1.0) < 1e-15 for m in basis.modes)
    # spectral support covers exactly the 6 unit wavevectors
    support = set()
    for m in basis.modes:
        s = m.xi.field.spec
        for idx in np.argwhere(np.abs(s).max(axis=0) > 1e-8 * np.abs(s).max()):
            kx = idx[0] if idx[0] <= grid.n // 2 else idx[0] - grid.n
            ky = idx[1] if idx[1] <= grid.n // 2 else idx[1] - grid.n
            support.add((kx, ky, int(idx[2])))
        assert divergence_free_error(m.xi.field) <= 1e-12
        assert np.max(np.abs(m.xi.field.mean())) <= 1e-15
    # rfft half-spectrum stores kz >= 0 only: the (0,0,-1) partner is implicit,
    # so the 6 unit wavevectors show up as these 5 stored locations
    assert support == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)}


def test_amplitude_spectrum(grid):
    basis = noise.build_fourier_basis(grid, kmax=2, alpha=3.0)
    lam = {m.k_index: m.amplitude for m in basis.modes}
    assert abs(lam[(2, 0, 0)] - 2.0**-3.0) <= 1e-15
    assert abs(lam[(1, 1, 0)] - 2.0 ** (-3.0 / 2)) <= 1e-15


def test_kmax_limit(grid):
    with pytest.raises(ConfigError):
        noise.build_fourier_basis(grid, kmax=grid.n // 6 + 1, alpha=3.0)
    with pytest.raises(ConfigError):
        noise.build_fourier_basis(grid, kmax=1, alpha=-1.0)


def test_summability(grid):
    # integral test: sum |k|^(2-2a) over Z^3 converges iff 2a - 2 > 3
    assert noise.summability_check(noise.build_fourier_basis(grid, 2, 3.0)).converged
    assert not noise.summability_check(noise.build_fourier_basis(grid, 2, 2.0)).converged
    empty = noise.NoiseBasis(grid=grid, modes=[], alpha=None, kmax=None)
    rep = noise.summability_check(empty)
    assert rep.sum_lambda_k2_k2 == 0.0 and rep.converged


def test_ck0_worked_example(grid, mesh):
    X, _, _ = mesh
    lam = 0.7
    xi = LieOperand(VectorField.from_phys(grid, np.stack([0 * X, lam * np.sin(X), 0 * X])))
    assert abs(xi.c0_constant() - 96.0 * lam**2) <= 1e-9
    # doubling the amplitude quadruples the constant
    xi2 = LieOperand(VectorField.from_phys(grid, np.stack([0 * X, 2 * lam * np.sin(X), 0 * X])))
    assert abs(xi2.c0_constant() / xi.c0_constant() - 4.0) <= 1e-12
    # constant field: all derivatives vanish
    const = noise.constant_basis(grid, [0.0, 1.0, 0.0]).modes[0].xi
    assert const.c0_constant() <= 1e-20


def test_ck0_partial_sums_stabilize(grid):
    basis = noise.build_fourier_basis(grid, kmax=2, alpha=3.0)
    consts, partial = noise.ck0_constants(basis)
    assert len(consts) == len(basis.modes)
    assert all(c >= 0 for c in consts)
    assert partial[-1] >= partial[0]


def test_path_statistics(grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0)
    dt = 1e-2
    p = noise.sample_path(basis, 100_000, dt, seed=5)
    var = float(p.increments[:, 0].var())
    assert abs(var - dt) <= 3 * dt * math.sqrt(2 / 1e5)
    rho = float(np.corrcoef(p.increments[:, 0], p.increments[:, 1])[0, 1])
    assert abs(rho) <= 0.02


def test_path_determinism_and_keying(grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0)
    a = noise.sample_path(basis, 64, 1e-3, seed=9)
    b = noise.sample_path(basis, 64, 1e-3, seed=9)
    assert np.array_equal(a.increments, b.increments)
    # streams key off mode identity: shuffling the list permutes columns only
    shuffled = noise.NoiseBasis(grid=grid, modes=list(reversed(basis.modes)), alpha=3.0, kmax=1)
    c = noise.sample_path(shuffled, 64, 1e-3, seed=9)
    assert np.array_equal(c.increments[:, ::-1], a.increments)


def test_refinement_bit_exact(grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0)
    p = noise.sample_path(basis, 50, 4e-3, seed=99)
    fine = p.refine()
    assert fine.dt == p.dt / 2 and fine.nsteps == 2 * p.nsteps
    assert np.array_equal(fine.coarsen_sums(), p.increments)
    finer = fine.refine()
    assert np.array_equal(finer.coarsen_sums(), fine.increments)
    # endpoint values agree across levels
    assert np.array_equal(finer.cumulative()[::4][-1], finer.cumulative()[-1])
    # refinement is itself deterministic
    again = noise.sample_path(basis, 50, 4e-3, seed=99).refine()
    assert np.array_equal(again.increments, fine.increments)


def test_basis_export_import(tmp_path, grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0, seed=4)
    outdir = tmp_path / "basis"
    noise.export_basis(basis, str(outdir))
    back = noise.load_basis(str(outdir))
    assert len(back.modes) == len(basis.modes)
    assert back.alpha == basis.alpha and back.kmax == basis.kmax and back.seed == 4
    for a, b in zip(basis.modes, back.modes):
        assert np.array_equal(a.xi.phys, b.xi.phys)
        assert a.stream_key == b.stream_key and a.k_index == b.k_index
        assert a.amplitude == b.amplitude
    # identical paths from the reloaded basis
    pa = noise.sample_path(basis, 16, 1e-3, seed=3)
    pb = noise.sample_path(back, 16, 1e-3, seed=3)
    assert np.array_equal(pa.increments, pb.increments)


def test_aggregate(grid):
    basis = noise.build_fourier_basis(grid, kmax=1, alpha=3.0)
    coeffs = np.zeros(len(basis.modes))
    coeffs[3] = 2.5
    agg = basis.aggregate(coeffs)
    assert l2_norm(agg - VectorField.from_phys(grid, 2.5 * basis.modes[3].xi.phys)) <= 1e-14
    with pytest.raises(ValueError):
        basis.aggregate(np.zeros(3))
