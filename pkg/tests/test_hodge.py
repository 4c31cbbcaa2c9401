import numpy as np
import pytest

from akcy import calculus as ca
from akcy.fields import Metric, TwoForm
from akcy.grid import Grid4, mask_nyquist, random_bandlimited
from akcy.hodge import (Geometry, dplus_apply, dplus_solve,
                        flat_selfdual_constants, gram_matrix,
                        harmonic_selfdual_basis, kernel_singular_values,
                        ak_poisson_solve, random_compatible_gprime)
from tests.conftest import perturbed_triple


def test_flat_basis_spans_constants(flat8):
    basis = harmonic_selfdual_basis(flat8.grid, flat8.g, omega=flat8.omega)
    assert len(basis) == 3
    geom = Geometry(flat8.grid, flat8.g)
    flats = flat_selfdual_constants(flat8.grid)
    flats = [f / np.sqrt(geom.dot2(f, f)) for f in flats]
    # each flat constant lies in the span of the computed basis
    for f in flats:
        proj = sum(geom.dot2(f, b.data) * b.data for b in basis)
        assert np.sqrt(geom.dot2(proj - f, proj - f)) < 1e-10
    gram = gram_matrix(geom, [b.data for b in basis])
    assert np.max(np.abs(gram - np.eye(3))) < 1e-12
    # first element is omega's direction
    w = flat8.omega.data / np.sqrt(geom.dot2(flat8.omega.data, flat8.omega.data))
    assert np.sqrt(geom.dot2(basis.forms[0].data - w,
                             basis.forms[0].data - w)) < 1e-12


def test_perturbed_basis_near_flat(pert8):
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    geom = Geometry(pert8.grid, pert8.g)
    gram = gram_matrix(geom, [b.data for b in basis])
    assert np.max(np.abs(gram - np.eye(3))) < 1e-8
    flats = flat_selfdual_constants(pert8.grid)
    flats = [f / np.sqrt(geom.dot2(f, f)) for f in flats]
    for f in flats:
        proj = sum(geom.dot2(f, b.data) * b.data for b in basis)
        # within O(eps) of the flat span for eps = 1e-2
        assert np.sqrt(geom.dot2(proj - f, proj - f)) < 0.1
    for b in basis:
        rel = np.max(np.abs(ca.d_two(pert8.grid, b.data))) \
            / np.max(np.abs(b.data))
        assert rel < 1e-5


def test_flat_kernel_singular_values(flat8):
    svals = kernel_singular_values(flat8.grid, flat8.g, k=6)
    assert np.all(svals[:4] < 1e-10)
    assert svals[4] > 1e-3


def test_small_perturbation_kernel_values(grid8):
    triple = perturbed_triple(grid8, 1e-4, seed=2)
    svals = kernel_singular_values(grid8, triple.g, k=6)
    assert np.all(svals[:4] < 1e-10)
    assert svals[4] > 1e-3


def test_flat_constants_exactly_harmonic(flat8):
    geom = Geometry(flat8.grid, flat8.g)
    for i in range(4):
        a = np.zeros(flat8.grid.shape(1))
        a[..., i] = 1.0
        assert np.max(np.abs(dplus_apply(geom, a))) == 0.0
        assert np.max(np.abs(geom.codiff1(a))) == 0.0


def test_dplus_solve_reproduces_source(pert8, rng):
    geom = Geometry(pert8.grid, pert8.g)
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    a0 = mask_nyquist(pert8.grid, random_bandlimited(pert8.grid, rng, 2, shape=(4,)))
    zeta = dplus_apply(geom, a0)
    zeta -= sum(geom.dot2(zeta, b.data) * b.data for b in basis)
    a, _ = dplus_solve(geom, zeta, tol=1e-11)
    resid = dplus_apply(geom, a) - zeta
    assert np.sqrt(geom.dot2(resid, resid)) < 1e-8 * np.sqrt(geom.dot2(zeta, zeta))
    div = geom.codiff1(a)
    assert np.sqrt(geom.dot0(div, div)) < 1e-8
    assert np.max(np.abs(np.mean(a.reshape(-1, 4), axis=0))) < 1e-12


def test_dplus_solution_satisfies_split_system(pert8, rng):
    # d+ a = zeta encodes both P da = P zeta and da ^ Omega / Omega^2 = trace
    geom = Geometry(pert8.grid, pert8.g)
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    chi = random_bandlimited(pert8.grid, rng, 1, shape=(4, 4))
    chi = ca.proj_p(pert8.J.data, chi - np.swapaxes(chi, -1, -2))
    chi -= sum(geom.dot2(chi, b.data) * b.data for b in basis)
    a, _ = dplus_solve(geom, geom.sd(chi), tol=1e-11)
    da = ca.d_one(pert8.grid, a)
    sd = geom.sd(chi)
    trace = ca.wedge22(pert8.omega.data, sd) / pert8.vol_density
    p_target = sd - trace[..., None, None] * pert8.omega.data
    dev_p = np.max(np.abs(ca.proj_p(pert8.J.data, da) - ca.proj_p(pert8.J.data, p_target)))
    trace_da = ca.wedge22(pert8.omega.data, da) / pert8.vol_density
    assert dev_p < 1e-7
    assert np.max(np.abs(trace_da - trace)) < 1e-7


def test_ak_poisson_roundtrip(pert8, rng):
    geom = Geometry(pert8.grid, pert8.g)
    phi0 = random_bandlimited(pert8.grid, rng, max_mode=2)
    phi0 -= np.mean(phi0)
    rhs = ca.ak_laplacian_4form(pert8.grid, pert8.omega.data, pert8.J.data, phi0)
    phi, iters = ak_poisson_solve(pert8.omega.data, pert8.J.data, geom, rhs,
                                  tol=1e-12)
    assert np.max(np.abs(phi - phi0)) < 1e-9 * np.max(np.abs(phi0))
    assert iters < 100


def test_random_compatible_gprime_contract(pert8):
    gp, wp = random_compatible_gprime(pert8, np.random.default_rng(5),
                                      amplitude=0.05, max_mode=1)
    assert np.max(np.abs(ca.d_two(pert8.grid, wp.data))) < 1e-9
    assert np.max(np.abs(ca.proj_p(pert8.J.data, wp.data))) < 1e-8
    assert gp.min_eigenvalue() > 0
    assert np.max(np.abs(wp.data - pert8.omega.data)) == pytest.approx(0.05, rel=1e-6)
