import numpy as np
import pytest

from akcy import calculus as ca
from akcy.errors import InconsistentRHS
from akcy.fields import Metric, TwoForm
from akcy.grid import random_bandlimited
from akcy.hodge import Geometry, harmonic_selfdual_basis, random_compatible_gprime
from akcy.potentials import class_coefficients, decompose, potential
from tests.conftest import perturbed_triple


def kahler_omega_prime(triple, rng, amplitude=0.05):
    grid = triple.grid
    phi = random_bandlimited(grid, rng, max_mode=2)
    delta = -0.5 * ca.apply_j_d(grid, triple.J.data, phi)
    lam = amplitude / np.max(np.abs(delta))
    return TwoForm(grid, triple.omega.data + lam * delta), lam * phi


def test_identity_pair_gives_zero_potentials(pert8):
    wp = TwoForm(pert8.grid, pert8.omega.data.copy())
    for s in (0.0, 0.5, 1.0):
        phi = potential(pert8, wp, s, mode="fixed")
        assert np.max(np.abs(phi)) < 1e-12
    dec = decompose(pert8, wp, s=1.0, mode="fixed")
    assert np.max(np.abs(dec.phi)) < 1e-12
    assert np.max(np.abs(dec.a)) < 1e-10


def test_kahler_potentials_coincide(flat8, rng):
    # in the integrable case every phi_s is the Kahler potential
    wp, phi_true = kahler_omega_prime(flat8, rng)
    phis = [potential(flat8, wp, s, mode="fixed", tol=1e-12)
            for s in (0.0, 0.5, 1.0)]
    osc = np.max(phi_true) - np.min(phi_true)
    for a in range(3):
        for b in range(a + 1, 3):
            dev = np.max(np.abs(phis[a] - phis[b]))
            assert dev / osc < 1e-6, (a, b)
    # and they recover the generating potential itself
    dev = np.max(np.abs(phis[0] - (phi_true - np.mean(phi_true))))
    assert dev / osc < 1e-6


def test_kahler_one_form_vanishes(flat8, rng):
    wp, _ = kahler_omega_prime(flat8, rng)
    dec = decompose(flat8, wp, s=1.0, mode="fixed", tol=1e-11)
    geom = Geometry(flat8.grid, flat8.g)
    da = ca.d_one(flat8.grid, dec.a)
    assert np.sqrt(geom.dot2(da, da)) < 1e-8


def test_decompose_roundtrip_perturbed(pert8):
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    gp, wp = random_compatible_gprime(pert8, np.random.default_rng(8),
                                      amplitude=0.02, max_mode=1)
    geom = Geometry(pert8.grid, pert8.g)
    for s in (0.0, 1.0):
        dec = decompose(pert8, wp, s=s, mode="drifting", basis=basis, tol=1e-11)
        recon = dec.reconstruct(pert8)
        resid = np.sqrt(geom.dot2(recon - wp.data, recon - wp.data))
        assert resid < 1e-8, s
        # gauge conditions: d*_s a = 0 and plain-zero means
        osd = (1.0 - s) * pert8.omega.data + s * wp.data
        from akcy.structures import metric_from_pair
        geom_s = Geometry(pert8.grid, metric_from_pair(TwoForm(pert8.grid, osd),
                                                       pert8.J))
        div = geom_s.codiff1(dec.a)
        assert np.sqrt(geom_s.dot0(div, div)) < 1e-8
        assert np.max(np.abs(np.mean(dec.a.reshape(-1, 4), axis=0))) < 1e-12


def test_fixed_mode_rejects_class_drift(pert8):
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    wp = TwoForm(pert8.grid, pert8.omega.data + 0.05 * basis.forms[1].data)
    with pytest.raises(InconsistentRHS):
        potential(pert8, wp, 0.0, mode="fixed")
    # drifting normalization handles the same data
    phi = potential(pert8, wp, 0.0, mode="drifting")
    assert np.all(np.isfinite(phi))


def test_class_coefficients_recover_injection(pert8):
    basis = harmonic_selfdual_basis(pert8.grid, pert8.g, omega=pert8.omega)
    coeffs_in = np.array([0.0, 0.03, -0.02])
    wp = TwoForm(pert8.grid, pert8.omega.data
                 + sum(c * b.data for c, b in zip(coeffs_in, basis)))
    got = class_coefficients(pert8, wp, basis)
    assert np.max(np.abs(got - coeffs_in)) < 1e-8


def test_potential_trace_identity(pert8):
    # Lap phi_0 = 4(omega^omega'/omega^2 - 1) relates to tr_g g' - 4
    gp, wp = random_compatible_gprime(pert8, np.random.default_rng(17),
                                      amplitude=0.02, max_mode=1)
    phi0 = potential(pert8, wp, 0.0, mode="fixed", tol=1e-11)
    lap = ca.ak_laplacian_4form(pert8.grid, pert8.omega.data, pert8.J.data, phi0)
    gprime = np.einsum("...ik,...jk->...ij", wp.data, pert8.J.data)
    gprime = 0.5 * (gprime + np.swapaxes(gprime, -1, -2))
    tr = np.einsum("...ij,...ij->...", pert8.ginv, gprime)
    dev = np.max(np.abs(lap - (tr - 4.0)))
    assert dev < 1e-7
