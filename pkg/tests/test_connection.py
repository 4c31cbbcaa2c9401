import numpy as np
import pytest

from akcy import calculus as ca
from akcy.connection import (christoffel, covariant_deriv_02, harmonicity_trace,
                             lemma32_check, nijenhuis_ak_form, riemann,
                             riemann_norm)
from akcy.errors import NotAlmostKahler
from akcy.fields import ACStructure, Metric, TwoForm, standard_j, standard_omega
from akcy.grid import Grid4, random_bandlimited
from akcy.hodge import random_compatible_gprime
from akcy.structures import AKTriple, compatible_j_from_metric, nijenhuis, standard_triple
from tests.conftest import perturbed_triple


def test_flat_connection_and_curvature(flat8):
    gamma = christoffel(flat8.grid, flat8.g, flat8.ginv)
    assert np.max(np.abs(gamma)) == 0.0
    assert riemann_norm(flat8) == (0.0, 0.0)


def test_metric_compatibility_of_connection(pert8):
    dg = covariant_deriv_02(pert8.grid, christoffel(pert8.grid, pert8.g, pert8.ginv),
                            pert8.g.data)
    assert np.max(np.abs(dg)) < 1e-9


def test_conformal_riemann_against_sympy():
    # independent symbolic oracle: build Gamma and R for e^{2u} delta with
    # sympy from the same definitions, evaluate at sample points
    import sympy as sp

    xs = sp.symbols("x0 x1 x2 x3")
    u_expr = sp.Rational(1, 10) * sp.sin(2 * sp.pi * xs[0]) * sp.cos(2 * sp.pi * xs[1])
    g_expr = sp.exp(2 * u_expr) * sp.eye(4)
    ginv_expr = g_expr.inv()
    gamma_expr = [[[
        sp.Rational(1, 2) * sum(ginv_expr[k, l] * (sp.diff(g_expr[j, l], xs[i])
                                                   + sp.diff(g_expr[i, l], xs[j])
                                                   - sp.diff(g_expr[i, j], xs[l]))
                                for l in range(4))
        for j in range(4)] for i in range(4)] for k in range(4)]
    # R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + G^i_{km}G^m_{lj} - G^i_{lm}G^m_{kj}
    def r_sym(i, j, k, l):
        expr = sp.diff(gamma_expr[i][l][j], xs[k]) - sp.diff(gamma_expr[i][k][j], xs[l])
        expr += sum(gamma_expr[i][k][m] * gamma_expr[m][l][j]
                    - gamma_expr[i][l][m] * gamma_expr[m][k][j] for m in range(4))
        return expr

    grid = Grid4((16, 16, 4, 4))
    x = grid.coords()
    u = 0.1 * np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1]) * np.ones(grid.n)
    gdata = np.exp(2 * u)[..., None, None] * np.eye(4)
    g = Metric(grid, gdata, check_spd=False)
    rm = riemann(grid, christoffel(grid, g))

    pts = [(1, 2, 0, 0), (5, 9, 1, 2), (11, 3, 3, 1)]
    comps = [(0, 1, 0, 1), (0, 2, 1, 2), (1, 3, 1, 3), (0, 1, 1, 2)]
    for pt in pts:
        subs = {xs[a]: pt[a] * grid.spacing[a] for a in range(4)}
        for (i, j, k, l) in comps:
            exact = float(r_sym(i, j, k, l).evalf(subs=subs))
            got = rm[pt][i, j, k, l]
            assert got == pytest.approx(exact, abs=5e-7), (pt, (i, j, k, l))


def test_riemann_norm_perturbed_finite(grid8):
    triple = perturbed_triple(grid8, 1e-2, seed=5)
    rm_norm, dj_norm = riemann_norm(triple)
    assert rm_norm > 0
    assert dj_norm > 0
    # the contraction inequality sup|nabla J|^2 <= C |Rm| with a finite ratio
    assert dj_norm ** 2 / rm_norm < 1e3


def test_harmonicity_flat_exact(flat8):
    assert np.max(np.abs(harmonicity_trace(flat8))) == 0.0


def test_harmonicity_refinement_order():
    sups = []
    for n in (8, 16):
        triple = perturbed_triple(Grid4((n,) * 4), 0.3, seed=7, max_mode=2)
        sups.append(np.max(np.abs(harmonicity_trace(triple))))
    order = np.log2(sups[0] / sups[1])
    assert order >= 2.0


def test_nijenhuis_forms_agree(pert8):
    n1 = nijenhuis(pert8.grid, pert8.J)
    n2 = nijenhuis_ak_form(pert8)
    assert np.max(np.abs(n1 - n2)) < 1e-6
    assert np.max(np.abs(n1)) > 1e-4  # non-integrable data


def test_nijenhuis_forms_agree_under_refinement():
    devs = []
    for n in (8, 16):
        triple = perturbed_triple(Grid4((n,) * 4), 0.3, seed=7, max_mode=2)
        devs.append(np.max(np.abs(nijenhuis(triple.grid, triple.J)
                                  - nijenhuis_ak_form(triple))))
    assert devs[1] < devs[0] * 0.25


def test_nijenhuis_ak_form_flat_zero(flat8):
    assert np.max(np.abs(nijenhuis_ak_form(flat8))) == 0.0


def test_nijenhuis_ak_form_constant_compatible_j(grid8):
    # integrable non-standard constant-coefficient compatible J
    rng = np.random.default_rng(12)
    m = rng.standard_normal((4, 4))
    h = Metric(grid8, np.broadcast_to(np.eye(4) + 0.3 * (m + m.T) / 2
                                      + 0.5 * np.eye(4), grid8.shape(2)).copy())
    omega = standard_omega(grid8)
    j = compatible_j_from_metric(omega, h)
    triple = AKTriple.from_pair(omega, j)
    assert np.max(np.abs(nijenhuis(grid8, j))) < 1e-12
    assert np.max(np.abs(nijenhuis_ak_form(triple))) < 1e-12


def test_nijenhuis_ak_form_requires_closed_omega(grid8):
    x = grid8.coords()
    w = standard_omega(grid8).data.copy()
    bump = 0.05 * np.sin(2 * np.pi * x[0]) * np.ones(grid8.n)
    w[..., 2, 3] += bump
    w[..., 3, 2] -= bump
    triple = AKTriple(TwoForm(grid8, w), standard_j(grid8), Metric.euclidean(grid8))
    with pytest.raises(NotAlmostKahler):
        nijenhuis_ak_form(triple)


# ----------------------- Lemma of section 3 ---------------------------- #

def kahler_gprime(triple, rng, amplitude=0.1):
    """Closed J-invariant g' for constant J: c*omega - lam/2 d(J dphi)."""
    grid = triple.grid
    phi = random_bandlimited(grid, rng, max_mode=2)
    delta = -0.5 * ca.apply_j_d(grid, triple.J.data, phi)
    lam = amplitude / np.max(np.abs(delta))
    wp = TwoForm(grid, triple.omega.data + lam * delta)
    gdata = np.einsum("...ik,...jk->...ij", wp.data, triple.J.data)
    return Metric(grid, 0.5 * (gdata + np.swapaxes(gdata, -1, -2))), wp


def test_lemma32_integrable_case(flat8, rng):
    gp, _ = kahler_gprime(flat8, rng)
    res = lemma32_check(flat8, gp)
    assert res.alpha_max < 1e-10
    assert res.beta_max < 1e-10
    assert res.alpha_identity_residual < 1e-10
    assert res.beta_identity_residual < 1e-10


def test_lemma32_gprime_equals_g(pert8):
    res = lemma32_check(pert8, pert8.g)
    assert res.alpha_identity_residual < 1e-7
    assert res.beta_identity_residual < 1e-7


def test_lemma32_perturbed_and_refinement():
    rng = np.random.default_rng(21)
    residuals = []
    for n in (8, 16):
        triple = perturbed_triple(Grid4((n,) * 4), 1e-2, seed=13)
        gp, _ = random_compatible_gprime(triple, np.random.default_rng(77),
                                         amplitude=0.05, max_mode=1)
        res = lemma32_check(triple, gp)
        residuals.append(max(res.alpha_identity_residual,
                             res.beta_identity_residual))
    assert residuals[0] < 1e-6
    assert residuals[1] < residuals[0]


def test_lemma32_requires_closed_form(pert8):
    # evaluating the identity on a J-invariant but non-closed g' must fail:
    # this is why the generator solves for a closed representative
    rng = np.random.default_rng(31)
    s = random_bandlimited(pert8.grid, rng, max_mode=1, shape=(4, 4))
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    gp = Metric(pert8.grid, ca.proj_q(pert8.J.data, s) + 3.0 * pert8.g.data)
    res = lemma32_check(pert8, gp)
    assert res.d_omega_prime > 1e-2
    assert res.alpha_identity_residual > 1e-3
