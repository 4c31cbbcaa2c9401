import numpy as np
import pytest

from akcy import calculus as ca
from akcy.connection import laplacian_metric_form
from akcy.fields import Metric, standard_j, standard_omega
from akcy.grid import Grid4, random_bandlimited
from akcy.hodge import Geometry


def rand_twoform(grid, rng, max_mode=2):
    chi = random_bandlimited(grid, rng, max_mode=max_mode, shape=(4, 4))
    return chi - np.swapaxes(chi, -1, -2)


def test_wedge22_standard(grid8):
    w = standard_omega(grid8).data
    assert np.max(np.abs(ca.wedge22(w, w) - 2.0)) == 0.0
    # symmetry of the pairing
    rng = np.random.default_rng(0)
    a, b = rand_twoform(grid8, rng), rand_twoform(grid8, rng)
    assert np.max(np.abs(ca.wedge22(a, b) - ca.wedge22(b, a))) < 1e-12


def test_wedge22_matches_epsilon_contraction(grid8, rng):
    a, b = rand_twoform(grid8, rng), rand_twoform(grid8, rng)
    eps = ca.levi_civita()
    ref = 0.25 * np.einsum("ijkl,...ij,...kl->...", eps, a, b)
    assert np.max(np.abs(ca.wedge22(a, b) - ref)) < 1e-12 * np.max(np.abs(ref))


def test_hodge_star_flat_table(grid8):
    g = Metric.euclidean(grid8)
    pairs = {(0, 1): (2, 3), (0, 2): (3, 1), (0, 3): (1, 2)}
    for (i, j), (k, l) in pairs.items():
        chi = np.zeros(grid8.shape(2))
        chi[..., i, j] = 1.0
        chi[..., j, i] = -1.0
        st = ca.hodge_star2(g, chi)
        expect = np.zeros(grid8.shape(2))
        expect[..., k, l] = 1.0
        expect[..., l, k] = -1.0
        assert np.max(np.abs(st - expect)) < 1e-14, (i, j)


def test_hodge_star_involution(pert8, rng):
    chi = rand_twoform(pert8.grid, rng)
    st2 = ca.hodge_star2(pert8.g, ca.hodge_star2(pert8.g, chi))
    assert np.max(np.abs(st2 - chi)) < 1e-12 * np.max(np.abs(chi))


@pytest.mark.parametrize("scenario", ["flat", "perturbed"])
def test_selfdual_projection_identity(scenario, flat8, pert8, rng):
    # (1/2)(1+*)chi = (Omega^chi/Omega^2) Omega + P chi on an AK triple
    triple = flat8 if scenario == "flat" else pert8
    geom = Geometry(triple.grid, triple.g)
    for _ in range(5):
        chi = rand_twoform(triple.grid, rng)
        lhs = geom.sd(chi)
        ratio = ca.wedge22(triple.omega.data, chi) / triple.vol_density
        rhs = ratio[..., None, None] * triple.omega.data \
            + ca.proj_p(triple.J.data, chi)
        assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1.0, np.max(np.abs(chi)))


def test_projector_algebra(pert8, rng):
    j = pert8.J.data
    t = rng.standard_normal(pert8.grid.shape(2))
    assert np.max(np.abs(ca.proj_p(j, t) + ca.proj_q(j, t) - t)) < 1e-10
    assert np.max(np.abs(ca.proj_p(j, ca.proj_p(j, t)) - ca.proj_p(j, t))) < 1e-10
    assert np.max(np.abs(ca.proj_q(j, ca.proj_q(j, t)) - ca.proj_q(j, t))) < 1e-10
    assert np.max(np.abs(ca.proj_p(j, ca.proj_q(j, t)))) < 1e-10
    assert np.max(np.abs(ca.proj_p(j, pert8.g.data))) < 1e-10
    assert np.max(np.abs(ca.proj_p(j, pert8.omega.data))) < 1e-10
    # Q fixes J-invariant forms
    inv = ca.proj_q(j, t)
    assert np.max(np.abs(ca.proj_q(j, inv) - inv)) < 1e-10


def test_projector_selfadjoint_wrt_metric(pert8, rng):
    geom = Geometry(pert8.grid, pert8.g)
    a = rand_twoform(pert8.grid, rng)
    b = rand_twoform(pert8.grid, rng)
    lhs = geom.dot2(ca.proj_p(pert8.J.data, a), b)
    rhs = geom.dot2(a, ca.proj_p(pert8.J.data, b))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_projector_component_tensors(flat8, rng):
    from akcy.calculus import Projectors
    pr = Projectors(flat8.J)
    t = rng.standard_normal(flat8.grid.shape(2))
    via_comp = np.einsum("...ijkl,...ij->...kl", pr.p_components(), t)
    assert np.max(np.abs(via_comp - pr.apply_p(t))) < 1e-12
    sum_comp = pr.p_components() + pr.q_components()
    eye = np.einsum("ik,jl->ijkl", np.eye(4), np.eye(4))
    assert np.max(np.abs(sum_comp - eye)) < 1e-14


def test_d_squared_zero(grid8, rng):
    a = random_bandlimited(grid8, rng, max_mode=2, shape=(4,))
    dda = ca.d_two(grid8, ca.d_one(grid8, a))
    assert np.max(np.abs(dda)) < 1e-10 * max(1.0, np.max(np.abs(a)))


def test_d_of_constant_twoform(grid8):
    chi = np.zeros(grid8.shape(2))
    chi[..., 0, 2] = 1.0
    chi[..., 2, 0] = -1.0
    assert np.max(np.abs(ca.d_two(grid8, chi))) == 0.0


@pytest.mark.parametrize("scenario", ["flat", "perturbed"])
def test_codifferential_adjointness(scenario, flat8, pert8, rng):
    triple = flat8 if scenario == "flat" else pert8
    grid = triple.grid
    a = random_bandlimited(grid, rng, max_mode=2, shape=(4,))
    chi = rand_twoform(grid, rng)
    lhs = ca.l2_inner_two(grid, triple.g, ca.d_one(grid, a), chi)
    rhs = ca.l2_inner_one(grid, triple.g, a,
                          ca.codiff_two(grid, triple.g, chi))
    assert lhs == pytest.approx(rhs, rel=1e-9)
    f = random_bandlimited(grid, rng, max_mode=2)
    lhs0 = ca.l2_inner_one(grid, triple.g, ca.d_scalar(grid, f), a)
    geom = Geometry(grid, triple.g)
    rhs0 = geom.dot0(f, geom.codiff1(a))
    assert lhs0 == pytest.approx(rhs0, rel=1e-9)


def test_ak_laplacian_flat_eigenfunction(flat8):
    grid = flat8.grid
    x = grid.coords()
    phi = np.sin(2 * np.pi * x[0]) * np.ones(grid.n)
    lap = ca.ak_laplacian_4form(grid, flat8.omega.data, flat8.J.data, phi)
    assert np.max(np.abs(lap + (2 * np.pi) ** 2 * phi)) < 1e-10


def test_ak_laplacian_mean_zero(pert8, rng):
    grid = pert8.grid
    phi = random_bandlimited(grid, rng, max_mode=2)
    lap = ca.ak_laplacian_4form(grid, pert8.omega.data, pert8.J.data, phi)
    mean = ca.integrate_density(grid, lap * pert8.vol_density)
    scale = ca.integrate_density(grid, np.abs(lap) * pert8.vol_density)
    assert abs(mean) < 1e-10 * max(scale, 1.0)


def test_ak_laplacian_matches_metric_form():
    # dual-formula oracle: the 4-form identity against g^{ij} nabla_i nabla_j
    from tests.conftest import perturbed_triple
    errs = []
    for n in (8, 16):
        grid = Grid4((n,) * 4)
        triple = perturbed_triple(grid, 5e-2, seed=3)
        x = grid.coords()
        phi = np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1]) * np.ones(grid.n)
        l1 = ca.ak_laplacian_4form(grid, triple.omega.data, triple.J.data, phi)
        l2 = laplacian_metric_form(grid, triple.g, phi, ginv=triple.ginv)
        errs.append(np.max(np.abs(l1 - l2)) / np.max(np.abs(l1)))
    assert errs[0] < 1e-4
    assert errs[1] < errs[0] * 0.2  # refinement improves the agreement


def test_lp_norm_and_pointwise_norm(flat8):
    grid = flat8.grid
    f = np.full(grid.n, 2.0)
    density = flat8.vol_density
    # (int 2^4 * 2 dx)^{1/4} with unit volume
    assert ca.lp_norm(grid, f, density, 4.0) == pytest.approx((16 * 2) ** 0.25)
    j = flat8.J.data
    n2 = ca.norm2_pointwise(flat8.g, j, ("d", "u"))
    assert np.max(np.abs(n2 - 4.0)) < 1e-12  # |J|^2 = dim in the flat metric
