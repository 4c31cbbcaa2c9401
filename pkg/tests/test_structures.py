import numpy as np
import pytest

from akcy import calculus as ca
from akcy.errors import Degenerate, NotTaming
from akcy.fields import ACStructure, Metric, TwoForm, standard_j, standard_omega
from akcy.grid import Grid4
from akcy.structures import (AKTriple, check_compatibility,
                             compatible_j_from_metric, metric_from_pair,
                             nijenhuis, nijenhuis_norms, standard_triple)
from tests.conftest import perturbed_triple


def test_metric_from_pair_standard_is_euclidean(grid8):
    g = metric_from_pair(standard_omega(grid8), standard_j(grid8))
    # hand-checked 4x4 product at one point: g_ij = omega_ik J_j^k
    w = standard_omega(grid8).data[0, 0, 0, 0]
    j = standard_j(grid8).data[0, 0, 0, 0]
    byhand = np.zeros((4, 4))
    for i in range(4):
        for jj in range(4):
            byhand[i, jj] = sum(w[i, k] * j[jj, k] for k in range(4))
    assert np.array_equal(byhand, np.eye(4))
    assert np.max(np.abs(g.data - np.eye(4))) == 0.0


def test_metric_from_pair_sign_flip_not_taming(grid8):
    j = standard_j(grid8)
    neg = ACStructure(grid8, -j.data)
    with pytest.raises(NotTaming):
        metric_from_pair(standard_omega(grid8), neg)


def test_metric_from_pair_polar_input(grid8):
    triple = perturbed_triple(grid8, 5e-2, seed=4)
    dev = np.max(np.abs(triple.g.data - np.swapaxes(triple.g.data, -1, -2)))
    assert dev < 1e-12
    assert triple.g.min_eigenvalue() > 0


def test_compatible_j_flat_exact(grid8):
    j = compatible_j_from_metric(standard_omega(grid8), Metric.euclidean(grid8))
    assert np.array_equal(j.data, standard_j(grid8).data)


def test_compatible_j_square_identity(grid8):
    triple = perturbed_triple(grid8, 1e-1, seed=6)
    assert triple.J.square_deviation() < 1e-12


def test_compatible_j_degenerate_omega(grid8):
    w = np.zeros(grid8.shape(2))
    w[..., 0, 1] = 1.0
    w[..., 1, 0] = -1.0  # rank 2: degenerate as a symplectic form
    with pytest.raises(Degenerate):
        compatible_j_from_metric(TwoForm(grid8, w), Metric.euclidean(grid8))


def test_nijenhuis_constant_j_vanishes(grid8):
    n = nijenhuis(grid8, standard_j(grid8))
    assert np.max(np.abs(n)) == 0.0


def test_nijenhuis_conjugated_constant_j(grid8):
    # J conjugated by a constant invertible matrix is constant, so N = 0
    rng = np.random.default_rng(3)
    s = np.eye(4) + 0.2 * rng.standard_normal((4, 4))
    sinv = np.linalg.inv(s)
    j0 = standard_j(grid8).data[0, 0, 0, 0]
    jc = s @ j0 @ sinv
    data = np.broadcast_to(jc, grid8.shape(2)).copy()
    n = nijenhuis(grid8, ACStructure(grid8, data))
    assert np.max(np.abs(n)) == 0.0


def test_nijenhuis_epsilon_scaling(grid8):
    # halving epsilon halves the C0 norm within 20% for eps <= 1e-2
    norms = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        triple = perturbed_triple(grid8, eps, seed=9)
        n = nijenhuis(grid8, triple.J)
        norms.append(nijenhuis_norms(grid8, n, triple.g)["c0"])
    for a, b in zip(norms, norms[1:]):
        assert abs(a / b - 2.0) < 0.4


def test_check_compatibility_flat(grid8):
    rep = check_compatibility(standard_omega(grid8), standard_j(grid8))
    assert rep.j_squared < 1e-12
    assert rep.d_omega < 1e-12
    assert rep.metric_symmetry < 1e-12
    assert rep.j_invariance < 1e-12
    assert rep.metric_min_eig == pytest.approx(1.0)


def test_check_compatibility_reports_nonclosed(grid8):
    # omega + a non-closed perturbation must show up in the d-omega entry
    x = grid8.coords()
    w = standard_omega(grid8).data.copy()
    bump = 0.1 * np.sin(2 * np.pi * x[0]) * np.ones(grid8.n)
    w[..., 2, 3] += bump
    w[..., 3, 2] -= bump
    rep = check_compatibility(TwoForm(grid8, w), standard_j(grid8))
    assert rep.d_omega > 1e-2


def test_scenario_triple_within_tolerance(pert8):
    rep = pert8.validate()
    assert rep.j_squared < 1e-10
    assert rep.d_omega < 1e-8
    assert rep.j_invariance < 1e-10
    assert rep.metric_min_eig > 0


def test_aktriple_volume_and_weight(pert8):
    # omega^2 = 2 sqrt(det g) for a compatible triple
    assert np.max(np.abs(pert8.vol_density - 2.0 * pert8.weight)) < 1e-12
