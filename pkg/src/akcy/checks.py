"""Property suites behind `akcy check`: every module invariant, one line each.

These mirror the pytest suite but run at the configured grid and seed,
aggregate into a RunReport, and never raise on failures (they report).
"""

from __future__ import annotations

import numpy as np

from . import calculus as ca
from .connection import harmonicity_trace, lemma32_check, nijenhuis_ak_form
from .fields import Metric, TwoForm
from .grid import Grid4, deriv, random_bandlimited, solve_flat_poisson_array
from .hodge import (Geometry, dplus_apply, gram_matrix, harmonic_selfdual_basis,
                    kernel_singular_values, random_compatible_gprime)
from .potentials import decompose
from .reports import RunReport
from .scenarios import RunConfig, build_scenario
from .solver import Problem, SolverConfig, make_anchor, phi_map
from .structures import check_compatibility, nijenhuis


def run_property_suites(cfg: RunConfig, report: RunReport) -> RunReport:
    grid = cfg.grid()
    rng = np.random.default_rng(cfg.seed)
    triple, fs = build_scenario(cfg)
    geom = Geometry(grid, triple.g)
    j = triple.J.data

    # -------- field-core --------
    x = grid.coords()
    f = np.sin(2 * np.pi * x[0] / grid.periods[0]) * np.ones(grid.n)
    dconst = float(np.max(np.abs(deriv(grid, np.ones(grid.n), 0))))
    report.add_criterion("fieldcore.deriv_constant_zero", dconst < 1e-14,
                         dconst, 1e-14)
    k1 = 2 * np.pi / grid.periods[0]
    derr = float(np.max(np.abs(deriv(grid, f, 0)
                               - k1 * np.cos(k1 * x[0]) * np.ones(grid.n))))
    report.add_criterion("fieldcore.deriv_eigenfunction", derr < 1e-12, derr, 1e-12)
    a = random_bandlimited(grid, rng, max_mode=2)
    comm = float(np.max(np.abs(deriv(grid, deriv(grid, a, 0), 1)
                               - deriv(grid, deriv(grid, a, 1), 0))))
    scale = max(np.max(np.abs(a)), 1.0)
    report.add_criterion("fieldcore.partials_commute", comm < 1e-10 * scale,
                         comm, 1e-10)
    b = random_bandlimited(grid, rng, max_mode=2)
    ibp = abs(float(np.mean(deriv(grid, a, 2) * b + a * deriv(grid, b, 2))))
    report.add_criterion("fieldcore.integration_by_parts", ibp < 1e-12, ibp, 1e-12)
    rhs = random_bandlimited(grid, rng, max_mode=2)
    rhs -= np.mean(rhs)
    u = solve_flat_poisson_array(grid, rhs)
    from .grid import flat_laplacian
    rt = float(np.max(np.abs(flat_laplacian(grid, u) - rhs)))
    report.add_criterion("fieldcore.poisson_roundtrip", rt < 1e-10, rt, 1e-10)

    # -------- ak-geometry: pointwise algebra --------
    rep = check_compatibility(triple.omega, triple.J)
    report.add_criterion("akgeom.j_squared", rep.j_squared < 1e-10,
                         rep.j_squared, 1e-10)
    report.add_criterion("akgeom.d_omega", rep.d_omega < 1e-8, rep.d_omega, 1e-8)
    report.add_criterion("akgeom.metric_positive", rep.metric_min_eig > 0,
                         rep.metric_min_eig, 0.0)
    report.add_criterion("akgeom.omega_j_invariant", rep.j_invariance < 1e-10,
                         rep.j_invariance, 1e-10)
    t = rng.standard_normal(grid.shape(2))
    pq = float(np.max(np.abs(ca.proj_p(j, t) + ca.proj_q(j, t) - t)))
    report.add_criterion("akgeom.p_plus_q_identity", pq < 1e-10, pq, 1e-10)
    pp = float(np.max(np.abs(ca.proj_p(j, ca.proj_p(j, t)) - ca.proj_p(j, t))))
    report.add_criterion("akgeom.p_idempotent", pp < 1e-10, pp, 1e-10)
    pqz = float(np.max(np.abs(ca.proj_p(j, ca.proj_q(j, t)))))
    report.add_criterion("akgeom.pq_zero", pqz < 1e-10, pqz, 1e-10)
    pg = float(np.max(np.abs(ca.proj_p(j, triple.g.data))))
    report.add_criterion("akgeom.p_kills_metric", pg < 1e-10, pg, 1e-10)
    pw = float(np.max(np.abs(ca.proj_p(j, triple.omega.data))))
    report.add_criterion("akgeom.p_kills_omega", pw < 1e-10, pw, 1e-10)

    chi = rng.standard_normal(grid.shape(2))
    chi -= np.swapaxes(chi, -1, -2)
    star2 = geom.star2(geom.star2(chi))
    report.add_criterion("akgeom.star_involution",
                         float(np.max(np.abs(star2 - chi))) < 1e-10 * np.max(np.abs(chi)),
                         float(np.max(np.abs(star2 - chi))), 1e-10)
    lhs = geom.sd(chi)
    ratio = ca.wedge22(triple.omega.data, chi) / triple.vol_density
    rhs2 = ratio[..., None, None] * triple.omega.data + ca.proj_p(j, chi)
    hodge_dev = float(np.max(np.abs(lhs - rhs2)))
    report.add_criterion("akgeom.selfdual_projection_identity",
                         hodge_dev < 1e-9 * max(np.max(np.abs(chi)), 1.0),
                         hodge_dev, 1e-9)

    one = random_bandlimited(grid, rng, max_mode=2, shape=(4,))
    dd = float(np.max(np.abs(ca.d_two(grid, ca.d_one(grid, one)))))
    report.add_criterion("akgeom.d_squared_zero", dd < 1e-10 * np.max(np.abs(one)),
                         dd, 1e-10)
    da = ca.d_one(grid, one)
    adj = abs(ca.l2_inner_two(grid, triple.g, da, chi)
              - ca.l2_inner_one(grid, triple.g, one, geom.codiff2(chi)))
    rel = adj / max(abs(ca.l2_inner_two(grid, triple.g, da, chi)), 1e-30)
    report.add_criterion("akgeom.codiff_adjointness", rel < 1e-9, rel, 1e-9)

    # -------- ak-geometry: differential identities --------
    tr = harmonicity_trace(triple)
    htr = float(np.max(np.abs(tr)))
    report.add_criterion("akgeom.harmonicity_trace", htr < 1e-6, htr, 1e-6)
    n1 = nijenhuis(grid, triple.J)
    n2 = nijenhuis_ak_form(triple)
    ndev = float(np.max(np.abs(n1 - n2)))
    report.add_criterion("akgeom.nijenhuis_equivalence", ndev < 1e-6, ndev, 1e-6)
    gp, _ = random_compatible_gprime(triple, rng, amplitude=0.05,
                                     max_mode=max(1, grid.n[0] // 8))
    lem = lemma32_check(triple, gp)
    report.add_criterion("akgeom.lemma_alpha_identity",
                         lem.alpha_identity_residual < 1e-6,
                         lem.alpha_identity_residual, 1e-6)
    report.add_criterion("akgeom.lemma_beta_identity",
                         lem.beta_identity_residual < 1e-6,
                         lem.beta_identity_residual, 1e-6)

    basis = harmonic_selfdual_basis(grid, triple.g, omega=triple.omega)
    gram = np.max(np.abs(gram_matrix(geom, [b.data for b in basis]) - np.eye(3)))
    report.add_criterion("akgeom.harmonic_basis_gram", gram < 1e-8, gram, 1e-8)
    dchi = max(np.sqrt(geom.dot1(geom.codiff2(b.data), geom.codiff2(b.data)))
               / np.sqrt(geom.dot2(b.data, b.data)) for b in basis)
    report.add_criterion("akgeom.harmonic_basis_closed", dchi < 1e-5, dchi, 1e-5)
    svals = kernel_singular_values(grid, triple.g, k=6)
    report.add_criterion("akgeom.kernel_dim_four",
                         bool(svals[3] < 1e-10 and svals[4] > 1e-3),
                         list(svals), "s4<1e-10<1e-3<s5")

    # -------- cy-solver --------
    f = fs.data
    cfg_solver = SolverConfig(class_mode=cfg.solver.class_mode,
                              newton_tol=cfg.solver.newton_tol)
    problem = Problem.build(triple, f, cfg_solver)
    anchor = make_anchor(problem, triple.omega.data.copy(), 0.0)
    nsig = len(problem.chi)
    ev0 = phi_map(problem, anchor, np.zeros(grid.shape(1)), np.zeros(nsig), 0.0)
    pz = float(np.max(np.abs(ev0.phi)))
    report.add_criterion("solver.phi_zero_at_anchor", pz < 1e-12, pz, 1e-12)
    errs = []
    for _ in range(3):
        beta = random_bandlimited(grid, rng, max_mode=2, shape=(4,))
        h = 1e-6
        evp = phi_map(problem, anchor, h * beta, np.zeros(nsig), 0.0)
        evm = phi_map(problem, anchor, -h * beta, np.zeros(nsig), 0.0)
        fd = (evp.phi - evm.phi) / (2 * h)
        dp = dplus_apply(geom, beta)
        errs.append(float(np.max(np.abs(fd - dp)) / np.max(np.abs(dp))))
    report.add_criterion("solver.anchor_linearization_dplus",
                         max(errs) < 1e-6, max(errs), 1e-6)
    gp2, wp2 = random_compatible_gprime(triple, rng, amplitude=0.02,
                                        max_mode=max(1, grid.n[0] // 8))
    dec = decompose(triple, wp2, s=0.0, mode="drifting", basis=basis)
    recon = dec.reconstruct(triple)
    rdev = np.sqrt(geom.dot2(recon - wp2.data, recon - wp2.data))
    report.add_criterion("solver.decompose_roundtrip", rdev < 1e-8, float(rdev), 1e-8)

    # -------- io --------
    import tempfile
    from .io import dump_field, load_field
    with tempfile.TemporaryDirectory() as td:
        p = f"{td}/field.akf"
        dump_field(triple.omega, p)
        back = load_field(p, grid=grid)
        iodev = float(np.max(np.abs(back.data - triple.omega.data)))
    report.add_criterion("io.dump_roundtrip", iodev == 0.0, iodev, 0.0)
    return report
