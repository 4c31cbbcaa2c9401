"""Continuity-method solver for the volume-form equation w'^2 = e^F w^2.

Outer march in t with the normalization constant c_t; at each step a
damped Newton iteration drives the anchored residual map

    Phi(b, s, t) = (log((w~ + sum_i s_i chi_i + db)^2 / w~^2)
                    - (t - t0) F - c_hat) * w~/2
                   + P(sum_i s_i chi_i + db)

to zero, where w~ is the previous accepted form, chi_i are harmonic
self-dual forms of the *original* metric (so the cohomology class moves
inside the fixed self-dual harmonic subspace), and c_hat is the
volume-matching constant recomputed from its defining integral at every
evaluation.  The linearization in b at the anchor is exactly d+ of w~,
which is what makes the flat Fourier symbol an effective preconditioner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import calculus as ca
from .errors import LostPositivity, NewtonDivergence, PathStalled
from .fields import TwoForm
from .grid import Grid4, fft4, ifft4_real, grad_all
from .hodge import Geometry, HarmonicBasis, harmonic_selfdual_basis
from .structures import AKTriple, metric_from_pair


def normalize_f(grid: Grid4, f_raw: np.ndarray, omega: TwoForm) -> np.ndarray:
    """F with the additive constant fixed so that int e^F w^2 = int w^2."""
    rho = ca.wedge22(omega.data, omega.data)
    vol = ca.integrate_density(grid, rho)
    c = np.log(vol / ca.integrate_density(grid, np.exp(f_raw) * rho))
    return f_raw + c


def c_of_t(grid: Grid4, f: np.ndarray, omega: TwoForm, t: float) -> float:
    """c_t = log( int w^2 / int e^{tF} w^2 )."""
    rho = ca.wedge22(omega.data, omega.data)
    vol = ca.integrate_density(grid, rho)
    return float(np.log(vol / ca.integrate_density(grid, np.exp(t * f) * rho)))


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    max_backtracks: int = 20
    dt_init: float = 0.25
    dt_min: float = 1e-4
    dt_max: float = 0.25
    p: float = 4.0
    claim_threshold: float = 1.0
    class_mode: str = "drifting"        # "drifting" (b+>1 form) or "fixed" (b-only)
    inner_tol_floor: float = 1e-12
    inner_max_iter: int = 400
    basis_rq_tol: float = 1e-12

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError("claim exponent p must be > 2")
        for name in ("newton_tol", "dt_init", "dt_min", "dt_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Problem:
    """Immutable data of one continuity run."""

    triple: AKTriple
    f: np.ndarray
    config: SolverConfig
    basis: HarmonicBasis | None         # harmonic basis of the original metric
    chi: list                           # class directions chi_1..chi_r (may be empty)
    vol0: float

    @classmethod
    def build(cls, triple: AKTriple, f: np.ndarray, config: SolverConfig):
        basis, chi = None, []
        if config.class_mode == "drifting":
            basis = harmonic_selfdual_basis(triple.grid, triple.g, omega=triple.omega,
                                            rq_tol=config.basis_rq_tol)
            chi = [b.data for b in basis.forms[1:]]
        return cls(triple=triple, f=f, config=config, basis=basis, chi=chi,
                   vol0=triple.total_volume)


@dataclass
class Anchor:
    """A solved state the Newton map is linearized around."""

    omega_tilde: np.ndarray
    t0: float
    geom: Geometry
    chi_tilde: list                     # harmonic self-dual of g~, orthogonal to w~
    w_unit: np.ndarray                  # w~ normalized in L2(g~)


@dataclass
class PhiEval:
    phi: np.ndarray                     # the residual 2-form
    c_hat: float
    omega_prime: np.ndarray
    rho_prime: np.ndarray               # density of w'^2
    log_residual: np.ndarray            # log(w'^2/w~^2) - tau F - c_hat


@dataclass
class StepResult:
    newton_iters: int
    res_phi: float
    res_volume: float
    res_selfdual: float
    res_gauge: float


@dataclass
class SolverState:
    t: float
    b: np.ndarray
    s: np.ndarray                       # cumulative class coefficients (3,)
    omega_prime: TwoForm
    c_hat: float
    residuals: StepResult


def make_anchor(problem: Problem, omega_tilde: np.ndarray, t0: float,
                prev: Anchor | None = None) -> Anchor:
    grid = problem.triple.grid
    gt = metric_from_pair(TwoForm(grid, omega_tilde), problem.triple.J)
    geom = Geometry(grid, gt)
    chi_tilde = []
    w_unit = omega_tilde / np.sqrt(geom.dot2(omega_tilde, omega_tilde))
    if problem.config.class_mode == "drifting":
        seeds = None
        if prev is not None:
            seeds = [prev.w_unit] + list(prev.chi_tilde)
        elif problem.basis is not None:
            seeds = [b.data for b in problem.basis]
        basis = harmonic_selfdual_basis(grid, gt, omega=TwoForm(grid, omega_tilde),
                                        rq_tol=problem.config.basis_rq_tol,
                                        seeds=seeds)
        chi_tilde = [b.data for b in basis.forms[1:]]
    return Anchor(omega_tilde=omega_tilde, t0=t0, geom=geom,
                  chi_tilde=chi_tilde, w_unit=w_unit)


def phi_map(problem: Problem, anchor: Anchor, b: np.ndarray, sigma: np.ndarray,
            t: float) -> PhiEval:
    """The openness residual map; raises LostPositivity off the cone."""
    grid = problem.triple.grid
    tau = t - anchor.t0
    delta = ca.d_one(grid, b)
    for si, chi in zip(sigma, problem.chi):
        delta = delta + si * chi
    wp = anchor.omega_tilde + delta
    rho_p = ca.wedge22(wp, wp)
    if np.min(rho_p) <= 0.0:
        raise LostPositivity(f"candidate w'^2 density min {np.min(rho_p):.3e} <= 0")
    rho_t = ca.wedge22(anchor.omega_tilde, anchor.omega_tilde)
    expf = np.exp(-tau * problem.f)
    c_hat = float(np.log(ca.integrate_density(grid, expf * rho_p) / problem.vol0))
    log_res = np.log(rho_p / rho_t) - tau * problem.f - c_hat
    phi = 0.5 * log_res[..., None, None] * anchor.omega_tilde \
        + ca.proj_p(problem.triple.J.data, delta)
    return PhiEval(phi=phi, c_hat=c_hat, omega_prime=wp, rho_prime=rho_p,
                   log_residual=log_res)


# ------------------------ linearization pieces ------------------------- #

_EPS = ca.levi_civita()


def _wedge_adjoint(carrier: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Adjoint of x -> wedge22(carrier, x) against plain component dot."""
    return 0.25 * np.einsum("ijkl,...ij,...->...kl", _EPS, carrier, v)


class NewtonOperator:
    """Directional derivative of Phi and its plain-l2 adjoint.

    Evaluated at a state (b, sigma, t); the unknown is u = (beta, eta) and
    the equation rows are (DPhi(u), d*~(b+beta), mean(b+beta)).
    """

    def __init__(self, problem: Problem, anchor: Anchor, ev: PhiEval, t: float):
        self.problem = problem
        self.anchor = anchor
        self.grid = problem.triple.grid
        self.t = t
        self.tau = t - anchor.t0
        self.wp = ev.omega_prime
        self.rho_p = ev.rho_prime
        self.expf = np.exp(-self.tau * problem.f)
        self.denom = float(np.sum(self.expf * self.rho_p))
        self.j = problem.triple.J.data
        self.wt = anchor.omega_tilde
        self.eta_scale = np.array([1.0 / max(float(np.sum(chi * chi)), 1e-300)
                                   for chi in problem.chi])

    # forward: u = (beta, eta) -> (2-form, scalar, vec4)
    def apply(self, beta: np.ndarray, eta: np.ndarray):
        grid = self.grid
        delta = ca.d_one(grid, beta)
        for e, chi in zip(eta, self.problem.chi):
            delta = delta + e * chi
        wedge = ca.wedge22(self.wp, delta)
        u = 2.0 * wedge / self.rho_p
        dc = 2.0 * float(np.sum(self.expf * wedge)) / self.denom
        dphi = 0.5 * (u - dc)[..., None, None] * self.wt + ca.proj_p(self.j, delta)
        gauge = self.anchor.geom.codiff1(beta)
        means = np.mean(beta.reshape(-1, 4), axis=0)
        return dphi, gauge, means

    # adjoint of apply against plain component sums
    def apply_t(self, psi: np.ndarray, q: np.ndarray, mbar: np.ndarray):
        grid = self.grid
        trace = 0.5 * np.einsum("...ij,...ij->...", self.wt, psi)
        back = 2.0 * _wedge_adjoint(self.wp, trace / self.rho_p)
        ssum = float(np.sum(trace))
        back -= (2.0 * ssum / self.denom) * _wedge_adjoint(self.wp, self.expf)
        back += 0.5 * (psi - np.einsum("...ki,...lj,...kl->...ij", self.j, self.j, psi,
                                       optimize=True))
        # delta^T: beta part via d^T, eta part via plain pairing with chi
        beta = -2.0 * np.einsum("...iij->...j", grad_all(grid, back))
        eta = np.array([float(np.sum(chi * back)) for chi in self.problem.chi])
        # gauge row adjoint: <codiff1 beta, q> = <beta, w g^{ik} d_i (q/w)>
        gq = self.anchor.geom
        grads = grad_all(grid, q / gq.weight)
        beta += gq.weight[..., None] * np.einsum("...ik,...i->...k", gq.ginv, grads)
        beta += mbar / self.grid.npoints
        return beta, eta

    def precondition(self, beta: np.ndarray, eta: np.ndarray):
        grid = self.grid
        k2 = grid.k_squared()
        bh = fft4(beta)
        sym = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        out = ifft4_real(bh * sym[..., None])
        mean = np.mean(beta.reshape(-1, 4), axis=0)
        out += mean * grid.npoints
        return out, eta * self.eta_scale


def _plaindot(u, v) -> float:
    return float(np.sum(u[0] * v[0]) + np.sum(u[1] * v[1]))


def gauss_newton_step(problem: Problem, anchor: Anchor, ev: PhiEval,
                      b: np.ndarray, sigma: np.ndarray, t: float,
                      inner_tol: float, inner_max: int):
    """One least-squares Newton step via CGNR on the linearized system."""
    op = NewtonOperator(problem, anchor, ev, t)
    grid = problem.triple.grid
    r_phi = -ev.phi
    r_gauge = -anchor.geom.codiff1(b)
    r_mean = -np.mean(b.reshape(-1, 4), axis=0)
    rhs = op.apply_t(r_phi, r_gauge, r_mean)

    def apply_n(u):
        f1, f2, f3 = op.apply(u[0], u[1])
        return op.apply_t(f1, f2, f3)

    x = (np.zeros(grid.shape(1)), np.zeros(len(problem.chi)))
    r = (rhs[0] - 0.0, rhs[1] - 0.0)
    z = op.precondition(*r)
    p = (z[0].copy(), z[1].copy())
    rz = _plaindot(r, z)
    bnorm = np.sqrt(max(_plaindot(rhs, rhs), 1e-300))
    res = 1.0
    for it in range(1, inner_max + 1):
        ap = apply_n(p)
        denom = _plaindot(p, ap)
        if denom <= 0:
            break
        alpha = rz / denom
        x = (x[0] + alpha * p[0], x[1] + alpha * p[1])
        r = (r[0] - alpha * ap[0], r[1] - alpha * ap[1])
        res = np.sqrt(max(_plaindot(r, r), 0.0)) / bnorm
        if res < inner_tol:
            break
        z = op.precondition(*r)
        rz_new = _plaindot(r, z)
        p = (z[0] + (rz_new / rz) * p[0], z[1] + (rz_new / rz) * p[1])
        rz = rz_new
    return x


def _residual_norms(problem: Problem, anchor: Anchor, ev: PhiEval,
                    b: np.ndarray) -> StepResult:
    geom = anchor.geom
    nphi = np.sqrt(max(geom.dot2(ev.phi, ev.phi), 0.0))
    scale = np.sqrt(geom.dot2(anchor.omega_tilde, anchor.omega_tilde))
    res_vol = float(np.max(np.abs(np.expm1(ev.log_residual))))
    pwp = ca.proj_p(problem.triple.J.data, ev.omega_prime)
    res_sd = float(np.max(np.abs(pwp)))
    dg = geom.codiff1(b)
    res_gauge = float(np.sqrt(max(geom.dot0(dg, dg), 0.0) / problem.vol0))
    return StepResult(newton_iters=0, res_phi=nphi / scale, res_volume=res_vol,
                      res_selfdual=res_sd, res_gauge=res_gauge)


def newton_solve_at_t(problem: Problem, anchor: Anchor, t: float,
                      b0: np.ndarray | None = None,
                      sigma0: np.ndarray | None = None):
    """Damped Newton on (Phi = 0, gauge) with unknowns (b, sigma).

    Returns (b, sigma, PhiEval, StepResult); raises NewtonDivergence or
    LostPositivity per the step-control contract.
    """
    cfg = problem.config
    grid = problem.triple.grid
    b = np.zeros(grid.shape(1)) if b0 is None else b0.copy()
    sigma = np.zeros(len(problem.chi)) if sigma0 is None else sigma0.copy()
    ev = phi_map(problem, anchor, b, sigma, t)   # LostPositivity propagates
    norms = _residual_norms(problem, anchor, ev, b)
    best = max(norms.res_phi, norms.res_gauge)
    for it in range(cfg.newton_max_iter + 1):
        if norms.res_phi < cfg.newton_tol and norms.res_gauge < cfg.newton_tol \
                and norms.res_volume < 10.0 * cfg.newton_tol:
            norms.newton_iters = it
            return b, sigma, ev, norms
        if it == cfg.newton_max_iter:
            break
        inner_tol = max(cfg.inner_tol_floor, min(1e-4, 1e-3 * best))
        beta, eta = gauss_newton_step(problem, anchor, ev, b, sigma, t,
                                      inner_tol, cfg.inner_max_iter)
        lam, accepted = 1.0, False
        for _ in range(cfg.max_backtracks):
            try:
                b_new = b + lam * beta
                sigma_new = sigma + lam * eta
                ev_new = phi_map(problem, anchor, b_new, sigma_new, t)
            except LostPositivity:
                lam *= 0.5
                continue
            norms_new = _residual_norms(problem, anchor, ev_new, b_new)
            cand = max(norms_new.res_phi, norms_new.res_gauge)
            if cand < best * (1.0 - 1e-4 * lam) or cand < cfg.newton_tol:
                b, sigma, ev, norms, best = b_new, sigma_new, ev_new, norms_new, cand
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise NewtonDivergence(
                f"no descent at t={t:.6f}: residual {best:.3e}")
    raise NewtonDivergence(
        f"{cfg.newton_max_iter} iterations at t={t:.6f}, residual {best:.3e}")


def class_vector(problem: Problem, omega_prime: np.ndarray) -> np.ndarray:
    """Cumulative class coefficients of [w' - w] in the original basis."""
    if problem.basis is None:
        return np.zeros(3)
    grid = problem.triple.grid
    diff = omega_prime - problem.triple.omega.data
    return np.array([ca.integrate_density(grid, ca.wedge22(diff, bb.data))
                     for bb in problem.basis])


def pairing_matrix(problem: Problem, anchor: Anchor) -> np.ndarray:
    """int chi_j ^ chi~_i over the class directions (invertible near anchors)."""
    grid = problem.triple.grid
    r = len(problem.chi)
    out = np.empty((r, r))
    for i, ct in enumerate(anchor.chi_tilde):
        for j, cj in enumerate(problem.chi):
            out[i, j] = ca.integrate_density(grid, ca.wedge22(cj, ct))
    return out


@dataclass
class PathResult:
    state: SolverState
    records: list
    newton_history: list = field(default_factory=list)
    wallclock: float = 0.0


def continuity_path(problem: Problem, diagnostics_fn=None,
                    initial_b: np.ndarray | None = None) -> PathResult:
    """March t: 0 -> 1 with adaptive steps, re-anchoring at each success.

    diagnostics_fn(state, problem, t) -> record is called per accepted
    step; records are returned in order.  initial_b seeds the very first
    Newton solve (used by the uniqueness harness).
    """
    cfg = problem.config
    grid = problem.triple.grid
    start = time.perf_counter()
    records, history = [], []

    t = 0.0
    anchor = make_anchor(problem, problem.triple.omega.data.copy(), 0.0)
    state = SolverState(
        t=0.0, b=np.zeros(grid.shape(1)), s=np.zeros(3),
        omega_prime=TwoForm(grid, problem.triple.omega.data.copy()),
        c_hat=0.0,
        residuals=StepResult(0, 0.0, 0.0, 0.0, 0.0))

    if float(np.max(np.abs(problem.f))) < 1e-14:
        state.t = 1.0
        if diagnostics_fn is not None:
            records.append(diagnostics_fn(state, problem, 1.0))
        return PathResult(state=state, records=records,
                          wallclock=time.perf_counter() - start)

    dt = cfg.dt_init
    clean = 0
    b_seed = initial_b
    while t < 1.0 - 1e-14:
        t_try = min(1.0, t + dt)
        try:
            b, sigma, ev, norms = newton_solve_at_t(problem, anchor, t_try,
                                                    b0=b_seed)
        except (NewtonDivergence, LostPositivity) as err:
            dt *= 0.5
            clean = 0
            history.append((t_try, f"step rejected: {err}"))
            if dt < cfg.dt_min:
                raise PathStalled(
                    f"dt underflow at t={t:.6f}: {err}") from err
            continue
        b_seed = None
        t = t_try
        # renormalize total volume before re-anchoring (kills drift)
        wp = ev.omega_prime
        vol = ca.integrate_density(grid, ca.wedge22(wp, wp))
        wp = wp * np.sqrt(problem.vol0 / vol)
        state = SolverState(
            t=t, b=b, s=class_vector(problem, wp),
            omega_prime=TwoForm(grid, wp), c_hat=ev.c_hat, residuals=norms)
        history.append((t, f"accepted in {norms.newton_iters} iterations"))
        if diagnostics_fn is not None:
            records.append(diagnostics_fn(state, problem, t))
        if t >= 1.0 - 1e-14:
            break
        anchor = make_anchor(problem, wp, t, prev=anchor)
        clean += 1
        if clean >= 2:
            dt = min(dt * 2.0, cfg.dt_max)
            clean = 0
        dt = min(dt, cfg.dt_max)
    return PathResult(state=state, records=records, newton_history=history,
                      wallclock=time.perf_counter() - start)


def uniqueness_test(triple: AKTriple, f: np.ndarray, config: SolverConfig,
                    seeds: tuple[int, int], diagnostics_fn=None):
    """Two full runs from distinct Newton seeds; returns the comparison.

    Verifies the uniqueness mechanism directly: for the difference delta,
    both (w1 + w2) ^ delta and P delta must be small.
    """
    from .grid import random_bandlimited
    problem = Problem.build(triple, f, config)
    grid = triple.grid
    finals = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        pert = 1e-3 * random_bandlimited(grid, rng, max_mode=2, shape=(4,))
        pert -= np.mean(pert.reshape(-1, 4), axis=0)
        res = continuity_path(problem, diagnostics_fn=diagnostics_fn,
                              initial_b=pert)
        finals.append(res)
    w1 = finals[0].state.omega_prime.data
    w2 = finals[1].state.omega_prime.data
    delta = w1 - w2
    geom = Geometry(grid, triple.g)
    l2 = np.sqrt(max(geom.dot2(delta, delta), 0.0))
    wedge_mech = ca.lp_norm(grid, ca.wedge22(w1 + w2, delta)
                            / triple.vol_density, triple.vol_density, 2.0)
    p_mech = float(np.max(np.abs(ca.proj_p(triple.J.data, delta))))
    s_diff = float(np.max(np.abs(finals[0].state.s - finals[1].state.s)))
    return {
        "l2_difference": float(l2),
        "wedge_mechanism": float(wedge_mech),
        "p_mechanism": p_mech,
        "class_difference": s_diff,
        "runs": finals,
    }
