"""Per-step diagnostics: every a priori quantity the estimates track.

The trace bounds, the trace-form identity of the volume equation, the
oscillations of the scalar potentials, the L^p claim monitor for d a_1
plus its class term, Nijenhuis norms, and the fitted maximum-principle
constant.  All quantities are recomputed from (triple, omega', F); none
are trusted from solver internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as ca
from .fields import TwoForm
from .hodge import HarmonicBasis
from .potentials import decompose, potential
from .structures import AKTriple, metric_from_pair, nijenhuis, nijenhuis_norms


@dataclass
class DiagnosticsRecord:
    t: float
    osc_phi1: float
    osc_phi_half: float
    tr_g_gprime_min: float
    tr_g_gprime_max: float
    tr_gprime_g_min: float
    tr_gprime_g_max: float
    lower_bound_margin: float           # min tr_g g' - 4 exp(inf F / 2)
    trace_identity_residual: float      # max |tr_g g' - e^F tr_g' g|
    claim_quantity: float
    class_term_lp: float
    nij_l1: float
    nij_lp: float
    nij_c0: float
    s: np.ndarray
    c_hat: float = 0.0
    fitted_a: float = float("nan")
    exact_kahler: bool = False
    max_principle_trace: float = float("nan")
    min_eig_gprime: float = 0.0
    claim_warning: bool = False

    def finite(self) -> bool:
        vals = [self.osc_phi1, self.osc_phi_half, self.tr_g_gprime_min,
                self.tr_g_gprime_max, self.tr_gprime_g_min, self.tr_gprime_g_max,
                self.trace_identity_residual, self.claim_quantity,
                self.class_term_lp, self.nij_l1, self.nij_lp, self.nij_c0]
        return all(math.isfinite(v) for v in vals) and np.all(np.isfinite(self.s))


def oscillation(phi: np.ndarray) -> float:
    return float(np.max(phi) - np.min(phi))


def diagnostics(triple: AKTriple, omega_prime: TwoForm, f_eff: np.ndarray,
                p: float = 4.0, mode: str = "drifting",
                basis: HarmonicBasis | None = None, t: float = 1.0,
                c_hat: float = 0.0, claim_threshold: float = 1.0,
                solve_tol: float = 1e-10) -> DiagnosticsRecord:
    """Fill a DiagnosticsRecord for the state (omega', effective F at t).

    f_eff is the right-hand side the state is supposed to satisfy, i.e.
    t*F + c_t along a continuation path or the normalized F at t = 1.
    """
    grid = triple.grid
    gprime = metric_from_pair(omega_prime, triple.J)
    gpinv = np.linalg.inv(gprime.data)
    tr_ggp = np.einsum("...ij,...ij->...", triple.ginv, gprime.data)
    tr_gpg = np.einsum("...ij,...ij->...", gpinv, triple.g.data)
    expf = np.exp(f_eff)
    trace_res = float(np.max(np.abs(tr_ggp - expf * tr_gpg)))
    lower = float(np.min(tr_ggp) - 4.0 * np.exp(0.5 * np.min(f_eff)))

    dec = decompose(triple, omega_prime, s=1.0, mode=mode, basis=basis,
                    tol=solve_tol)
    phi1 = dec.phi
    phi_half = potential(triple, omega_prime, s=0.5, mode=mode, tol=solve_tol)
    osc1 = oscillation(phi1)
    osc_half = oscillation(phi_half)

    rho_w = triple.vol_density
    da1 = ca.d_one(grid, dec.a)
    claim = ca.lp_norm(grid, ca.wedge22(da1, triple.omega.data) / rho_w, rho_w, p)
    class_term = ca.lp_norm(grid, ca.wedge22(dec.harmonic_part, triple.omega.data)
                            / rho_w, rho_w, p)

    nij = nijenhuis(grid, triple.J)
    norms = nijenhuis_norms(grid, nij, triple.g, p=p, ginv=triple.ginv)

    if mode == "drifting" and dec.class_coefficients is not None:
        svec = np.asarray(dec.class_coefficients, dtype=float)
    else:
        svec = np.zeros(3)

    exact_kahler = osc1 <= 1e-12
    fitted_a = float("nan")
    mp_trace = float("nan")
    if not exact_kahler:
        fitted_a = float(np.log(np.max(tr_ggp) / np.min(tr_ggp)) / osc1)
        quantity = np.log(tr_ggp) - fitted_a * phi1
        idx = np.unravel_index(np.argmax(quantity), quantity.shape)
        mp_trace = float(tr_gpg[idx])

    return DiagnosticsRecord(
        t=t,
        osc_phi1=osc1,
        osc_phi_half=osc_half,
        tr_g_gprime_min=float(np.min(tr_ggp)),
        tr_g_gprime_max=float(np.max(tr_ggp)),
        tr_gprime_g_min=float(np.min(tr_gpg)),
        tr_gprime_g_max=float(np.max(tr_gpg)),
        lower_bound_margin=lower,
        trace_identity_residual=trace_res,
        claim_quantity=float(claim),
        class_term_lp=float(class_term),
        nij_l1=norms["l1"],
        nij_lp=norms["lp"],
        nij_c0=norms["c0"],
        s=svec,
        c_hat=c_hat,
        fitted_a=fitted_a,
        exact_kahler=exact_kahler,
        max_principle_trace=mp_trace,
        min_eig_gprime=gprime.min_eigenvalue(),
        claim_warning=bool(claim + class_term >= claim_threshold),
    )


CSV_COLUMNS = ["t", "newton_iters", "res_volume", "res_selfdual", "res_gauge",
               "min_eig_gprime", "osc_phi1", "osc_phi_half", "tr_min", "tr_max",
               "claim_quantity", "class_term_Lp", "nij_L1", "nij_Lp",
               "s0", "s1", "s2", "c_hat", "fitted_A"]


def csv_row(rec: DiagnosticsRecord, newton_iters: int, res_volume: float,
            res_selfdual: float, res_gauge: float) -> list[str]:
    vals = [rec.t, newton_iters, res_volume, res_selfdual, res_gauge,
            rec.min_eig_gprime, rec.osc_phi1, rec.osc_phi_half,
            rec.tr_g_gprime_min, rec.tr_g_gprime_max, rec.claim_quantity,
            rec.class_term_lp, rec.nij_l1, rec.nij_lp,
            rec.s[0], rec.s[1], rec.s[2], rec.c_hat, rec.fitted_a]
    out = []
    for v in vals:
        if isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        else:
            out.append(format(float(v), ".17g"))
    return out
