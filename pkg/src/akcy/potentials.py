"""Scalar potentials of an almost-Kahler pair and the 1-form completion.

For cohomologous forms, phi_s interpolates between the trace-type
potentials at s = 0 and s = 1; a gauge-fixed 1-form a_s then reproduces
omega' exactly from (phi_s, a_s) and the class data.  The drifting-class
variant subtracts the measure-weighted mean of the source instead of the
unit constant, which is what a class moving inside the self-dual
harmonic space requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as ca
from .errors import InconsistentRHS
from .fields import TwoForm
from .grid import Grid4, fft4, grad_all, ifft4_real
from .hodge import Geometry, HarmonicBasis, ak_poisson_solve, pcg
from .grid import solve_flat_poisson_array
from .structures import AKTriple, metric_from_pair


def omega_s(triple: AKTriple, omega_prime: TwoForm, s: float) -> TwoForm:
    return TwoForm(triple.grid, (1.0 - s) * triple.omega.data + s * omega_prime.data)


def potential_source(triple: AKTriple, omega_prime: TwoForm, s: float) -> np.ndarray:
    """4 * [(1-2s) w^w' + s w'^2 - (1-s) w^2] / Omega_s^2, the Laplacian source."""
    w, wp = triple.omega.data, omega_prime.data
    rhs4 = (1.0 - 2.0 * s) * ca.wedge22(w, wp) + s * ca.wedge22(wp, wp) \
        - (1.0 - s) * ca.wedge22(w, w)
    os = (1.0 - s) * w + s * wp
    return 4.0 * rhs4 / ca.wedge22(os, os)


def potential(triple: AKTriple, omega_prime: TwoForm, s: float,
              mode: str = "fixed", tol: float = 1e-10, maxiter: int = 500,
              mean_tol: float = 1e-8) -> np.ndarray:
    """Zero-mean phi_s with Lap_{Omega_s} phi_s = the defining source.

    mode="fixed" keeps the cohomologous normalization and raises
    InconsistentRHS when the source fails the solvability condition;
    mode="drifting" subtracts the Omega_s-weighted mean (class moves in
    the harmonic self-dual space).
    """
    grid = triple.grid
    osd = (1.0 - s) * triple.omega.data + s * omega_prime.data
    rho = ca.wedge22(osd, osd)
    if np.min(rho) <= 0:
        raise InconsistentRHS(f"Omega_{s} not positive (min density {np.min(rho):.3e})")
    f = potential_source(triple, omega_prime, s)
    wmean = float(np.sum(f * rho) / np.sum(rho))
    if mode == "fixed":
        scale = float(np.sqrt(np.sum(f * f * rho) / np.sum(rho)))
        if abs(wmean) > mean_tol * max(scale, 1e-14):
            raise InconsistentRHS(
                f"source mean {wmean:.3e} vs scale {scale:.3e}: normalization violated")
        f = f - wmean
    elif mode == "drifting":
        f = f - wmean
    else:
        raise ValueError(f"unknown mode {mode!r}")
    geom = Geometry(grid, metric_from_pair(TwoForm(grid, osd), triple.J))
    phi, _ = ak_poisson_solve(osd, triple.J.data, geom, f, tol=tol, maxiter=maxiter)
    return phi - np.mean(phi)


def flat_coexact_potential(grid: Grid4, rho: np.ndarray) -> np.ndarray:
    """alpha with d alpha = rho for an exact 2-form rho (flat Hodge theory)."""
    k2 = grid.k_squared()
    sym = np.where(k2 > 0, k2, 1.0)
    gh = fft4(rho) / sym[..., None, None]
    gh[k2 == 0] = 0.0
    green = ifft4_real(gh)              # (-Lap)^-1 rho, componentwise
    return -np.einsum("...iij->...j", grad_all(grid, green))


def oneform_completion(geom: Geometry, rho: np.ndarray, tol: float = 1e-10,
                       maxiter: int = 500) -> np.ndarray:
    """a with d a = rho, d* a = 0 (geom metric), zero component means."""
    grid = geom.grid
    alpha = flat_coexact_potential(grid, rho)
    alpha -= np.mean(alpha.reshape(-1, 4), axis=0)

    def apply_l(psi):
        return geom.codiff1(grad_all(grid, psi))

    def project(f):
        return f - np.sum(f * geom.weight) / np.sum(geom.weight)

    def dot(f, h):
        return float(np.sum(f * h * geom.weight))

    def apply_m(r):
        return -solve_flat_poisson_array(grid, r - np.mean(r)) / geom.weight

    rhs = project(geom.codiff1(alpha))
    psi, _, res = pcg(apply_l, rhs, dot, apply_m, tol=tol, maxiter=maxiter,
                      project=project)
    a = alpha - grad_all(grid, psi)
    return a - np.mean(a.reshape(-1, 4), axis=0)


@dataclass
class Decomposition:
    s: float
    phi: np.ndarray
    a: np.ndarray
    harmonic_part: np.ndarray
    class_coefficients: np.ndarray | None

    def reconstruct(self, triple: AKTriple) -> np.ndarray:
        grid = triple.grid
        return triple.omega.data + self.harmonic_part \
            - 0.5 * ca.apply_j_d(grid, triple.J.data, self.phi) \
            + ca.d_one(grid, self.a)


def class_coefficients(triple: AKTriple, omega_prime: TwoForm,
                       basis: HarmonicBasis) -> np.ndarray:
    """Coefficients of [omega' - omega] in the orthonormal harmonic basis.

    Uses the intersection pairing, which only sees the cohomology class.
    """
    grid = triple.grid
    diff = omega_prime.data - triple.omega.data
    return np.array([ca.integrate_density(grid, ca.wedge22(diff, b.data))
                     for b in basis])


def decompose(triple: AKTriple, omega_prime: TwoForm, s: float,
              mode: str = "fixed", basis: HarmonicBasis | None = None,
              tol: float = 1e-10) -> Decomposition:
    """Split omega' = omega + (class part) - (1/2) d(J dphi_s) + d a_s.

    In fixed mode the class part is zero (cohomologous forms); in
    drifting mode it is the harmonic projection of omega' - omega onto
    the self-dual harmonic basis of triple.g.
    """
    grid = triple.grid
    if mode == "drifting":
        if basis is None:
            from .hodge import harmonic_selfdual_basis
            basis = harmonic_selfdual_basis(grid, triple.g, omega=triple.omega)
        coeffs = class_coefficients(triple, omega_prime, basis)
        harmonic_part = sum(c * b.data for c, b in zip(coeffs, basis))
    else:
        coeffs = None
        harmonic_part = np.zeros(grid.shape(2))

    phi = potential(triple, omega_prime, s, mode=mode, tol=tol)
    rho = omega_prime.data - triple.omega.data - harmonic_part \
        + 0.5 * ca.apply_j_d(grid, triple.J.data, phi)
    osd = (1.0 - s) * triple.omega.data + s * omega_prime.data
    geom = Geometry(grid, metric_from_pair(TwoForm(grid, osd), triple.J))
    a = oneform_completion(geom, rho, tol=tol)
    return Decomposition(s=s, phi=phi, a=a, harmonic_part=harmonic_part,
                         class_coefficients=coeffs)
