"""Matrix-free elliptic solves tied to the Hodge theory of the torus.

Everything here is built from three primitives: the exact-adjoint
exterior calculus, a preconditioned CG in a weighted inner product, and
constant-coefficient Fourier-symbol inverses as preconditioners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import calculus as ca
from .errors import DimensionMismatch, LinearSolveFailure
from .fields import ACStructure, Metric, TwoForm
from .grid import (Grid4, fft4, ifft4_real, grad_all, mask_nyquist,
                   solve_flat_poisson_array)
from .structures import AKTriple


def pcg(apply_a, b, dot, apply_m=None, tol=1e-10, maxiter=500, x0=None,
        project=None):
    """Preconditioned conjugate gradients in a caller-supplied inner product.

    Returns (x, iterations, relative_residual); the caller decides whether
    a non-converged result is an error.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if project is not None:
        x = project(x)
    r = b - apply_a(x)
    if project is not None:
        r = project(r)
    bnorm = np.sqrt(max(dot(b, b), 0.0))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    z = apply_m(r) if apply_m is not None else r
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = dot(r, z)
    res = 1.0
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        if project is not None:
            ap = project(ap)
        pap = dot(p, ap)
        if pap <= 0 or not np.isfinite(pap):
            return x, it, res
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = np.sqrt(max(dot(r, r), 0.0)) / bnorm
        if res < tol:
            return x, it, res
        z = apply_m(r) if apply_m is not None else r
        if project is not None:
            z = project(z)
        rz_new = dot(r, z)
        if rz_new <= 0 or not np.isfinite(rz_new) or rz == 0.0:
            return x, it, res
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, res


# ---------------------- geometry helper bundle ------------------------- #

class Geometry:
    """Cached (g, g^-1, sqrt det g) plus weighted inner products.

    The winv* maps invert the pointwise weight operators of the inner
    products; composing them with a plain-symmetric preconditioner gives
    one that is exactly self-adjoint in the weighted dot (required for CG).
    """

    def __init__(self, grid: Grid4, g: Metric):
        self.grid = grid
        self.g = g
        self.ginv = g.inverse()
        self.weight = np.sqrt(np.linalg.det(g.data))
        self.dv = grid.cell_volume

    def dot0(self, f, h) -> float:
        return float(np.sum(f * h * self.weight)) * self.dv

    def dot1(self, a, b) -> float:
        return float(np.sum(np.einsum("...ik,...i,...k->...", self.ginv, a, b)
                            * self.weight)) * self.dv

    def dot2(self, a, b) -> float:
        return 0.5 * float(np.sum(
            np.einsum("...ik,...jl,...ij,...kl->...", self.ginv, self.ginv, a, b,
                      optimize=True) * self.weight)) * self.dv

    def winv0(self, f):
        return f / self.weight

    def winv1(self, a):
        return np.einsum("...ik,...k->...i", self.g.data, a) / self.weight[..., None]

    def winv2(self, chi):
        return 2.0 * (self.g.data @ chi @ self.g.data) / self.weight[..., None, None]

    def star2(self, chi):
        return ca.hodge_star2(self.g, chi, ginv=self.ginv, weight=self.weight)

    def sd(self, chi):
        return 0.5 * (chi + self.star2(chi))

    def codiff1(self, a):
        return ca.codiff_one(self.grid, self.g, a, ginv=self.ginv, weight=self.weight)

    def codiff2(self, chi):
        return ca.codiff_two(self.grid, self.g, chi, ginv=self.ginv, weight=self.weight)


def flat_normal_inverse(grid: Grid4, sigma: float = 0.0):
    """Inverse symbol of the flat operator (1/2) d* d + d d* (+ sigma) on 1-forms."""
    ks = [np.broadcast_to(k, grid.n) for k in grid.wavenumbers()]
    k2 = sum(k * k for k in ks)
    mask = k2 > 0

    def apply(r):
        rh = fft4(r)
        kdot = sum(ks[a] * rh[..., a] for a in range(4))
        out = np.empty_like(rh)
        with np.errstate(divide="ignore", invalid="ignore"):
            for a in range(4):
                lon = ks[a] * kdot / np.where(mask, k2, 1.0)
                tra = rh[..., a] - lon
                val = tra / (0.5 * k2 + sigma) + lon / (k2 + sigma)
                if sigma == 0.0:
                    val = np.where(mask, val, 0.0)
                out[..., a] = val
        return ifft4_real(out)

    return apply


# --------------------------- Poisson solves ---------------------------- #

def ak_poisson_solve(triple_omega: np.ndarray, J: np.ndarray, geom: Geometry,
                     rhs: np.ndarray, tol: float = 1e-10, maxiter: int = 500):
    """Zero-mean phi with Lap_Omega phi = rhs, by preconditioned CG.

    The operator is the almost-Kahler Laplacian of the pair (Omega, J),
    which is self-adjoint against the Omega^2 measure.
    """
    grid = geom.grid
    rho = ca.wedge22(triple_omega, triple_omega)
    total = float(np.sum(rho))

    def project(f):
        return f - np.sum(f * rho) / total

    def apply_a(phi):
        return -ca.ak_laplacian_4form(grid, triple_omega, J, phi)

    def dot(f, h):
        return float(np.sum(f * h * rho))

    def apply_m(r):
        return -solve_flat_poisson_array(grid, r - np.mean(r)) / rho

    b = project(-rhs)
    phi, it, res = pcg(apply_a, b, dot, apply_m, tol=tol, maxiter=maxiter,
                       project=project)
    if res >= tol:
        raise LinearSolveFailure(f"ak Poisson solve stalled at rel res {res:.3e}")
    return phi - np.mean(phi), it


# ------------------------- the d+ system ------------------------------- #

def dplus_apply(geom: Geometry, a: np.ndarray) -> np.ndarray:
    """d+ a = (1/2)(1+*) d a for a 1-form a."""
    return geom.sd(ca.d_one(geom.grid, a))


def dplus_solve(geom: Geometry, zeta: np.ndarray, tol: float = 1e-10,
                maxiter: int = 500, x0=None):
    """Solve d+ a = zeta, d* a = 0, a plain-orthogonal to constant 1-forms.

    zeta must be self-dual and L2-orthogonal to the self-dual harmonic
    forms; the normal operator d*(d+ .) + d(d* .) is SPD on that gauge
    slice and is inverted by CG with the flat symbol as preconditioner.
    """
    grid = geom.grid

    def project(a):
        return a - np.mean(a.reshape(-1, 4), axis=0)

    def apply_n(a):
        chi = dplus_apply(geom, a)
        out = geom.codiff2(chi)
        out += grad_all(grid, geom.codiff1(a))
        return out

    rhs = geom.codiff2(zeta)
    m0 = flat_normal_inverse(grid)

    def m(r):
        return geom.winv1(m0(r))

    a, it, res = pcg(apply_n, project(rhs), geom.dot1, m, tol=tol,
                     maxiter=maxiter, project=project, x0=x0)
    if res >= tol:
        raise LinearSolveFailure(f"d+ system stalled at rel res {res:.3e}")
    return a, it


# ---------------------- harmonic self-dual forms ----------------------- #

@dataclass
class HarmonicBasis:
    """L2-orthonormal harmonic self-dual 2-forms for a metric (3 on T^4)."""

    metric: Metric
    forms: list
    rayleigh: list

    def __iter__(self):
        return iter(self.forms)

    def __len__(self):
        return len(self.forms)


def flat_selfdual_constants(grid: Grid4) -> list[np.ndarray]:
    """Constant basis of Lambda+ for the Euclidean metric: e12+e34 etc."""
    out = []
    for pairs in (((0, 1), (2, 3)), ((0, 2), (3, 1)), ((0, 3), (1, 2))):
        chi = np.zeros(grid.shape(2))
        for (i, j) in pairs:
            chi[..., i, j] = 1.0
            chi[..., j, i] = -1.0
        out.append(chi)
    return out


def _rayleigh_form(geom: Geometry, chi: np.ndarray) -> float:
    """<d d* chi, chi>/<chi,chi> = ||d* chi||^2 / ||chi||^2 for self-dual chi."""
    ds = geom.codiff2(chi)
    return geom.dot1(ds, ds) / geom.dot2(chi, chi)


def _orthonormalize(vecs: list, dot) -> list:
    """Modified Gram-Schmidt; keeps subspace iterates independent."""
    out = []
    for v in vecs:
        w = v.copy()
        for u in out:
            w -= dot(w, u) * u
        nrm = np.sqrt(max(dot(w, w), 0.0))
        if nrm > 1e-14:
            out.append(w / nrm)
    return out


def harmonic_selfdual_basis(grid: Grid4, g: Metric, omega: TwoForm | None = None,
                            rq_tol: float = 1e-12, gap_tol: float = 1e-6,
                            maxiter: int = 30, inner_tol: float = 1e-12,
                            seeds: list | None = None) -> HarmonicBasis:
    """Orthonormal basis of the harmonic self-dual 2-forms of g.

    Subspace inverse iteration on Pi+ d d* Pi+ (whose kernel on the
    self-dual slice is exactly the harmonic forms), seeded with the flat
    constant self-dual forms, with a fourth probe vector certifying that
    the numerical kernel dimension is 3 (else DimensionMismatch).
    """
    geom = Geometry(grid, g)
    sigma = 1.0

    # sandwiching with the self-dual projector keeps the operator
    # self-adjoint on the whole 2-form space (CG requires that); its
    # restriction to the self-dual slice is Pi+ d d* Pi+ shifted.
    def apply_shifted(chi):
        sd_chi = geom.sd(chi)
        return geom.sd(ca.d_one(grid, geom.codiff2(sd_chi))) + sigma * chi

    k2 = grid.k_squared()
    sym = 1.0 / (0.5 * k2 + sigma)

    def apply_m(chi):
        inner = ifft4_real(fft4(geom.sd(chi)) * sym[..., None, None])
        return geom.sd(geom.winv2(inner)) + (1.0 / sigma) * (chi - geom.sd(chi))

    vecs = [mask_nyquist(grid, geom.sd(c))
            for c in (seeds if seeds is not None else flat_selfdual_constants(grid))]
    if omega is not None:
        w = mask_nyquist(grid, omega.data)
        w = w / np.sqrt(geom.dot2(w, w))
    # probe vector: a non-harmonic self-dual shape, to expose the spectral gap
    x1 = grid.coords()[0]
    bump = (1.0 + np.sin(2 * np.pi * x1 / grid.periods[0]) * np.ones(grid.n))
    vecs.append(mask_nyquist(grid, geom.sd(vecs[0] * bump[..., None, None])))

    rng = np.random.default_rng(202)
    rq = [np.inf] * len(vecs)
    prev = None
    stagnant = 0
    converged = False
    for _ in range(maxiter):
        new = []
        for v in vecs:
            y, _, _ = pcg(apply_shifted, v, geom.dot2, apply_m, tol=inner_tol,
                          maxiter=200)
            new.append(mask_nyquist(grid, geom.sd(y)))
        new = _orthonormalize(new, geom.dot2)
        while len(new) < 4:
            fresh = geom.sd(rng.standard_normal(grid.shape(2)))
            fresh = mask_nyquist(grid, fresh - np.swapaxes(fresh, -1, -2))
            new = _orthonormalize(new + [fresh], geom.dot2)
        # Rayleigh-Ritz in the L2(g) inner product
        k = len(new)
        amat = np.empty((k, k))
        bmat = np.empty((k, k))
        ds = [geom.codiff2(geom.sd(v)) for v in new]
        for i in range(k):
            for j in range(i, k):
                amat[i, j] = amat[j, i] = geom.dot1(ds[i], ds[j])
                bmat[i, j] = bmat[j, i] = geom.dot2(new[i], new[j])
        evals, evecs = scipy.linalg.eigh(amat, bmat)
        vecs = [sum(evecs[i, m] * new[i] for i in range(k)) for m in range(k)]
        rq = list(evals)
        top = max(abs(rq[0]), abs(rq[1]), abs(rq[2]))
        if top < rq_tol and rq[3] > gap_tol:
            converged = True
            break
        # grid-resolution floor: eigenvalues stop improving but the gap is
        # unambiguous (kernel 6+ orders below the first nonzero eigenvalue)
        if prev is not None and top > 0.3 * prev:
            stagnant += 1
        else:
            stagnant = 0
        prev = top
        if stagnant >= 2 and rq[3] > gap_tol and top < 1e-6 * rq[3]:
            converged = True
            break
    if not converged:
        raise DimensionMismatch(
            f"self-dual harmonic kernel not 3-dimensional: rayleigh {rq}")

    basis = vecs[:3]
    if omega is not None:
        # Keep omega's direction as the first element exactly, then span the
        # complement with the two projected Ritz vectors of largest residual
        # norm (pivoting avoids normalizing cancellation noise when one Ritz
        # vector is nearly parallel to omega).
        proj = [v - geom.dot2(v, w) * w for v in vecs[:3]]
        proj.sort(key=lambda v: -geom.dot2(v, v))
        basis = [w]
        for v in proj:
            u = v.copy()
            for b in basis:
                u -= geom.dot2(u, b) * b
            nrm = np.sqrt(max(geom.dot2(u, u), 0.0))
            if nrm > 1e-8:
                basis.append(u / nrm)
            if len(basis) == 3:
                break
        if len(basis) < 3:
            raise DimensionMismatch("could not complete basis around omega")
    # deterministic orientation: maximal overlap with the flat constants
    flats = flat_selfdual_constants(grid)
    start = 1 if omega is not None else 0
    for m in range(start, 3):
        overlaps = [geom.dot2(basis[m], f) for f in flats]
        if overlaps[int(np.argmax(np.abs(overlaps)))] < 0:
            basis[m] = -basis[m]
    forms = [TwoForm(grid, 0.5 * (b - np.swapaxes(b, -1, -2))) for b in basis]
    return HarmonicBasis(metric=g, forms=forms, rayleigh=rq[:4])


def gram_matrix(geom: Geometry, forms: list) -> np.ndarray:
    n = len(forms)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = geom.dot2(forms[i], forms[j])
    return out


# ------------------- kernel of (d+, d*) on 1-forms --------------------- #

def kernel_singular_values(grid: Grid4, g: Metric, k: int = 6,
                           iters: int = 12, inner_tol: float = 5e-14) -> np.ndarray:
    """Smallest k singular values of a |-> (d+ a, d* a) in L2(g).

    Subspace inverse iteration on the normal operator; on T^4 the first
    four vanish (harmonic 1-forms, b^1 = 4).  Stops early once the Ritz
    values stabilize across rounds.
    """
    geom = Geometry(grid, g)
    sigma = 1.0

    def apply_shifted(a):
        chi = dplus_apply(geom, a)
        return geom.codiff2(chi) + grad_all(grid, geom.codiff1(a)) + sigma * a

    m0 = flat_normal_inverse(grid, sigma=sigma)

    def m(a):
        return geom.winv1(m0(a))

    rng = np.random.default_rng(1234)
    vecs = []
    for i in range(4):
        v = np.zeros(grid.shape(1))
        v[..., i] = 1.0
        vecs.append(v)
    x = grid.coords()
    for i in range(k - 4):
        v = np.zeros(grid.shape(1))
        v[..., i % 4] = np.sin(2 * np.pi * x[i % 4] / grid.periods[i % 4]) \
            * np.ones(grid.n)
        v += 0.01 * mask_nyquist(grid, rng.standard_normal(grid.shape(1)))
        vecs.append(v)

    lam = None
    for _ in range(iters):
        new = []
        for v in vecs:
            y, _, _ = pcg(apply_shifted, v, geom.dot1, m, tol=inner_tol, maxiter=600)
            new.append(mask_nyquist(grid, y))
        new = _orthonormalize(new, geom.dot1)
        nk = len(new)
        amat = np.empty((nk, nk))
        bmat = np.empty((nk, nk))
        dplus = [dplus_apply(geom, v) for v in new]
        dstar = [geom.codiff1(v) for v in new]
        for i in range(nk):
            for j in range(i, nk):
                amat[i, j] = amat[j, i] = geom.dot2(dplus[i], dplus[j]) \
                    + geom.dot0(dstar[i], dstar[j])
                bmat[i, j] = bmat[j, i] = geom.dot1(new[i], new[j])
        prev = lam
        lam, evecs = scipy.linalg.eigh(amat, bmat)
        vecs = [sum(evecs[i, mm] * new[i] for i in range(nk)) for mm in range(nk)]
        if prev is not None:
            top = max(abs(v) for v in lam[:4])
            ptop = max(abs(v) for v in prev[:4])
            gap_stable = abs(lam[4] - prev[4]) < 1e-3 * abs(lam[4])
            if gap_stable and (top < 1e-22 or top > 0.3 * ptop):
                break
    return np.sqrt(np.maximum(lam, 0.0))


# ---------------- closed J-invariant metric generator ------------------ #

def random_compatible_gprime(triple: AKTriple, rng: np.random.Generator,
                             amplitude: float = 0.1, max_mode: int = 2,
                             tol: float = 1e-11):
    """Random g' that is J-invariant with closed associated 2-form.

    Construction: omega' = omega + lam*(-(1/2) d(J dphi) + da + harmonic
    correction) with a solving the d+ system sourced by the anti-invariant
    part of d(J dphi).  The result is closed by construction and
    J-invariant up to the solve tolerance, so the covariant-derivative
    identities of the projector calculus apply to it.
    """
    from .grid import random_bandlimited

    grid = triple.grid
    geom = Geometry(grid, triple.g)
    phi = random_bandlimited(grid, rng, max_mode=max_mode)
    basis = harmonic_selfdual_basis(grid, triple.g, omega=triple.omega)
    delta = -0.5 * ca.apply_j_d(grid, triple.J.data, phi)
    # second pass re-solves against the leftover anti-invariant part, whose
    # size is already ~solver tolerance; a loose relative tol suffices there
    for pass_tol in (tol, 1e-6):
        zeta = -ca.proj_p(triple.J.data, delta)
        coeffs = [geom.dot2(zeta, b.data) for b in basis]
        zperp = zeta - sum(c * b.data for c, b in zip(coeffs, basis))
        a, _ = dplus_solve(geom, zperp, tol=pass_tol)
        delta = delta + ca.d_one(grid, a) \
            + sum(c * b.data for c, b in zip(coeffs, basis))
    lam = amplitude / max(np.max(np.abs(delta)), 1e-300)
    omega_prime = TwoForm(grid, triple.omega.data + lam * delta)
    # the closest discrete invariant form misses exact J-invariance by the
    # aliasing floor of the source, so symmetrize explicitly here instead of
    # going through the strict public constructor
    gdata = np.einsum("...ik,...jk->...ij", omega_prime.data, triple.J.data)
    gprime = Metric(grid, 0.5 * (gdata + np.swapaxes(gdata, -1, -2)))
    return gprime, omega_prime
