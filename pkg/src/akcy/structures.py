"""Almost-Kahler structures: compatibility, polar construction, Nijenhuis.

Sign conventions (fixed once, used everywhere):

  * g(X, Y) = omega(X, JY), in components g_ij = omega_ik J_j^k;
  * lowering J with g gives J_ij = J_i^k g_kj = omega_ij;
  * the standard flat pair (standard_omega, standard_j) produces the
    Euclidean metric, and omega^2 is twice the coordinate volume form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import calculus as ca
from .errors import Degenerate, NotCompatible, NotTaming
from .fields import ACStructure, Metric, TwoForm
from .grid import Grid4, grad_all


def metric_from_pair(omega: TwoForm, J: ACStructure) -> Metric:
    """The Riemannian metric g_ij = omega_ik J_j^k of a compatible pair.

    Raises NotCompatible when the result is not symmetric (omega is not
    J-invariant) and NotTaming when it is not positive definite.
    """
    gdata = np.einsum("...ik,...jk->...ij", omega.data, J.data)
    dev = np.max(np.abs(gdata - np.swapaxes(gdata, -1, -2)))
    if dev > 1e-8:
        raise NotCompatible(f"omega(., J.) asymmetric by {dev:.3e}")
    gdata = 0.5 * (gdata + np.swapaxes(gdata, -1, -2))
    lo = float(np.min(np.linalg.eigvalsh(gdata.reshape(-1, 4, 4))))
    if lo <= 0:
        raise NotTaming(f"omega(., J.) has eigenvalue {lo:.3e} <= 0")
    return Metric(omega.grid, gdata, check_spd=False)


def compatible_j_from_metric(omega: TwoForm, h: Metric) -> ACStructure:
    """Canonical omega-compatible J from an auxiliary metric h.

    Pointwise polar decomposition: with A defined by omega(u,v) = h(Au,v),
    J = A (-A^2)^(-1/2).  For the standard pair (omega0, euclidean) this
    returns the standard J exactly.
    """
    grid = omega.grid
    det = np.linalg.det(omega.data)
    if np.min(np.abs(det)) < 1e-12:
        raise Degenerate(f"omega degenerate: min |det| = {np.min(np.abs(det)):.3e}")

    flat = (-1, 4, 4)
    w = omega.data.reshape(flat)
    evals, evecs = np.linalg.eigh(h.data.reshape(flat))
    root = np.sqrt(evals)
    r = np.einsum("xab,xb,xcb->xac", evecs, root, evecs)
    rinv = np.einsum("xab,xb,xcb->xac", evecs, 1.0 / root, evecs)

    # B = R^-1 omega R^-1 is genuinely antisymmetric; -B^2 is SPD.
    b = rinv @ w @ rinv
    m = -(b @ b)
    mvals, mvecs = np.linalg.eigh(m)
    if np.min(mvals) <= 0:
        raise Degenerate("polar factor -A^2 not positive definite")
    s = np.einsum("xab,xb,xcb->xac", mvecs, 1.0 / np.sqrt(mvals), mvecs)
    jdata = (r @ (b @ s) @ rinv).reshape(grid.shape(2))
    return ACStructure(grid, jdata)


def nijenhuis(grid: Grid4, J: ACStructure) -> np.ndarray:
    """Coordinate Nijenhuis tensor, stored as N[..., i, j, k] = N^i_{jk}."""
    j = J.data
    dj = grad_all(grid, j)  # dj[..., a, m, n] = d_a J_m^n
    n = np.einsum("...kl,...lji->...ijk", j, dj, optimize=True)
    n += np.einsum("...li,...jkl->...ijk", j, dj, optimize=True)
    n -= np.einsum("...jl,...lki->...ijk", j, dj, optimize=True)
    n -= np.einsum("...li,...kjl->...ijk", j, dj, optimize=True)
    return n


def nijenhuis_norms(grid: Grid4, n: np.ndarray, g: Metric, p: float = 4.0,
                    ginv: np.ndarray | None = None) -> dict:
    """L^1, L^p and C^0 norms of a (1,2) tensor w.r.t. g and its volume."""
    if ginv is None:
        ginv = g.inverse()
    mag = np.sqrt(np.maximum(ca.norm2_pointwise(g, n, ("u", "d", "d"), ginv=ginv), 0.0))
    vol = np.sqrt(np.linalg.det(g.data))
    return {
        "l1": ca.integrate_density(grid, mag * vol),
        "lp": ca.lp_norm(grid, mag, vol, p),
        "c0": float(np.max(mag)),
    }


@dataclass
class CompatReport:
    """Max deviations of the pointwise and differential compatibility laws."""

    j_squared: float
    d_omega: float
    metric_symmetry: float
    metric_min_eig: float
    j_invariance: float

    def max_pointwise(self) -> float:
        return max(self.j_squared, self.metric_symmetry, self.j_invariance)


def check_compatibility(omega: TwoForm, J: ACStructure) -> CompatReport:
    grid = omega.grid
    jj = np.einsum("...ik,...kj->...ij", J.data, J.data)
    j_sq = float(np.max(np.abs(jj + np.eye(4))))
    domega = float(np.max(np.abs(ca.d_two(grid, omega.data))))
    gdata = np.einsum("...ik,...jk->...ij", omega.data, J.data)
    sym = float(np.max(np.abs(gdata - np.swapaxes(gdata, -1, -2))))
    min_eig = float(np.min(np.linalg.eigvalsh(
        (0.5 * (gdata + np.swapaxes(gdata, -1, -2))).reshape(-1, 4, 4))))
    jinv = float(np.max(np.abs(2.0 * ca.proj_p(J.data, omega.data))))
    return CompatReport(j_sq, domega, sym, min_eig, jinv)


@dataclass
class AKTriple:
    """A mutually compatible (omega, J, g) on the grid."""

    omega: TwoForm
    J: ACStructure
    g: Metric
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_pair(cls, omega: TwoForm, J: ACStructure) -> "AKTriple":
        return cls(omega, J, metric_from_pair(omega, J))

    @property
    def grid(self) -> Grid4:
        return self.omega.grid

    @property
    def ginv(self) -> np.ndarray:
        if "ginv" not in self._cache:
            self._cache["ginv"] = self.g.inverse()
        return self._cache["ginv"]

    @property
    def weight(self) -> np.ndarray:
        """sqrt(det g), the Riemannian volume density (= omega^2 / 2)."""
        if "w" not in self._cache:
            self._cache["w"] = np.sqrt(np.linalg.det(self.g.data))
        return self._cache["w"]

    @property
    def vol_density(self) -> np.ndarray:
        """Density of omega^2."""
        if "vol" not in self._cache:
            self._cache["vol"] = ca.wedge22(self.omega.data, self.omega.data)
        return self._cache["vol"]

    @property
    def total_volume(self) -> float:
        return ca.integrate_density(self.grid, self.vol_density)

    def report(self) -> CompatReport:
        return check_compatibility(self.omega, self.J)

    def validate(self, pointwise_tol: float = 1e-10, domega_tol: float = 1e-8):
        rep = self.report()
        if rep.j_squared > pointwise_tol:
            raise NotCompatible(f"J^2+Id deviation {rep.j_squared:.3e}")
        if rep.j_invariance > pointwise_tol:
            raise NotCompatible(f"omega(J.,J.) deviation {rep.j_invariance:.3e}")
        if rep.d_omega > domega_tol:
            raise NotCompatible(f"d omega deviation {rep.d_omega:.3e}")
        if rep.metric_min_eig <= 0:
            raise NotTaming(f"metric min eigenvalue {rep.metric_min_eig:.3e}")
        return rep


def standard_triple(grid: Grid4) -> AKTriple:
    from .fields import standard_j, standard_omega
    return AKTriple.from_pair(standard_omega(grid), standard_j(grid))
