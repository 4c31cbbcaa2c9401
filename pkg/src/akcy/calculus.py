"""Pointwise tensor algebra and exterior calculus on the 4-torus.

Orientation is dx^1^dx^2^dx^3^dx^4; a 4-form is stored as its single
scalar density with respect to that coordinate volume element.  The
codifferentials are exact discrete adjoints of d: the spectral partials
are anti-self-adjoint on the grid, so adjointness identities hold to
rounding, not just to discretization error.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .errors import NonPositiveDensity
from .fields import ACStructure, Metric, ScalarField, TwoForm
from .grid import Grid4, deriv, fft4, grad_all

_EPS4 = np.zeros((4, 4, 4, 4))
for _p in permutations(range(4)):
    _inv = sum(1 for a in range(4) for b in range(a + 1, 4) if _p[a] > _p[b])
    _EPS4[_p] = -1.0 if _inv % 2 else 1.0


def levi_civita() -> np.ndarray:
    return _EPS4


# ----------------------------- wedges ---------------------------------- #

def wedge22(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Density of the 4-form a ^ b for antisymmetric a, b (shape (*n,4,4))."""
    return (a[..., 0, 1] * b[..., 2, 3] + a[..., 2, 3] * b[..., 0, 1]
            - a[..., 0, 2] * b[..., 1, 3] - a[..., 1, 3] * b[..., 0, 2]
            + a[..., 0, 3] * b[..., 1, 2] + a[..., 1, 2] * b[..., 0, 3])


def wedge11(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a ^ b)_{ij} = a_i b_j - a_j b_i for 1-forms (shape (*n,4))."""
    t = a[..., :, None] * b[..., None, :]
    return t - np.swapaxes(t, -1, -2)


def wedge13(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Density of a ^ b for a 1-form a and an antisymmetric 3-form b."""
    return np.einsum("ijkl,...i,...jkl->...", _EPS4, a, b) / 6.0


# --------------------------- derivatives ------------------------------- #

def d_scalar(grid: Grid4, f: np.ndarray) -> np.ndarray:
    return grad_all(grid, f)


def d_one(grid: Grid4, a: np.ndarray) -> np.ndarray:
    g = grad_all(grid, a)  # g[..., i, j] = d_i a_j
    return g - np.swapaxes(g, -1, -2)


def d_two(grid: Grid4, chi: np.ndarray) -> np.ndarray:
    """(d chi)_{ijk} as a fully antisymmetric (*n,4,4,4) array."""
    g = grad_all(grid, chi)  # g[..., i, j, k] = d_i chi_{jk}
    return g + np.moveaxis(g, (-3, -2, -1), (-2, -1, -3)) \
             + np.moveaxis(g, (-3, -2, -1), (-1, -3, -2))


def codiff_one(grid: Grid4, g: Metric, a: np.ndarray,
               ginv: np.ndarray | None = None,
               weight: np.ndarray | None = None) -> np.ndarray:
    """d* on 1-forms: the exact discrete adjoint of d on functions."""
    if ginv is None:
        ginv = g.inverse()
    if weight is None:
        weight = np.sqrt(np.linalg.det(g.data))
    flux = np.einsum("...ik,...k->...i", ginv, a) * weight[..., None]
    div = sum(deriv(grid, flux[..., i], i) for i in range(4))
    return -div / weight


def codiff_two(grid: Grid4, g: Metric, chi: np.ndarray,
               ginv: np.ndarray | None = None,
               weight: np.ndarray | None = None) -> np.ndarray:
    """d* on 2-forms: exact discrete adjoint of d on 1-forms."""
    if ginv is None:
        ginv = g.inverse()
    if weight is None:
        weight = np.sqrt(np.linalg.det(g.data))
    s = (ginv @ chi @ ginv) * weight[..., None, None]
    div = np.einsum("...iij->...j", grad_all(grid, s))
    return -np.einsum("...mj,...j->...m", g.data, div) / weight[..., None]


# ------------------------- pointwise algebra --------------------------- #

_EPS_MAT = _EPS4.reshape(16, 16)  # (kl) x (ab), for the star as one GEMM


def hodge_star2(g: Metric, chi: np.ndarray,
                ginv: np.ndarray | None = None,
                weight: np.ndarray | None = None) -> np.ndarray:
    """Pointwise Hodge star on 2-forms for the positive orientation."""
    if ginv is None:
        ginv = g.inverse()
    if weight is None:
        weight = np.sqrt(np.linalg.det(g.data))
    shape = chi.shape
    up = ginv @ chi @ ginv          # chi^{ab} (g symmetric)
    st = up.reshape(-1, 16) @ _EPS_MAT.T
    return 0.5 * weight[..., None, None] * st.reshape(shape)


def selfdual_project(g: Metric, chi: np.ndarray, **kw) -> np.ndarray:
    return 0.5 * (chi + hodge_star2(g, chi, **kw))


def proj_p(J: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(P t)_{kl} = (t_{kl} - J_k^i J_l^j t_{ij})/2, the J-anti-invariant part."""
    return 0.5 * (t - J @ t @ np.swapaxes(J, -1, -2))


def proj_q(J: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + J @ t @ np.swapaxes(J, -1, -2))


def j_on_oneform(J: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(J a)_j = J_j^k a_k, the usual action of J on 1-forms."""
    return np.einsum("...jk,...k->...j", J, a)


class Projectors:
    """The pointwise projections of 2-tensors onto J-(anti)invariant parts.

    Stored as operators; the explicit (2,2)-component arrays are built on
    demand (they are large at production grids).
    """

    def __init__(self, J: ACStructure):
        self.J = J

    def apply_p(self, t: np.ndarray) -> np.ndarray:
        return proj_p(self.J.data, t)

    def apply_q(self, t: np.ndarray) -> np.ndarray:
        return proj_q(self.J.data, t)

    def p_components(self) -> np.ndarray:
        """P^{ij}_{kl} = (delta_k^i delta_l^j - J_k^i J_l^j)/2 as (*n,4,4,4,4)."""
        j = self.J.data
        eye = np.eye(4)
        return 0.5 * (eye[:, None, :, None] * eye[None, :, None, :]
                      - np.einsum("...ki,...lj->...ijkl", j, j))

    def q_components(self) -> np.ndarray:
        j = self.J.data
        eye = np.eye(4)
        return 0.5 * (eye[:, None, :, None] * eye[None, :, None, :]
                      + np.einsum("...ki,...lj->...ijkl", j, j))


# --------------------------- integration ------------------------------- #

def integrate_density(grid: Grid4, density: np.ndarray) -> float:
    """Integral of a 4-form given by its coordinate density (exact trapezoid)."""
    return float(np.mean(density)) * grid.volume


def integrate(f: ScalarField, density: np.ndarray) -> float:
    """Integral of f against a positive 4-form density.

    Raises NonPositiveDensity when the density fails to be positive.
    """
    if np.min(density) <= 0:
        raise NonPositiveDensity(f"density min {np.min(density):.3e} <= 0")
    return integrate_density(f.grid, f.data * density)


def lp_norm(grid: Grid4, f: np.ndarray, density: np.ndarray, p: float) -> float:
    """(integral |f|^p against the density)^(1/p)."""
    return integrate_density(grid, np.abs(f) ** p * density) ** (1.0 / p)


def norm2_pointwise(g: Metric, data: np.ndarray, variance: tuple[str, ...],
                    ginv: np.ndarray | None = None) -> np.ndarray:
    """Squared pointwise g-norm of a tensor with the given variance."""
    if ginv is None:
        ginv = g.inverse()
    letters = "abcdefgh"
    out_letters = "".join(letters[i] for i in range(len(variance)))
    dual_letters = "".join(letters[i + len(variance)] for i in range(len(variance)))
    operands, subs = [], []
    for i, v in enumerate(variance):
        m = ginv if v == "d" else g.data
        operands.append(m)
        subs.append(f"...{out_letters[i]}{dual_letters[i]}")
    expr = ",".join(subs + [f"...{out_letters}", f"...{dual_letters}"]) + "->..."
    return np.einsum(expr, *operands, data, data, optimize=True)


def l2_inner_two(grid: Grid4, g: Metric, a: np.ndarray, b: np.ndarray,
                 ginv: np.ndarray | None = None,
                 weight: np.ndarray | None = None) -> float:
    """L^2(g) inner product of 2-forms, with the 1/2! convention."""
    if ginv is None:
        ginv = g.inverse()
    if weight is None:
        weight = np.sqrt(np.linalg.det(g.data))
    dens = 0.5 * np.einsum("...ik,...jl,...ij,...kl->...", ginv, ginv, a, b, optimize=True)
    return integrate_density(grid, dens * weight)


def l2_inner_one(grid: Grid4, g: Metric, a: np.ndarray, b: np.ndarray,
                 ginv: np.ndarray | None = None,
                 weight: np.ndarray | None = None) -> float:
    if ginv is None:
        ginv = g.inverse()
    if weight is None:
        weight = np.sqrt(np.linalg.det(g.data))
    return integrate_density(grid, np.einsum("...ik,...i,...k->...", ginv, a, b) * weight)


# ------------------- the almost-Kahler Laplacian ----------------------- #

def ak_laplacian_4form(grid: Grid4, omega: np.ndarray, J: np.ndarray,
                       phi: np.ndarray) -> np.ndarray:
    """Laplacian of phi for the structure (omega, J) via the 4-form identity.

    Uses -Omega ^ d(J dphi) = (1/2) Lap(phi) Omega^2, reading the quotient
    of 4-forms as the ratio of their densities.
    """
    jdphi = j_on_oneform(J, grad_all(grid, phi))
    num = -wedge22(omega, d_one(grid, jdphi))
    den = 0.5 * wedge22(omega, omega)
    return num / den


def apply_j_d(grid: Grid4, J: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """d(J dphi) as a 2-form."""
    return d_one(grid, j_on_oneform(J, grad_all(grid, phi)))
