"""Levi-Civita connection, curvature and the covariant-derivative identities.

Christoffel symbols come from spectral derivatives of the metric and are
recomputed per call (no hidden state).  Index order conventions:

  Gamma[..., k, i, j] = Gamma^k_{ij}
  DJ[..., a, i, j]    = nabla_a J_i^j
  Dg[..., a, i, j]    = nabla_a t_{ij}     (for (0,2) tensors t)
  Rm[..., i, j, k, l] = R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + ...
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as ca
from .errors import NotAlmostKahler
from .fields import Metric
from .grid import Grid4, grad_all
from .structures import AKTriple


def christoffel(grid: Grid4, g: Metric, ginv: np.ndarray | None = None) -> np.ndarray:
    if ginv is None:
        ginv = g.inverse()
    dg = grad_all(grid, g.data)  # dg[..., a, i, j] = d_a g_{ij}
    m = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) \
        - np.einsum("...lij->...lij", dg)
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, m, optimize=True)


def covariant_deriv_11(grid: Grid4, gamma: np.ndarray, t: np.ndarray) -> np.ndarray:
    """nabla of a (1,1) tensor t[..., i, j] = t_i^j."""
    dt = grad_all(grid, t)
    dt -= np.einsum("...mai,...mj->...aij", gamma, t, optimize=True)
    dt += np.einsum("...jam,...im->...aij", gamma, t, optimize=True)
    return dt


def covariant_deriv_02(grid: Grid4, gamma: np.ndarray, t: np.ndarray) -> np.ndarray:
    """nabla of a (0,2) tensor t[..., i, j] = t_{ij}."""
    dt = grad_all(grid, t)
    dt -= np.einsum("...mai,...mj->...aij", gamma, t, optimize=True)
    dt -= np.einsum("...maj,...im->...aij", gamma, t, optimize=True)
    return dt


def riemann(grid: Grid4, gamma: np.ndarray) -> np.ndarray:
    dgamma = grad_all(grid, gamma)  # [..., a, k, i, j] = d_a Gamma^k_{ij}
    r = np.einsum("...kilj->...ijkl", dgamma) - np.einsum("...likj->...ijkl", dgamma)
    r += np.einsum("...ikm,...mlj->...ijkl", gamma, gamma, optimize=True)
    r -= np.einsum("...ilm,...mkj->...ijkl", gamma, gamma, optimize=True)
    return r


def riemann_norm(triple: AKTriple) -> tuple[float, float]:
    """(sup |Rm|_g, sup |nabla J|_g) for the triple's metric."""
    grid = triple.grid
    gamma = christoffel(grid, triple.g, triple.ginv)
    rm = riemann(grid, gamma)
    rm2 = ca.norm2_pointwise(triple.g, rm, ("u", "d", "d", "d"), ginv=triple.ginv)
    dj = covariant_deriv_11(grid, gamma, triple.J.data)
    dj2 = ca.norm2_pointwise(triple.g, dj, ("d", "d", "u"), ginv=triple.ginv)
    return float(np.sqrt(max(np.max(rm2), 0.0))), float(np.sqrt(max(np.max(dj2), 0.0)))


def harmonicity_trace(triple: AKTriple) -> np.ndarray:
    """nabla_i J_j^i, which vanishes on an almost-Kahler manifold (4 fields)."""
    grid = triple.grid
    j = triple.J.data
    gamma = christoffel(grid, triple.g, triple.ginv)
    tr = np.zeros(grid.shape(1))
    dj = grad_all(grid, j)
    tr += np.einsum("...iji->...j", dj)
    tr -= np.einsum("...mij,...mi->...j", gamma, j, optimize=True)
    tr += np.einsum("...iim,...jm->...j", gamma, j, optimize=True)
    return tr


def nijenhuis_ak_form(triple: AKTriple, domega_tol: float = 1e-8) -> np.ndarray:
    """Nijenhuis tensor via N^i_{jk} = 2 (nabla^i J_j^l) J_{kl}.

    Only valid on almost-Kahler data; raises NotAlmostKahler when the
    closedness check fails.
    """
    grid = triple.grid
    domega = float(np.max(np.abs(ca.d_two(grid, triple.omega.data))))
    if domega > domega_tol:
        raise NotAlmostKahler(f"max |d omega| = {domega:.3e} > {domega_tol:.1e}")
    gamma = christoffel(grid, triple.g, triple.ginv)
    dj = covariant_deriv_11(grid, gamma, triple.J.data)
    jlow = np.einsum("...km,...ml->...kl", triple.J.data, triple.g.data)
    return 2.0 * np.einsum("...ia,...ajl,...kl->...ijk", triple.ginv, dj, jlow,
                           optimize=True)


@dataclass
class Lemma32Result:
    alpha_identity_residual: float
    beta_identity_residual: float
    alpha_max: float
    beta_max: float
    d_omega_prime: float


def lemma32_check(triple: AKTriple, gprime: Metric) -> Lemma32Result:
    """Residuals of the two covariant-derivative identities for P and Q.

    gprime must be J-invariant with a closed associated 2-form
    J_i^k g'_{kj}; the report includes how closed it actually is.
    """
    grid = triple.grid
    j = triple.J.data
    gamma = christoffel(grid, triple.g, triple.ginv)
    dj = covariant_deriv_11(grid, gamma, j)          # dj[..., a, i, l] = nab_a J_i^l
    dgp = covariant_deriv_02(grid, gamma, gprime.data)
    gp = gprime.data
    jprime = np.einsum("...ik,...kj->...ij", j, gp)
    d_omega_prime = float(np.max(np.abs(ca.d_two(grid, 0.5 * (jprime - np.swapaxes(jprime, -1, -2))))))

    # 2 P^{rs}_{ij} nabla_r g'_{sp} = nabla_i g'_{jp} - J_i^r J_j^s nabla_r g'_{sp}
    jj = np.einsum("...ir,...js,...rsp->...ijp", j, j, dgp, optimize=True)
    p_term = np.einsum("...ijp->...ijp", dgp) - jj
    lhs_alpha = p_term - np.einsum("...jip->...ijp", p_term)

    alpha = np.einsum("...pl,...ijl->...ijp", jprime,
                      dj - np.einsum("...jil->...ijl", dj), optimize=True)
    alpha += np.einsum("...plk,...kj,...il->...ijp", dj, gp, j, optimize=True)
    alpha -= np.einsum("...plk,...ki,...jl->...ijp", dj, gp, j, optimize=True)
    alpha += np.einsum("...kp,...ljk,...il->...ijp", gp, dj, j, optimize=True)
    alpha -= np.einsum("...kp,...lik,...jl->...ijp", gp, dj, j, optimize=True)

    # 2 Q^{rs}_{ij} nabla_r g'_{sp} = nabla_i g'_{jp} + J_i^r J_j^s nabla_r g'_{sp}
    q_term = dgp + jj
    lhs_beta = q_term - np.einsum("...pji->...ijp", q_term)

    beta = np.einsum("...kl,...jil,...pk->...ijp", gp, dj, j, optimize=True)
    beta -= np.einsum("...kl,...jpl,...ik->...ijp", gp, dj, j, optimize=True)
    beta -= np.einsum("...kj,...plk,...il->...ijp", gp, dj, j, optimize=True)
    beta += np.einsum("...kj,...ilk,...pl->...ijp", gp, dj, j, optimize=True)
    beta -= np.einsum("...ljk,...kp,...il->...ijp", dj, gp, j, optimize=True)
    beta += np.einsum("...ljk,...ki,...pl->...ijp", dj, gp, j, optimize=True)

    return Lemma32Result(
        alpha_identity_residual=float(np.max(np.abs(lhs_alpha - alpha))),
        beta_identity_residual=float(np.max(np.abs(lhs_beta - beta))),
        alpha_max=float(np.max(np.abs(alpha))),
        beta_max=float(np.max(np.abs(beta))),
        d_omega_prime=d_omega_prime,
    )


def laplacian_metric_form(grid: Grid4, g: Metric, phi: np.ndarray,
                          ginv: np.ndarray | None = None) -> np.ndarray:
    """g^{ij} (d_i d_j phi - Gamma^k_{ij} d_k phi), for cross-checking."""
    if ginv is None:
        ginv = g.inverse()
    gamma = christoffel(grid, g, ginv)
    dphi = grad_all(grid, phi)
    hess = grad_all(grid, dphi)
    return np.einsum("...ij,...ij->...", ginv, hess) \
        - np.einsum("...ij,...kij,...k->...", ginv, gamma, dphi, optimize=True)
