"""Periodic 4-torus grid and FFT-based spectral operators.

All fields live on a uniform product grid over [0, L1) x ... x [0, L4).
Derivatives are Fourier multipliers with the Nyquist mode zeroed, which
keeps each partial exactly anti-self-adjoint in the plain grid inner
product and makes the derivative of real data real.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import NonZeroMean

GRID_AXES = (0, 1, 2, 3)


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by the AKCY_THREADS env var."""
    cap = os.environ.get("AKCY_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


@dataclass(frozen=True)
class Grid4:
    """Uniform periodic grid on the flat 4-torus.

    n        -- points per axis (each even and >= 4)
    periods  -- side lengths of the torus
    """

    n: tuple[int, int, int, int]
    periods: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "periods", tuple(float(v) for v in self.periods))
        if len(self.n) != 4 or len(self.periods) != 4:
            raise ValueError("Grid4 needs 4 axis sizes and 4 periods")
        for nk in self.n:
            if nk < 4 or nk % 2 != 0:
                raise ValueError(f"axis size {nk} must be even and >= 4")
        for lk in self.periods:
            if not lk > 0:
                raise ValueError("periods must be positive")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / nk for l, nk in zip(self.periods, self.n))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    def shape(self, rank: int) -> tuple[int, ...]:
        return self.n + (4,) * rank

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays x^1..x^4."""
        axes = []
        for k in range(4):
            x = np.arange(self.n[k]) * self.spacing[k]
            shape = [1, 1, 1, 1]
            shape[k] = self.n[k]
            axes.append(x.reshape(shape))
        return axes

    def wavenumbers(self) -> list[np.ndarray]:
        """Broadcastable angular wavenumbers, Nyquist zeroed (for derivatives)."""
        if "k" not in self._cache:
            ks = []
            for ax in range(4):
                nk = self.n[ax]
                k = 2.0 * np.pi * np.fft.fftfreq(nk, d=self.spacing[ax])
                k[nk // 2] = 0.0  # Nyquist: odd multiplier forces 0
                shape = [1, 1, 1, 1]
                shape[ax] = nk
                ks.append(k.reshape(shape))
            self._cache["k"] = ks
        return self._cache["k"]

    def k_squared(self) -> np.ndarray:
        """|k|^2 built from the derivative wavenumbers (Nyquist excluded)."""
        if "k2" not in self._cache:
            ks = self.wavenumbers()
            self._cache["k2"] = sum(k * k for k in ks)
        return self._cache["k2"]

    def refine(self, factor: int = 2) -> "Grid4":
        return Grid4(tuple(nk * factor for nk in self.n), self.periods)


_WORKER_CUTOVER = 1 << 17  # below this, thread fan-out costs more than it saves


def fft4(a: np.ndarray) -> np.ndarray:
    """Forward FFT over the grid axes; trailing component axes ride along."""
    w = fft_workers() if a.size >= _WORKER_CUTOVER else 1
    return scipy.fft.fftn(a, axes=GRID_AXES, workers=w)


def ifft4_real(ah: np.ndarray) -> np.ndarray:
    w = fft_workers() if ah.size >= _WORKER_CUTOVER else 1
    return scipy.fft.ifftn(ah, axes=GRID_AXES, workers=w).real


def deriv(grid: Grid4, a: np.ndarray, axis: int) -> np.ndarray:
    """Spectral partial derivative along grid axis 0..3 (componentwise)."""
    ah = fft4(a)
    k = grid.wavenumbers()[axis]
    return ifft4_real(ah * np.reshape(1j * k, k.shape + (1,) * (a.ndim - 4)))


_CHUNK_BYTES = 1 << 28  # past this, derivatives loop over components


def grad_all(grid: Grid4, a: np.ndarray, ah: np.ndarray | None = None) -> np.ndarray:
    """All four partials of a (componentwise).

    Returns shape (*n, 4, *comp): the derivative index sits directly after
    the grid axes, matching the covariant slot it creates.  Large inputs
    are processed one component at a time to bound peak memory.
    """
    out = np.empty(grid.n + (4,) + a.shape[4:], dtype=np.float64)
    if ah is None and a.nbytes > _CHUNK_BYTES and a.ndim > 4:
        for idx in np.ndindex(a.shape[4:]):
            comp = (slice(None),) * 4 + idx
            ch = fft4(a[comp])
            for ax in range(4):
                k = grid.wavenumbers()[ax]
                out[(slice(None),) * 4 + (ax,) + idx] = ifft4_real(ch * (1j * k))
        return out
    if ah is None:
        ah = fft4(a)
    comp_ndim = a.ndim - 4
    for ax in range(4):
        k = grid.wavenumbers()[ax]
        mul = np.reshape(1j * k, k.shape + (1,) * comp_ndim)
        out[(slice(None),) * 4 + (ax,)] = ifft4_real(ah * mul)
    return out


def mean(grid: Grid4, a: np.ndarray) -> float:
    return float(np.mean(a))


def partial_derivative(field, axis: int):
    """Typed spectral partial along axis 1..4 (exact on resolved modes)."""
    from .fields import TensorField
    if not 1 <= axis <= 4:
        raise ValueError("axis must be 1..4")
    return TensorField(field.grid, field.variance,
                       deriv(field.grid, field.data, axis - 1))


def solve_flat_poisson(rhs, rel_tol: float = 1e-10):
    """Typed zero-mean flat Poisson solve for a ScalarField."""
    from .fields import ScalarField
    return ScalarField(rhs.grid,
                       solve_flat_poisson_array(rhs.grid, rhs.data, rel_tol=rel_tol))


def solve_flat_poisson_array(grid: Grid4, rhs: np.ndarray,
                             rel_tol: float = 1e-10) -> np.ndarray:
    """Zero-mean u with flat Laplacian(u) = rhs, componentwise.

    The rhs must have zero mean up to rel_tol * ||rhs||; modes the derivative
    convention cannot represent (Nyquist) are projected out.
    """
    norm = float(np.sqrt(np.mean(rhs * rhs)))
    m = abs(float(np.mean(rhs)))
    if norm > 0 and m > rel_tol * norm:
        raise NonZeroMean(f"rhs mean {m:.3e} exceeds {rel_tol:.1e} * ||rhs|| = {rel_tol * norm:.3e}")
    if norm == 0.0:
        return np.zeros_like(rhs)
    k2 = grid.k_squared()
    sym = -k2.copy()
    sym[k2 == 0] = 1.0  # avoid divide warnings; those modes are zeroed below
    ah = fft4(rhs)
    uh = ah / np.reshape(sym, sym.shape + (1,) * (rhs.ndim - 4))
    uh[np.broadcast_to(np.reshape(k2 == 0, k2.shape + (1,) * (rhs.ndim - 4)), uh.shape)] = 0.0
    return ifft4_real(uh)


def flat_laplacian(grid: Grid4, a: np.ndarray) -> np.ndarray:
    """Flat Laplacian sum_i d_i d_i via the (Nyquist-zeroed) symbol."""
    ah = fft4(a)
    k2 = grid.k_squared()
    return ifft4_real(ah * np.reshape(-k2, k2.shape + (1,) * (a.ndim - 4)))


def mask_nyquist(grid: Grid4, a: np.ndarray) -> np.ndarray:
    """Zero every Fourier mode carrying a Nyquist frequency on some axis.

    Those modes have identically zero spectral derivative, so they are
    invisible to d and d* and must be excluded from kernel computations.
    """
    key = "nyqmask"
    if key not in grid._cache:
        keep = np.ones(grid.n, dtype=bool)
        for ax in range(4):
            idx = [slice(None)] * 4
            idx[ax] = grid.n[ax] // 2
            keep[tuple(idx)] = False
        grid._cache[key] = keep
    keep = grid._cache[key]
    ah = fft4(a)
    ah *= np.reshape(keep, keep.shape + (1,) * (a.ndim - 4))
    return ifft4_real(ah)


def random_bandlimited(grid: Grid4, rng: np.random.Generator, max_mode: int = 2,
                       shape: tuple = ()) -> np.ndarray:
    """Real random field from modes with |m|_inf <= max_mode, sup-norm 1.

    Deterministic for a given generator state; used for scenario data and
    randomized property tests.
    """
    x = grid.coords()
    out = np.zeros(grid.n + shape)
    modes = []
    for m in np.ndindex(*(2 * max_mode + 1,) * 4):
        mv = tuple(mi - max_mode for mi in m)
        if mv == (0, 0, 0, 0):
            continue
        # keep one representative of each +-m pair (cos covers both)
        if mv < tuple(-c for c in mv):
            continue
        modes.append(mv)
    for mv in modes:
        amp = rng.standard_normal(shape) if shape else rng.standard_normal()
        phase = rng.uniform(0.0, 2.0 * np.pi)
        arg = sum(2.0 * np.pi * mv[k] * x[k] / grid.periods[k] for k in range(4))
        wave = np.cos(arg + phase) * np.ones(grid.n)
        out += wave.reshape(grid.n + (1,) * len(shape)) * amp
    return out / max(np.max(np.abs(out)), 1e-300)
