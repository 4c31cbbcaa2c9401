"""Tensor fields over a Grid4 and the structured types built from them.

A TensorField stores components in trailing axes of length 4, one per
slot, with the variance string recording whether each slot is covariant
('d') or contravariant ('u').  Convention used throughout:

  * (1,1)-tensors such as J are stored as T[..., i, j] = T_i^j, so the
    action on a vector is (Tv)^j = v^i T_i^j;
  * 2-forms are stored as the full antisymmetric matrix chi[..., i, j];
  * the metric is g[..., i, j] = g_{ij}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotCompatible, NotTaming
from .grid import Grid4

COV, CON = "d", "u"


@dataclass
class TensorField:
    grid: Grid4
    variance: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        self.variance = tuple(self.variance)
        self.data = np.asarray(self.data, dtype=np.float64)
        expected = self.grid.shape(len(self.variance))
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} != {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor field contains non-finite entries")

    @property
    def rank(self) -> int:
        return len(self.variance)

    def copy(self) -> "TensorField":
        return type(self)(self.grid, self.variance, self.data.copy())


class ScalarField(TensorField):
    def __init__(self, grid: Grid4, data: np.ndarray):
        super().__init__(grid, (), data)

    @classmethod
    def zeros(cls, grid: Grid4) -> "ScalarField":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def constant(cls, grid: Grid4, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.n, float(value)))


class OneForm(TensorField):
    def __init__(self, grid: Grid4, data: np.ndarray):
        super().__init__(grid, (COV,), data)

    @classmethod
    def zeros(cls, grid: Grid4) -> "OneForm":
        return cls(grid, np.zeros(grid.shape(1)))


class TwoForm(TensorField):
    """Antisymmetric (0,2) field; antisymmetry is enforced at construction."""

    ASYM_TOL = 1e-12

    def __init__(self, grid: Grid4, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        dev = np.max(np.abs(data + np.swapaxes(data, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(data))))
        if dev > self.ASYM_TOL * scale:
            raise ValueError(f"two-form antisymmetry violated by {dev:.3e}")
        super().__init__(grid, (COV, COV), 0.5 * (data - np.swapaxes(data, -1, -2)))

    @classmethod
    def zeros(cls, grid: Grid4) -> "TwoForm":
        return cls(grid, np.zeros(grid.shape(2)))


class Metric(TensorField):
    """Symmetric positive-definite (0,2) field."""

    def __init__(self, grid: Grid4, data: np.ndarray, check_spd: bool = True):
        data = np.asarray(data, dtype=np.float64)
        dev = np.max(np.abs(data - np.swapaxes(data, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(data))))
        if dev > 1e-8 * scale:
            raise NotCompatible(f"metric symmetry violated by {dev:.3e}")
        data = 0.5 * (data + np.swapaxes(data, -1, -2))
        if check_spd:
            lo = float(np.min(np.linalg.eigvalsh(data.reshape(-1, 4, 4))))
            if lo <= 0:
                raise NotTaming(f"metric has pointwise eigenvalue {lo:.3e} <= 0")
        super().__init__(grid, (COV, COV), data)

    @classmethod
    def euclidean(cls, grid: Grid4) -> "Metric":
        data = np.zeros(grid.shape(2))
        data[...] = np.eye(4)
        return cls(data=data, grid=grid, check_spd=False)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.data)

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.data.reshape(-1, 4, 4))))


class ACStructure:
    """Almost complex structure: (1,1) field J with J^2 = -Id pointwise."""

    SQ_TOL = 1e-10

    def __init__(self, grid: Grid4, data: np.ndarray):
        self.field = TensorField(grid, (COV, CON), np.asarray(data, dtype=np.float64))
        dev = self.square_deviation()
        if dev > self.SQ_TOL:
            raise ValueError(f"J^2 + Id deviates by {dev:.3e}")

    @property
    def grid(self) -> Grid4:
        return self.field.grid

    @property
    def data(self) -> np.ndarray:
        return self.field.data

    def square_deviation(self) -> float:
        j = self.data
        jj = np.einsum("...ik,...kj->...ij", j, j)
        return float(np.max(np.abs(jj + np.eye(4))))


def standard_omega(grid: Grid4) -> TwoForm:
    """The reference symplectic form dx^1^dx^2 + dx^3^dx^4."""
    w = np.zeros(grid.shape(2))
    w[..., 0, 1] = 1.0
    w[..., 1, 0] = -1.0
    w[..., 2, 3] = 1.0
    w[..., 3, 2] = -1.0
    return TwoForm(grid, w)


def standard_j(grid: Grid4) -> ACStructure:
    """The constant J compatible with the reference form and flat metric.

    Sends d/dx1 -> d/dx2 and d/dx3 -> d/dx4, i.e. complex coordinates
    z1 = x1 + i x2, z2 = x3 + i x4.
    """
    j = np.zeros(grid.shape(2))
    j[..., 0, 1] = 1.0
    j[..., 1, 0] = -1.0
    j[..., 2, 3] = 1.0
    j[..., 3, 2] = -1.0
    return ACStructure(grid, j)
