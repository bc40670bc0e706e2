"""Context spaces, uniform hypercube partitions and per-cell demand estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParameterError

CellIndex = tuple[int, ...]


def partition_granularity(T: int, alpha: float, D: int) -> int:
    """Cells per dimension ``ceil(T ** (1 / (3*alpha + D)))``."""
    if T < 1 or alpha <= 0 or D < 1:
        raise ParameterError(f"need T>=1, alpha>0, D>=1 (got T={T}, alpha={alpha}, D={D})")
    # exact powers (e.g. 32 ** 0.2) come out a hair above the integer
    h = math.ceil(T ** (1.0 / (3.0 * alpha + D)) * (1.0 - 1e-12))
    return max(h, 1)


def control_threshold(t: int, alpha: float, D: int) -> float:
    """Exploration threshold ``t ** (2*alpha / (3*alpha + D)) * ln(t)``."""
    if t < 1:
        raise ParameterError(f"slot index must be >= 1, got {t}")
    if alpha <= 0 or D < 1:
        raise ParameterError(f"need alpha>0, D>=1 (got alpha={alpha}, D={D})")
    return t ** (2.0 * alpha / (3.0 * alpha + D)) * math.log(t)


def _check_unit_box(x: np.ndarray) -> None:
    if x.size and (not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise DomainError(f"context coordinates must lie in [0,1], got {x}")


@dataclass(frozen=True)
class ContextPartition:
    """Uniform grid of ``cells_per_dim ** dims`` hypercubes over ``[0,1]^dims``.

    Cells are half-open ``[k/h, (k+1)/h)`` except the last one per axis,
    which is closed at 1.0.
    """

    dims: int
    cells_per_dim: int

    def __post_init__(self) -> None:
        if self.dims < 1 or self.cells_per_dim < 1:
            raise ParameterError("partition needs dims >= 1 and cells_per_dim >= 1")

    @property
    def n_cells(self) -> int:
        return self.cells_per_dim ** self.dims

    def locate(self, x: Sequence[float]) -> CellIndex:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dims,):
            raise DomainError(f"expected a {self.dims}-dimensional context, got shape {x.shape}")
        _check_unit_box(x)
        h = self.cells_per_dim
        return tuple(int(v) for v in np.minimum(np.floor(x * h), h - 1).astype(int))

    def locate_many(self, xs: np.ndarray) -> np.ndarray:
        """Flat cell ids (row-major) for an ``(M, dims)`` array of contexts."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dims)
        _check_unit_box(xs)
        h = self.cells_per_dim
        idx = np.minimum(np.floor(xs * h), h - 1).astype(np.int64)
        return np.ravel_multi_index(idx.T, (h,) * self.dims) if len(idx) else np.zeros(0, np.int64)

    def flat(self, cell: CellIndex) -> int:
        return int(np.ravel_multi_index(cell, (self.cells_per_dim,) * self.dims))

    def unflat(self, flat: int) -> CellIndex:
        return tuple(int(i) for i in np.unravel_index(flat, (self.cells_per_dim,) * self.dims))

    def center(self, cell: CellIndex | int) -> np.ndarray:
        if isinstance(cell, (int, np.integer)):
            cell = self.unflat(int(cell))
        return (np.asarray(cell, dtype=float) + 0.5) / self.cells_per_dim

    def cells(self) -> Iterable[CellIndex]:
        for flat in range(self.n_cells):
            yield self.unflat(flat)


@dataclass
class EstimatorStore:
    """Lazily materialised ``cell -> (count, sample mean)`` table.

    Keys are flat cell ids. Unvisited cells read as ``(0, 0.0)``.
    """

    d_max: float
    counts: dict[int, int] = field(default_factory=dict)
    means: dict[int, float] = field(default_factory=dict)

    def count(self, cell: int) -> int:
        return self.counts.get(cell, 0)

    def mean(self, cell: int) -> float:
        return self.means.get(cell, 0.0)

    def update(self, cell: int, demand: float) -> None:
        if not (0.0 <= demand <= self.d_max):
            raise DomainError(f"demand {demand} outside [0, {self.d_max}]")
        c = self.counts.get(cell, 0)
        m = self.means.get(cell, 0.0)
        self.means[cell] = (m * c + demand) / (c + 1)
        self.counts[cell] = c + 1

    def visited(self) -> list[int]:
        return sorted(self.counts)

    def __len__(self) -> int:
        return len(self.counts)


def update_estimate(store: EstimatorStore, cell: int, demand: float) -> None:
    store.update(cell, demand)


def locate(partition: ContextPartition, x: Sequence[float]) -> CellIndex:
    return partition.locate(x)
