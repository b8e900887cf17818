"""Finite discretizations of the simplex B^k.

Points are integer compositions ``c`` of a denominator ``D`` into ``k``
parts, mapped to ``c / D``. Enumeration order is lexicographically
decreasing in ``c``, so the first point is the vertex ``(1, 0, ..., 0)``
and the last is ``(0, ..., 0, 1)``.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import CapacityError, ConfigError

DEFAULT_CAP = 5_000_000


def _check_dims(k, step_den):
    if isinstance(step_den, bool) or not isinstance(step_den, numbers.Integral):
        raise ConfigError(f"step_den must be a positive integer (step = 1/step_den), got {step_den!r}")
    if isinstance(k, bool) or not isinstance(k, numbers.Integral):
        raise ConfigError(f"k must be an integer, got {k!r}")
    if k < 1 or step_den < 1:
        raise ConfigError(f"need k >= 1 and step_den >= 1, got k={k}, step_den={step_den}")


def grid_point_count(k: int, step_den: int) -> int:
    _check_dims(k, step_den)
    return math.comb(int(step_den) + int(k) - 1, int(k) - 1)


def grid_memory_bytes(k: int, step_den: int) -> int:
    """Bytes for the float point matrix plus one log-wealth per point."""
    return grid_point_count(k, step_den) * (int(k) + 1) * 8


def compositions(k: int, D: int) -> np.ndarray:
    """All compositions of ``D`` into ``k`` non-negative parts, decreasing lex order."""
    if k == 1:
        return np.array([[D]], dtype=np.int64)
    if k == 2:
        c1 = np.arange(D, -1, -1, dtype=np.int64)
        return np.column_stack([c1, D - c1])
    if k == 3:
        c1 = np.arange(D, -1, -1, dtype=np.int64)
        sizes = D - c1 + 1
        first = np.repeat(c1, sizes)
        starts = np.repeat(np.cumsum(sizes) - sizes, sizes)
        c3 = np.arange(first.size, dtype=np.int64) - starts
        c2 = D - first - c3
        return np.column_stack([first, c2, c3])
    blocks = []
    for c1 in range(D, -1, -1):
        rest = compositions(k - 1, D - c1)
        blocks.append(np.column_stack([np.full(rest.shape[0], c1, dtype=np.int64), rest]))
    return np.concatenate(blocks)


def iter_composition_blocks(k: int, D: int):
    """Yield the composition list in order, one block per leading coordinate.

    Lets callers scan grids too large to hold in memory.
    """
    _check_dims(k, D)
    if k <= 3:
        yield compositions(k, D)
        return
    for c1 in range(D, -1, -1):
        rest = compositions(k - 1, D - c1)
        yield np.column_stack([np.full(rest.shape[0], c1, dtype=np.int64), rest])


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    """Grid on B^k; ``counts / den`` are the points, equally weighted."""

    dim: int
    den: int
    counts: np.ndarray
    step_dens: tuple[int, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        pts = c / float(self.den)
        pts.setflags(write=False)
        object.__setattr__(self, "_points", pts)

    @property
    def step_den(self) -> int:
        return self.step_dens[0] if len(self.step_dens) == 1 else self.den

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self):
        return self.counts.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self), 1.0 / len(self))

    def vertex_indices(self) -> np.ndarray:
        """Index of each vertex e_j, or -1 where it is missing."""
        out = np.full(self.dim, -1, dtype=np.int64)
        hits = np.flatnonzero(self.counts.max(axis=1) == self.den)
        for i in hits:
            out[int(np.argmax(self.counts[i]))] = i
        return out

    def has_all_vertices(self) -> bool:
        return bool(np.all(self.vertex_indices() >= 0))

    def index_of(self, point) -> int:
        scaled = np.asarray(point, dtype=float) * self.den
        target = np.rint(scaled).astype(np.int64)
        if np.any(np.abs(scaled - target) > 1e-9):
            raise KeyError(f"{point} is not a grid point")
        hits = np.flatnonzero(np.all(self.counts == target, axis=1))
        if hits.size == 0:
            raise KeyError(f"{point} is not a grid point")
        return int(hits[0])


def enumerate_grid(k: int, step_den: int, cap: int = DEFAULT_CAP) -> SimplexGrid:
    count = grid_point_count(k, step_den)
    if count > cap:
        raise CapacityError(f"grid with k={k}, step_den={step_den} has {count} points, above cap {cap}",
                            count=count)
    return SimplexGrid(dim=int(k), den=int(step_den), counts=compositions(int(k), int(step_den)),
                       step_dens=(int(step_den),))


def union_grid(k: int, step_dens, cap: int = DEFAULT_CAP) -> SimplexGrid:
    """Union of several single-step grids, deduplicated, still uniformly weighted."""
    step_dens = tuple(int(d) for d in step_dens)
    if not step_dens:
        raise ConfigError("need at least one step_den")
    for d in step_dens:
        _check_dims(k, d)
    total = sum(grid_point_count(k, d) for d in step_dens)
    if total > cap:
        raise CapacityError(f"grid union has up to {total} points, above cap {cap}", count=total)
    den = reduce(math.lcm, step_dens)
    parts = [compositions(k, d) * (den // d) for d in step_dens]
    allc = np.unique(np.concatenate(parts), axis=0)
    # np.unique sorts ascending lexicographically; flip to the canonical order
    allc = allc[::-1]
    return SimplexGrid(dim=int(k), den=den, counts=np.ascontiguousarray(allc), step_dens=step_dens)


def constant_combination(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
        raise ConfigError(f"constant combination must lie on the simplex, got {lam}")
    return lam
