"""Planar grid location domain.

Cells are indexed row-major from the map origin: cell ``i`` sits at column
``i % width`` and row ``i // width``. Coordinates are planar km.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GridMap:
    """A ``width`` x ``height`` grid whose cell 0 is centred at ``origin``."""

    width: int
    height: int
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise DomainError("grid dimensions must be integers")
        if self.width < 1 or self.height < 1:
            raise DomainError("grid dimensions must be positive")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise DomainError("cell_size must be a positive finite number")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def n(self) -> int:
        return self.width * self.height

    @cached_property
    def centers(self) -> np.ndarray:
        """(N, 2) array of cell-centre coordinates, read-only."""
        idx = np.arange(self.n)
        cols, rows = idx % self.width, idx // self.width
        out = np.column_stack([cols, rows]).astype(float) * self.cell_size
        out += np.asarray(self.origin)
        out.setflags(write=False)
        return out

    def check(self, loc) -> int:
        try:
            i = int(loc)
        except (TypeError, ValueError):
            raise DomainError(f"not a cell index: {loc!r}") from None
        if i != loc or not 0 <= i < self.n:
            raise DomainError(f"cell index {loc!r} outside [0, {self.n})")
        return i

    def col_row(self, loc) -> tuple[int, int]:
        i = self.check(loc)
        return i % self.width, i // self.width

    def index(self, col: int, row: int) -> int:
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise DomainError(f"({col}, {row}) is off the grid")
        return row * self.width + col

    def location_query(self, loc) -> np.ndarray:
        """Centre of cell ``loc``."""
        return self.centers[self.check(loc)].copy()

    def snap(self, point) -> int:
        """Cell whose centre is nearest to ``point``; ties go to the smaller index."""
        p = np.asarray(point, dtype=float)
        if p.shape != (2,):
            raise DomainError("point must be a 2-vector")
        return int(self.snap_many(p[None, :])[0])

    def snap_many(self, points) -> np.ndarray:
        """Vectorised :meth:`snap` over an (M, 2) array."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise DomainError("cannot snap non-finite coordinates")
        u = (pts - np.asarray(self.origin)) / self.cell_size
        # Nearest integer with halves rounded down; the grid is separable, so
        # per-axis nearest is Euclidean nearest and the smaller index wins ties.
        col = np.clip(np.ceil(u[:, 0] - 0.5), 0, self.width - 1).astype(np.int64)
        row = np.clip(np.ceil(u[:, 1] - 0.5), 0, self.height - 1).astype(np.int64)
        return row * self.width + col

    def snap_within(self, points, cells) -> np.ndarray:
        """Nearest cell among ``cells`` (ties to the smaller index)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise DomainError("cannot snap non-finite coordinates")
        cand = np.array(sorted(int(c) for c in cells), dtype=np.int64)
        if cand.size == 0:
            raise DomainError("empty candidate set")
        if cand.size == 1:
            return np.full(len(pts), cand[0])
        out = np.empty(len(pts), dtype=np.int64)
        centers = self.centers[cand]
        # chunked to bound memory at (chunk x |cells|)
        step = max(1, 2_000_000 // len(cand))
        for lo in range(0, len(pts), step):
            d = pts[lo:lo + step, None, :] - centers[None, :, :]
            out[lo:lo + step] = cand[np.argmin(np.einsum("ijk,ijk->ij", d, d), axis=1)]
        return out

    def distance(self, a, b) -> float:
        """Euclidean distance between the centres of two cells."""
        return float(np.hypot(*(self.location_query(a) - self.location_query(b))))

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "cell_size_km": self.cell_size,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridMap":
        try:
            return cls(
                width=d["width"],
                height=d["height"],
                cell_size=d.get("cell_size_km", d.get("cell_size", 1.0)),
                origin=tuple(d.get("origin", (0.0, 0.0))),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise DomainError(f"bad map descriptor: {exc}") from None

    @classmethod
    def load(cls, path) -> "GridMap":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def location_query(grid: GridMap, loc) -> np.ndarray:
    return grid.location_query(loc)


def snap(grid: GridMap, point) -> int:
    return grid.snap(point)


def euclidean_distance(grid: GridMap, a, b) -> float:
    return grid.distance(a, b)
