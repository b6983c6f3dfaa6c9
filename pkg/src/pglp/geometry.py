"""Planar convex geometry: hulls, Minkowski gauge, shoelace area, sampling.

Polygons are kept in canonical form: counter-clockwise, no collinear
vertices, starting at the lexicographically smallest vertex. Hulls of one or
two distinct points are kept as degenerate polygons (a point or a segment).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"

    @property
    def degenerate(self) -> bool:
        return len(self.vertices) < 3

    @cached_property
    def area(self) -> float:
        return polygon_area(self)

    @cached_property
    def _facets(self):
        """Unnormalised outward normals and offsets, ``n_i . x <= b_i`` inside."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        offsets = np.einsum("ij,ij->i", normals, v)
        return normals, offsets, np.hypot(e[:, 0], e[:, 1])

    @cached_property
    def origin_interior(self) -> bool:
        if self.degenerate:
            return False
        normals, offsets, lengths = self._facets
        return bool(np.all(offsets > ATOL * lengths))

    def translate(self, d) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(d, dtype=float))

    def centroid(self) -> np.ndarray:
        v = self.vertices
        if self.degenerate:
            return v.mean(axis=0)
        w = np.roll(v, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cr.sum() / 2
        return np.array([((v[:, 0] + w[:, 0]) * cr).sum(), ((v[:, 1] + w[:, 1]) * cr).sum()]) / (6 * a)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _drop(o, a, b) -> bool:
    # a is dropped unless b lies strictly left of o->a by more than ATOL
    cr = _cross(o, a, b)
    if cr <= 0:
        return True
    return cr <= ATOL * ((b[0] - o[0]) ** 2 + (b[1] - o[1]) ** 2) ** 0.5


def convex_hull(points) -> ConvexPolygon:
    """Andrew's monotone chain, O(n log n)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) == 0:
        raise DomainError("convex hull of an empty set")
    pts = [tuple(p) for p in pts.tolist()]  # np.unique sorts lexicographically
    if len(pts) <= 2:
        return ConvexPolygon(pts)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _drop(lower[-2], lower[-1], p):
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _drop(upper[-2], upper[-1], p):
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and np.allclose(hull[0], hull[1], rtol=0, atol=ATOL):
        hull = hull[:1]
    return ConvexPolygon(hull)


def polygon_area(p: ConvexPolygon) -> float:
    """Shoelace area, half the absolute sum of det(v_i, v_{i+1}) with wraparound."""
    v = p.vertices
    if len(v) < 3:
        return 0.0
    w = np.roll(v, -1, axis=0)
    return float(abs(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1])) / 2)


def k_norm(p: ConvexPolygon, v) -> float | np.ndarray:
    """Minkowski gauge ``min{t >= 0 : v in t*p}``; vectorised over (M, 2) input."""
    if not p.origin_interior:
        raise DomainError("k-norm needs a non-degenerate body with the origin strictly inside")
    normals, offsets, _ = p._facets
    arr = np.asarray(v, dtype=float)
    g = np.max(arr.reshape(-1, 2) @ (normals / offsets[:, None]).T, axis=1)
    g = np.maximum(g, 0.0)
    return float(g[0]) if arr.ndim == 1 else g


def contains(p: ConvexPolygon, v, tol: float = ATOL) -> bool | np.ndarray:
    """Inside-or-on-boundary test.

    For bodies with the origin inside this is ``k_norm(p, v) <= 1 + tol``;
    otherwise each facet is tested with an absolute tolerance of ``tol`` km.
    """
    arr = np.asarray(v, dtype=float)
    pts = arr.reshape(-1, 2)
    verts = p.vertices
    if p.origin_interior:
        out = k_norm(p, pts) <= 1 + tol
    elif len(verts) >= 3:
        normals, offsets, lengths = p._facets
        out = np.all(pts @ normals.T - offsets <= tol * lengths, axis=1)
    elif len(verts) == 2:
        a, b = verts
        d = b - a
        L = np.hypot(*d)
        rel = pts - a
        along = rel @ d / L
        perp = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / L
        out = (perp <= tol) & (along >= -tol) & (along <= L + tol)
    else:
        out = np.hypot(*(pts - verts[0]).T) <= tol
    return bool(out[0]) if arr.ndim == 1 else out


def hulls_equal(p1: ConvexPolygon, p2: ConvexPolygon, atol: float = ATOL) -> bool:
    """Same canonical vertex sequence, coordinates within ``atol``."""
    a, b = p1.vertices, p2.vertices
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=0, atol=atol))


def sample_uniform(p: ConvexPolygon, rng, size: int | None = None) -> np.ndarray:
    """Uniform point(s) in ``p``: fan triangulation from vertex 0, triangle
    picked proportionally to area, then a uniform point in the triangle."""
    if p.degenerate:
        raise DomainError("cannot sample uniformly from a degenerate polygon")
    v = p.vertices
    a, b, c = v[0], v[1:-1], v[2:]
    ab, ac = b - a, c - a
    tri = np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    n = 1 if size is None else int(size)
    if len(tri) == 1:
        k = np.zeros(n, dtype=np.int64)
    else:
        cdf = np.cumsum(tri)
        k = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), len(tri) - 1)
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1
    r[flip] = 1 - r[flip]
    out = a + r[:, :1] * ab[k] + r[:, 1:] * ac[k]
    return out[0] if size is None else out
