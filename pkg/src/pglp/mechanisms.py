"""Graph-calibrated release mechanisms.

``plm`` adds independent Laplace noise to both coordinates of the cell centre,
scaled by the largest l1 difference across policy edges of the component.
``ppim`` draws K-norm noise whose body K is the convex hull of those edge
difference vectors. Both snap the perturbed point back onto the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import DomainError, NoSensitivityError
from .geometry import ConvexPolygon, convex_hull, k_norm, sample_uniform
from .grid import GridMap
from .policy import PolicyGraph

PLM = "plm"
PPIM = "ppim"
MECHANISMS = (PLM, PPIM)

# Tail mass left out of likelihood quadrature boxes.
_TAIL = 1e-14


def check_epsilon(epsilon) -> float:
    eps = float(epsilon)
    if not (eps > 0 and math.isfinite(eps)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon!r}")
    return eps


def check_mechanism(mechanism) -> str:
    if mechanism not in MECHANISMS:
        raise DomainError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
    return mechanism


@dataclass(frozen=True, eq=False)
class Sensitivity:
    """Graph-calibrated sensitivity of one component.

    ``vectors`` is the symmetrised set of edge difference vectors, ``l1`` its
    largest l1 norm and ``hull`` its convex hull.
    """

    l1: float
    hull: ConvexPolygon
    component: frozenset
    vectors: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.hull.degenerate

    @cached_property
    def segment(self) -> tuple[np.ndarray, float]:
        """Unit direction and half-length of a degenerate (segment) hull."""
        a, b = self.hull.vertices
        d = b - a
        L = float(np.hypot(*d))
        return d / L, L / 2


def difference_vectors(grid: GridMap, edges) -> np.ndarray:
    e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    d = grid.centers[e[:, 0]] - grid.centers[e[:, 1]]
    return np.concatenate([d, -d])


def sensitivity_from_edges(grid: GridMap, edges, component) -> Sensitivity:
    edges = frozenset(edges)
    if not edges:
        raise NoSensitivityError("no policy edges to calibrate against")
    return _cached_sensitivity(grid, edges, frozenset(component))


@lru_cache(maxsize=4096)
def _cached_sensitivity(grid: GridMap, edges: frozenset, component: frozenset) -> Sensitivity:
    vecs = difference_vectors(grid, sorted(edges))
    vecs.setflags(write=False)
    l1 = float(np.max(np.abs(vecs).sum(axis=1)))
    return Sensitivity(l1=l1, hull=convex_hull(vecs), component=component, vectors=vecs)


def combine_sensitivities(parts, component) -> Sensitivity:
    """Sensitivity of a union of edge sets from the sensitivities of its parts."""
    parts = list(parts)
    if not parts:
        raise NoSensitivityError("no policy edges to calibrate against")
    if len(parts) == 1 and parts[0].component == frozenset(component):
        return parts[0]
    vecs = np.concatenate([p.vectors for p in parts])
    hull = convex_hull(np.concatenate([p.hull.vertices for p in parts]))
    return Sensitivity(l1=max(p.l1 for p in parts), hull=hull, component=frozenset(component), vectors=vecs)


def compute_sensitivity(grid: GridMap, g: PolicyGraph, s) -> Sensitivity:
    """Sensitivity over the edges inside the connected component of ``s``.

    Nothing outside that component is read.
    """
    s = grid.check(s)
    comp = g.connected_component(s)
    edges = g.component_edges(s)
    if not edges:
        raise NoSensitivityError(f"cell {s} has no policy edges in its component")
    return sensitivity_from_edges(grid, edges, comp)


def graph_sensitivity(grid: GridMap, g: PolicyGraph) -> Sensitivity:
    """Sensitivity over every edge of ``g`` (the hull K(G^C) of a constrained graph)."""
    return sensitivity_from_edges(grid, sorted(g.edges), g.nodes)


# -- sampling -----------------------------------------------------------------

def laplace_noise(sens: Sensitivity, epsilon: float, rng, size: int) -> np.ndarray:
    return rng.laplace(0.0, sens.l1 / epsilon, size=(size, 2))


def knorm_noise(hull: ConvexPolygon, epsilon: float, rng, size: int) -> np.ndarray:
    """Density proportional to exp(-epsilon * ||y||_K): a Gamma(3, 1/epsilon)
    radius times a uniform point of K."""
    r = rng.gamma(3.0, 1.0 / epsilon, size=size)
    return r[:, None] * sample_uniform(hull, rng, size)


def segment_noise(sens: Sensitivity, epsilon: float, rng, size: int) -> np.ndarray:
    # collinear policy mass: 1-D Laplace along the segment, scale half-length/epsilon
    u, half = sens.segment
    t = rng.laplace(0.0, half / epsilon, size=size)
    return t[:, None] * u


def sample_noise(sens: Sensitivity, mechanism: str, epsilon: float, rng, size: int | None = None) -> np.ndarray:
    eps = check_epsilon(epsilon)
    n = 1 if size is None else int(size)
    if check_mechanism(mechanism) == PLM:
        y = laplace_noise(sens, eps, rng, n)
    elif sens.degenerate:
        y = segment_noise(sens, eps, rng, n)
    else:
        y = knorm_noise(sens.hull, eps, rng, n)
    return y[0] if size is None else y


def _snap(grid: GridMap, pts: np.ndarray, sens: Sensitivity, restrict_snap: bool) -> np.ndarray:
    if restrict_snap:
        return grid.snap_within(pts, sens.component)
    return grid.snap_many(pts)


def release(grid: GridMap, g: PolicyGraph, s, epsilon, rng, mechanism: str = PPIM, *,
            sensitivity: Sensitivity | None = None, restrict_snap: bool = False) -> int:
    """Release one perturbed cell for true cell ``s``.

    ``restrict_snap`` snaps to the nearest cell of the component instead of
    the nearest cell of the map.
    """
    s = grid.check(s)
    sens = sensitivity if sensitivity is not None else compute_sensitivity(grid, g, s)
    y = sample_noise(sens, mechanism, epsilon, rng)
    return int(_snap(grid, (grid.centers[s] + y)[None, :], sens, restrict_snap)[0])


def release_many(grid: GridMap, sens: Sensitivity, sources, epsilon, rng, mechanism: str = PPIM, *,
                 restrict_snap: bool = False) -> np.ndarray:
    """Vectorised release of several true cells sharing one sensitivity."""
    src = np.asarray(sources, dtype=np.int64)
    y = sample_noise(sens, mechanism, epsilon, rng, size=len(src))
    return _snap(grid, grid.centers[src] + y, sens, restrict_snap)


def release_plm(grid: GridMap, g: PolicyGraph, s, epsilon, rng, **kw) -> int:
    return release(grid, g, s, epsilon, rng, PLM, **kw)


def release_ppim(grid: GridMap, g: PolicyGraph, s, epsilon, rng, **kw) -> int:
    return release(grid, g, s, epsilon, rng, PPIM, **kw)


# -- densities and likelihoods -------------------------------------------------

def noise_density(sens: Sensitivity, mechanism: str, epsilon, y) -> np.ndarray | float:
    """Pre-snap noise density at offset(s) ``y``."""
    eps = check_epsilon(epsilon)
    arr = np.asarray(y, dtype=float)
    pts = arr.reshape(-1, 2)
    if check_mechanism(mechanism) == PLM:
        b = sens.l1 / eps
        out = np.exp(-np.abs(pts).sum(axis=1) / b) / (4 * b * b)
    else:
        if sens.degenerate:
            raise DomainError("segment noise has no planar density")
        # 1 / (Gamma(3) * Vol(K / eps))
        out = eps * eps / (2 * sens.hull.area) * np.exp(-eps * k_norm(sens.hull, pts))
    return float(out[0]) if arr.ndim == 1 else out


def _log_center_weights(grid: GridMap, sens: Sensitivity, mechanism: str, eps: float,
                        sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = grid.centers[targets][None, :, :] - grid.centers[sources][:, None, :]
    flat = d.reshape(-1, 2)
    if mechanism == PLM:
        logw = -np.abs(flat).sum(axis=1) * (eps / sens.l1)
    else:
        logw = -eps * k_norm(sens.hull, flat)
    return logw.reshape(len(sources), len(targets))


def output_distribution(grid: GridMap, sens: Sensitivity, sources, epsilon, mechanism: str = PPIM, *,
                        restrict_snap: bool = False, method: str = "center") -> np.ndarray:
    """Rows of Pr(z | s) over all N cells, one row per source cell.

    ``method="center"`` evaluates the pre-snap density at each cell centre and
    renormalises. ``method="exact"`` integrates the density over each cell's
    snapping region (map snapping only for planar noise). Segment noise is
    always integrated exactly.
    """
    eps = check_epsilon(epsilon)
    check_mechanism(mechanism)
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if mechanism == PPIM and sens.degenerate:
        return np.stack([_segment_cell_probs(grid, sens, int(s), eps, restrict_snap) for s in src])
    if method == "exact":
        if restrict_snap:
            raise DomainError("exact planar integration supports map snapping only")
        rows = np.stack([_rect_cell_probs(grid, sens, int(s), eps, mechanism) for s in src])
        return rows / rows.sum(axis=1, keepdims=True)
    if method != "center":
        raise DomainError(f"unknown likelihood method {method!r}")
    targets = np.array(sorted(sens.component), dtype=np.int64) if restrict_snap else np.arange(grid.n)
    logw = _log_center_weights(grid, sens, mechanism, eps, src, targets)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    out = np.zeros((len(src), grid.n))
    out[:, targets] = w
    return out


def output_likelihood(grid: GridMap, mechanism: str, g: PolicyGraph, s, z, epsilon, *,
                      sensitivity: Sensitivity | None = None, restrict_snap: bool = False,
                      method: str = "center") -> float:
    """Pr(release = z | truth = s)."""
    s, z = grid.check(s), grid.check(z)
    sens = sensitivity if sensitivity is not None else compute_sensitivity(grid, g, s)
    return float(output_distribution(grid, sens, [s], epsilon, mechanism,
                                     restrict_snap=restrict_snap, method=method)[0, z])


def _laplace_cdf(x, b):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0) / b), 1 - 0.5 * np.exp(-np.maximum(x, 0) / b))


def _segment_cell_probs(grid: GridMap, sens: Sensitivity, s: int, eps: float, restrict_snap: bool) -> np.ndarray:
    """Exact snapped distribution of 1-D Laplace noise along the segment.

    Along the line the snapped cell is piecewise constant; breakpoints are
    where two candidate centres are equidistant, which is linear in t.
    """
    u, half = sens.segment
    b = half / eps
    p0 = grid.centers[s]
    if restrict_snap:
        cells = np.array(sorted(sens.component), dtype=np.int64)
        c = grid.centers[cells]
        i, j = np.triu_indices(len(c), 1)
        # |p0 + t u - c_i|^2 = |p0 + t u - c_j|^2
        denom = 2 * (c[j] - c[i]) @ u
        num = (c[j] ** 2).sum(1) - (c[i] ** 2).sum(1) - 2 * (c[j] - c[i]) @ p0
        ok = np.abs(denom) > 1e-15
        brk = num[ok] / denom[ok]
    else:
        brk = []
        for axis, count in ((0, grid.width), (1, grid.height)):
            if abs(u[axis]) > 1e-15 and count > 1:
                bounds = grid.origin[axis] + (np.arange(count - 1) + 0.5) * grid.cell_size
                brk.append((bounds - p0[axis]) / u[axis])
        brk = np.concatenate(brk) if brk else np.empty(0)
    brk = np.unique(brk)
    edges = np.concatenate([[-np.inf], brk, [np.inf]])
    mass = np.diff(_laplace_cdf(edges, b))
    lo, hi = edges[:-1], edges[1:]
    mid = np.where(np.isinf(lo), hi - 1.0, np.where(np.isinf(hi), lo + 1.0, (lo + hi) / 2))
    mid = np.where(np.isinf(mid), 0.0, mid)
    cells = _snap(grid, p0 + mid[:, None] * u, sens, restrict_snap)
    return np.bincount(cells, weights=mass, minlength=grid.n)


def _clip(poly: list, normal: np.ndarray, offset: float) -> list:
    """Sutherland-Hodgman clip of a convex polygon to ``normal . x >= offset``."""
    out = []
    n = len(poly)
    for k in range(n):
        a, b = poly[k], poly[(k + 1) % n]
        fa, fb = normal @ a - offset, normal @ b - offset
        if fa >= 0:
            out.append(a)
        if (fa >= 0) != (fb >= 0):
            out.append(a + (b - a) * (fa / (fa - fb)))
    return out


def _exp_linear_integral(poly: list, c: np.ndarray) -> float:
    """Exact integral of exp(c . y) over a CCW convex polygon.

    Divergence theorem with the field c exp(c . y) / |c|^2 turns it into a sum of
    closed-form edge integrals.
    """
    cc = float(c @ c)
    total = 0.0
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        d = q - p
        x = float(c @ d)
        psi = math.expm1(x) / x if abs(x) > 1e-12 else 1.0 + x / 2
        total += (c[0] * d[1] - c[1] * d[0]) * math.exp(float(c @ p)) * psi
    return total / cc


def _rect_cell_probs(grid: GridMap, sens: Sensitivity, s: int, eps: float, mechanism: str) -> np.ndarray:
    """Mass of the planar noise over each cell's snapping rectangle.

    Map snapping clamps per axis, so each cell's region is an axis-aligned
    (possibly unbounded) rectangle. P-LM is separable and done per axis. For
    P-PIM the rectangle is cut along the rays through the hull vertices; on
    each wedge the gauge is linear and the density integrates in closed form.
    """
    p0 = grid.centers[s]
    cs = grid.cell_size
    bx = grid.origin[0] + (np.arange(grid.width - 1) + 0.5) * cs
    by = grid.origin[1] + (np.arange(grid.height - 1) + 0.5) * cs
    if mechanism == PLM:
        b = sens.l1 / eps
        px = np.diff(_laplace_cdf(np.concatenate([[-np.inf], bx - p0[0], [np.inf]]), b))
        py = np.diff(_laplace_cdf(np.concatenate([[-np.inf], by - p0[1], [np.inf]]), b))
        return np.outer(py, px).ravel()
    hull = sens.hull
    # ||Y||_K ~ Gamma(2, 1/eps): P(||Y||_K > t) = exp(-eps t)(1 + eps t)
    t = 1.0
    while math.exp(-eps * t) * (1 + eps * t) > _TAIL:
        t *= 1.5
    reach = np.abs(hull.vertices).max(axis=0) * t
    # outer cells are unbounded; cut them where the tail mass is negligible
    xs = np.concatenate([[min(p0[0] - reach[0], *bx[:1])], bx, [max(p0[0] + reach[0], *bx[-1:])]])
    ys = np.concatenate([[min(p0[1] - reach[1], *by[:1])], by, [max(p0[1] + reach[1], *by[-1:])]])
    verts = hull.vertices
    normals, offsets, _ = hull._facets
    m = len(verts)
    scale = eps * eps / (2 * hull.area)
    out = np.zeros(grid.n)
    for row in range(grid.height):
        for col in range(grid.width):
            x0, x1, y0, y1 = xs[col] - p0[0], xs[col + 1] - p0[0], ys[row] - p0[1], ys[row + 1] - p0[1]
            if x1 <= x0 or y1 <= y0:
                continue
            rect = [np.array(v) for v in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
            mass = 0.0
            for i in range(m):
                a, b = verts[i], verts[(i + 1) % m]
                # wedge between rays a and b: cross(a, y) >= 0 and cross(y, b) >= 0
                piece = _clip(rect, np.array([-a[1], a[0]]), 0.0)
                if len(piece) >= 3:
                    piece = _clip(piece, np.array([b[1], -b[0]]), 0.0)
                if len(piece) >= 3:
                    mass += _exp_linear_integral(piece, -eps * normals[i] / offsets[i])
            out[row * grid.width + col] = scale * mass
    return out
