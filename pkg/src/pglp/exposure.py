"""Policy graphs under a constrained domain.

A constrained domain C (the cells an adversary still considers possible)
cuts policy edges. Cells outside C are *excluded*; cells of C whose every
policy neighbour is outside C are *disconnected*. A disconnected cell is
*isolated* when the P-PIM body K(G^C) of the constrained graph does not
cover its offset to any other cell of C, i.e. nothing hides it. Isolated
cells are repaired by adding one edge, chosen to minimise the area of the
resulting sensitivity hull or, as a baseline, to the nearest cell of C.

None of these functions look at the true location.
"""

from __future__ import annotations

import enum
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DomainError, UnrepairableError
from .geometry import ATOL, ConvexPolygon, convex_hull, hulls_equal, polygon_area
from .grid import GridMap
from .mechanisms import difference_vectors
from .policy import PolicyGraph


class Status(str, enum.Enum):
    INCLUDED = "included"
    EXCLUDED = "excluded"
    DISCONNECTED = "disconnected"
    ISOLATED = "isolated"


class Repair(NamedTuple):
    graph: PolicyGraph
    edge: tuple[int, int]


def _domain(g: PolicyGraph, c: Iterable) -> frozenset:
    dom = frozenset(int(s) for s in c)
    if not dom:
        raise DomainError("constrained domain is empty")
    if any(not 0 <= s < g.node_count for s in dom):
        raise DomainError("constrained domain has out-of-range cells")
    return dom


def classify(g: PolicyGraph, c: Iterable) -> dict[int, Status]:
    """Structural status of every node; isolation is left to :func:`is_isolated`."""
    dom = _domain(g, c)
    out = {}
    for s in range(g.node_count):
        if s not in dom:
            out[s] = Status.EXCLUDED
            continue
        nb = g.neighbors(s)
        out[s] = Status.DISCONNECTED if nb and not (nb & dom) else Status.INCLUDED
    return out


def disconnected_nodes(g: PolicyGraph, c: Iterable) -> list[int]:
    return [s for s, st in classify(g, c).items() if st is Status.DISCONNECTED]


def constrained_hull(grid: GridMap, gc: PolicyGraph) -> ConvexPolygon | None:
    """K(G^C): hull of the difference vectors of every edge of ``gc``."""
    if not gc.edges:
        return None
    return convex_hull(difference_vectors(grid, sorted(gc.edges)))


def _augmented(base: np.ndarray, v: np.ndarray) -> ConvexPolygon:
    return convex_hull(np.concatenate([base, v[None, :], -v[None, :]]))


def is_isolated(grid: GridMap, g: PolicyGraph, c: Iterable, s) -> bool:
    """True when adding ``+-(f(s_j) - f(s))`` changes K(G^C) for every other s_j in C.

    ``g`` may be the base policy or an already restricted (and repaired) graph.
    An edgeless constrained graph has no body, so ``s`` counts as isolated.
    """
    dom = _domain(g, c)
    s = grid.check(s)
    K = constrained_hull(grid, g.restrict(dom))
    if K is None:
        return True
    base = K.vertices
    fs = grid.centers[s]
    for j in sorted(dom):
        if j == s:
            continue
        if hulls_equal(_augmented(base, grid.centers[j] - fs), K):
            return False
    return True


def candidate_areas(grid: GridMap, g: PolicyGraph, c: Iterable, s) -> dict[int, float]:
    """Area of K(G^C + edge(s, s_j)) for every candidate s_j in C \\ {s}."""
    dom = _domain(g, c)
    s = grid.check(s)
    K = constrained_hull(grid, g.restrict(dom))
    base = np.empty((0, 2)) if K is None else K.vertices
    fs = grid.centers[s]
    return {j: polygon_area(_augmented(base, grid.centers[j] - fs)) for j in sorted(dom) if j != s}


def _argmin_with_ties(scores: dict[int, float]) -> int:
    best = min(scores.values())
    return min(j for j, a in scores.items() if a <= best + ATOL)


def repair_min_area(grid: GridMap, g: PolicyGraph, c: Iterable, s) -> Repair:
    """Connect ``s`` to the candidate giving the smallest hull area (ties: lowest index)."""
    dom = _domain(g, c)
    s = grid.check(s)
    if len(dom) < 2 or s not in dom:
        raise UnrepairableError(f"no other cell of the domain to connect {s} to")
    best = _argmin_with_ties(candidate_areas(grid, g, dom, s))
    edge = (min(s, best), max(s, best))
    return Repair(g.restrict(dom).with_edges([edge]), edge)


def repair_nearest(grid: GridMap, g: PolicyGraph, c: Iterable, s) -> Repair:
    """Baseline: connect ``s`` to the nearest other cell of C (ties: lowest index)."""
    dom = _domain(g, c)
    s = grid.check(s)
    if len(dom) < 2 or s not in dom:
        raise UnrepairableError(f"no other cell of the domain to connect {s} to")
    cand = np.array(sorted(dom - {s}))
    d = np.hypot(*(grid.centers[cand] - grid.centers[s]).T)
    best = _argmin_with_ties(dict(zip(cand.tolist(), d.tolist())))
    edge = (min(s, best), max(s, best))
    return Repair(g.restrict(dom).with_edges([edge]), edge)


REPAIRS = {"min-area": repair_min_area, "nearest": repair_nearest}


class Resolution(NamedTuple):
    graph: PolicyGraph
    statuses: dict[int, Status]
    repairs: list[tuple[int, int]]


def resolve(grid: GridMap, g: PolicyGraph, c: Iterable, strategy: str = "min-area") -> Resolution:
    """Restrict ``g`` to C, detect isolated nodes and repair them in ascending order.

    Each disconnected node is checked against the graph as repaired so far; a
    node that already gained an edge from an earlier repair is skipped.
    Statuses report isolation as detected before any repair of that node.
    """
    if strategy not in REPAIRS:
        raise DomainError(f"unknown repair strategy {strategy!r}")
    dom = _domain(g, c)
    statuses = classify(g, dom)
    gc = g.restrict(dom)
    repairs = []
    for s in sorted(k for k, st in statuses.items() if st is Status.DISCONNECTED):
        if gc.neighbors(s):
            continue
        if is_isolated(grid, gc, dom, s):
            statuses[s] = Status.ISOLATED
            gc, edge = REPAIRS[strategy](grid, gc, dom, s)
            repairs.append(edge)
    return Resolution(gc, statuses, repairs)
