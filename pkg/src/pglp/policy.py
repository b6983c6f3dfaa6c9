"""Location policy graphs.

A policy graph is an undirected graph over cell indices; an edge ``(u, v)``
demands that the two cells stay indistinguishable after release. Graphs are
immutable values: restriction, intersection and repair all return new graphs.
"""

from __future__ import annotations

import json
import math
from collections import deque
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from .errors import DomainError
from .grid import GridMap

UNCATEGORIZED = "uncategorized"


def _norm_edge(u, v) -> tuple[int, int]:
    u, v = int(u), int(v)
    return (u, v) if u < v else (v, u)


class PolicyGraph:
    """Undirected simple graph on a subset ``nodes`` of ``range(node_count)``.

    ``nodes`` defaults to every cell. Restriction to a constrained domain
    shrinks it; edges always have both endpoints in ``nodes``.
    """

    def __init__(self, node_count: int, edges: Iterable = (), nodes: Iterable | None = None):
        if node_count < 1:
            raise DomainError("node_count must be positive")
        self.node_count = int(node_count)
        if nodes is None:
            self.nodes = frozenset(range(self.node_count))
        else:
            self.nodes = frozenset(int(s) for s in nodes)
            if any(not 0 <= s < self.node_count for s in self.nodes):
                raise DomainError("node index out of range")
        es = set()
        for u, v in edges:
            if u == v:
                raise DomainError(f"self-loop at {u}")
            e = _norm_edge(u, v)
            if e[0] < 0 or e[1] >= self.node_count:
                raise DomainError(f"edge {e} out of range")
            if e[0] not in self.nodes or e[1] not in self.nodes:
                raise DomainError(f"edge {e} leaves the node set")
            es.add(e)
        self.edges = frozenset(es)

    @classmethod
    def _trusted(cls, node_count: int, edges: frozenset, nodes: frozenset) -> "PolicyGraph":
        # edges already normalised and inside nodes; skips validation
        g = cls.__new__(cls)
        g.node_count, g.edges, g.nodes = node_count, edges, nodes
        return g

    @cached_property
    def adjacency(self) -> dict[int, frozenset]:
        adj: dict[int, set] = {}
        for u, v in self.edges:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
        return {k: frozenset(s) for k, s in adj.items()}

    def __eq__(self, other):
        if not isinstance(other, PolicyGraph):
            return NotImplemented
        return (self.node_count, self.nodes, self.edges) == (other.node_count, other.nodes, other.edges)

    def __hash__(self):
        return hash((self.node_count, self.nodes, self.edges))

    def __repr__(self):
        return f"PolicyGraph(node_count={self.node_count}, nodes={len(self.nodes)}, edges={len(self.edges)})"

    def _check(self, s) -> int:
        i = int(s)
        if i != s or not 0 <= i < self.node_count:
            raise DomainError(f"node {s!r} outside [0, {self.node_count})")
        return i

    def neighbors(self, s) -> frozenset:
        return self.adjacency.get(self._check(s), frozenset())

    def degree(self, s) -> int:
        return len(self.neighbors(s))

    def has_edge(self, u, v) -> bool:
        return u != v and _norm_edge(u, v) in self.edges

    def graph_distance(self, a, b) -> float:
        """Hop count of the shortest path; ``math.inf`` when disconnected."""
        a, b = self._check(a), self._check(b)
        if a == b:
            return 0
        adj = self.adjacency
        seen = {a}
        frontier = deque([(a, 0)])
        while frontier:
            u, d = frontier.popleft()
            for w in adj.get(u, ()):
                if w == b:
                    return d + 1
                if w not in seen:
                    seen.add(w)
                    frontier.append((w, d + 1))
        return math.inf

    def connected_component(self, s) -> frozenset:
        s = self._check(s)
        return self._component_of.get(s, frozenset((s,)))

    @cached_property
    def _component_of(self) -> dict[int, frozenset]:
        out: dict[int, frozenset] = {}
        adj = self.adjacency
        for start in adj:
            if start in out:
                continue
            comp = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if w not in comp:
                        comp.add(w)
                        stack.append(w)
            fc = frozenset(comp)
            for u in fc:
                out[u] = fc
        return out

    def components(self) -> list[frozenset]:
        """Components with at least one edge, ordered by smallest member."""
        seen = {}
        for comp in self._component_of.values():
            seen[min(comp)] = comp
        return [seen[k] for k in sorted(seen)]

    @cached_property
    def edges_by_component(self) -> dict[frozenset, frozenset]:
        """Edge set of every component that has edges."""
        comp_of = self._component_of
        out: dict[frozenset, set] = {}
        for e in self.edges:
            out.setdefault(comp_of[e[0]], set()).add(e)
        return {c: frozenset(es) for c, es in out.items()}

    def component_edges(self, s) -> list[tuple[int, int]]:
        comp = self.connected_component(s)
        return sorted(self.edges_by_component.get(comp, ()))

    def restrict(self, domain: Iterable) -> "PolicyGraph":
        """Constrained graph: nodes ``domain``, edges of ``self`` inside it."""
        c = frozenset(int(s) for s in domain)
        if not c:
            raise DomainError("constrained domain is empty")
        if any(not 0 <= s < self.node_count for s in c):
            raise DomainError("constrained domain has out-of-range cells")
        return PolicyGraph._trusted(
            self.node_count, frozenset(e for e in self.edges if e[0] in c and e[1] in c), c)

    def intersect(self, other: "PolicyGraph") -> "PolicyGraph":
        if self.node_count != other.node_count:
            raise DomainError("cannot intersect graphs over different domains")
        return PolicyGraph._trusted(self.node_count, self.edges & other.edges, self.nodes & other.nodes)

    def __and__(self, other):
        return self.intersect(other)

    def with_edges(self, extra: Iterable) -> "PolicyGraph":
        return PolicyGraph(self.node_count, set(self.edges) | {_norm_edge(*e) for e in extra}, nodes=self.nodes)

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def to_dict(self) -> dict:
        d = {"node_count": self.node_count, "edges": [list(e) for e in sorted(self.edges)]}
        if len(self.nodes) != self.node_count:
            d["nodes"] = sorted(self.nodes)
        return d


def neighbors(g: PolicyGraph, s) -> frozenset:
    return g.neighbors(s)


def graph_distance(g: PolicyGraph, a, b) -> float:
    return g.graph_distance(a, b)


def connected_component(g: PolicyGraph, s) -> frozenset:
    return g.connected_component(s)


def restrict(g: PolicyGraph, domain) -> PolicyGraph:
    return g.restrict(domain)


def intersect(g1: PolicyGraph, g2: PolicyGraph) -> PolicyGraph:
    return g1.intersect(g2)


# -- builders ---------------------------------------------------------------

def build_g1(grid: GridMap) -> PolicyGraph:
    """Every cell joined to its (up to) eight surrounding cells."""
    edges = []
    w, h = grid.width, grid.height
    for r in range(h):
        for c in range(w):
            i = r * w + c
            for dc, dr in ((1, 0), (-1, 1), (0, 1), (1, 1)):
                cc, rr = c + dc, r + dr
                if 0 <= cc < w and 0 <= rr < h:
                    edges.append((i, rr * w + cc))
    return PolicyGraph(grid.n, edges)


def build_g2(grid: GridMap, domain: Iterable | None = None) -> PolicyGraph:
    """Complete graph over ``domain`` (default: every cell)."""
    cells = sorted(set(range(grid.n) if domain is None else (grid.check(s) for s in domain)))
    return PolicyGraph(grid.n, combinations(cells, 2))


def block_index(grid: GridMap, k: int) -> np.ndarray:
    """Region index of every cell for a k x k tiling anchored at cell 0."""
    if int(k) != k or k < 1:
        raise DomainError("block side must be a positive integer")
    idx = np.arange(grid.n)
    bc, br = (idx % grid.width) // k, (idx // grid.width) // k
    return br * (-(-grid.width // k)) + bc


def build_block(grid: GridMap, k: int) -> PolicyGraph:
    """Fully connect the cells of every k x k block (G_k9/G_k16/G_k25 for k=3,4,5)."""
    regions = block_index(grid, k)
    edges = []
    for r in np.unique(regions):
        edges.extend(combinations(np.flatnonzero(regions == r).tolist(), 2))
    return PolicyGraph(grid.n, edges)


def build_poi(grid: GridMap, categories: Mapping, region: int = 6) -> PolicyGraph:
    """Fully connect cells sharing both a category and a ``region`` x ``region`` block.

    Cells missing from ``categories`` or labelled :data:`UNCATEGORIZED` get no edges.
    """
    regions = block_index(grid, region)
    groups: dict[tuple, list[int]] = {}
    for cell, label in categories.items():
        cell = grid.check(int(cell))
        if label is None or label == UNCATEGORIZED:
            continue
        groups.setdefault((int(regions[cell]), str(label)), []).append(cell)
    edges = []
    for members in groups.values():
        edges.extend(combinations(sorted(members), 2))
    return PolicyGraph(grid.n, edges)


def load_categories(path) -> dict[int, str]:
    with open(path) as fh:
        raw = json.load(fh)
    return {int(k): str(v) for k, v in raw.items()}


def from_descriptor(desc: Mapping, grid: GridMap, categories: Mapping | None = None) -> PolicyGraph:
    """Build a graph from ``{"builder": ..., params}`` or ``{"edges": [[u, v], ...]}``."""
    if "edges" in desc:
        return PolicyGraph(grid.n, (tuple(e) for e in desc["edges"]), nodes=desc.get("nodes"))
    builder = desc.get("builder")
    if builder == "g1":
        return build_g1(grid)
    if builder == "g2":
        return build_g2(grid, desc.get("domain"))
    if builder == "block":
        return build_block(grid, desc.get("k", 3))
    if builder == "poi":
        cats = desc.get("categories", categories)
        if isinstance(cats, str):
            cats = load_categories(cats)
        if cats is None:
            raise DomainError("poi builder needs a category mapping")
        return build_poi(grid, {int(k): v for k, v in cats.items()}, desc.get("region", 6))
    raise DomainError(f"unknown policy builder {builder!r}")


def load_policy(path, grid: GridMap, categories: Mapping | None = None) -> PolicyGraph:
    with open(path) as fh:
        return from_descriptor(json.load(fh), grid, categories)
