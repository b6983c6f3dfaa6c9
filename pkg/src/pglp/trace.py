"""Private trajectory release against a Markov-aware adversary.

Per timestamp: propagate the adversary's belief through the Markov model,
take its support as the constrained domain, restrict the policy to it, repair
isolated cells, release with the mechanism, then update the belief with the
likelihood of the released cell. Only the release itself reads the truth.
"""

from __future__ import annotations

import csv
import json
import math
import operator
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ModelInconsistencyError
from .exposure import Status, resolve
from .grid import GridMap
from .mechanisms import (
    PPIM, Sensitivity, check_epsilon, check_mechanism, combine_sensitivities, output_distribution,
    sample_noise, sensitivity_from_edges,
)
from .policy import PolicyGraph

SUPPORT_THRESHOLD = 1e-12
_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Row-stochastic transition matrix; rows are renormalised on construction."""

    transition: np.ndarray

    def __post_init__(self):
        m = np.array(self.transition, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DomainError("transition matrix must be square and non-empty")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise DomainError("transition probabilities must be finite and non-negative")
        sums = m.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise DomainError("every transition row needs positive mass")
        m = m / sums
        m.setflags(write=False)
        object.__setattr__(self, "transition", m)

    @property
    def n(self) -> int:
        return self.transition.shape[0]

    def to_dict(self) -> dict:
        return {"n": self.n, "rows": self.transition.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovModel":
        try:
            rows = d["rows"]
        except (KeyError, TypeError):
            raise DomainError("markov descriptor needs 'rows'") from None
        model = cls(np.asarray(rows, dtype=float))
        if "n" in d and int(d["n"]) != model.n:
            raise DomainError("markov descriptor 'n' does not match its rows")
        return model

    @classmethod
    def load(cls, path) -> "MarkovModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def check_belief(p, n: int | None = None) -> np.ndarray:
    b = np.asarray(p, dtype=float)
    if b.ndim != 1 or (n is not None and len(b) != n):
        raise DomainError("belief has the wrong shape")
    if np.any(b < 0) or not np.all(np.isfinite(b)) or abs(b.sum() - 1) > 1e-6:
        raise DomainError("belief must be a probability vector")
    return b / b.sum()


def uniform_belief(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def point_belief(n: int, s: int) -> np.ndarray:
    b = np.zeros(n)
    b[s] = 1.0
    return b


def propagate(model: MarkovModel, posterior) -> np.ndarray:
    """One Markov step of the belief: ``p M``."""
    p = np.asarray(posterior, dtype=float) @ model.transition
    return p / p.sum()


def constrained_domain(prior, threshold: float = SUPPORT_THRESHOLD) -> frozenset:
    dom = frozenset(np.flatnonzero(np.asarray(prior) > threshold).tolist())
    if not dom:
        raise ModelInconsistencyError("belief has empty support")
    return dom


def posterior_update(prior, likelihoods) -> np.ndarray:
    """Bayes rule over cells: ``p[i] * L[i] / sum_j p[j] * L[j]``."""
    p = np.asarray(prior, dtype=float)
    lik = np.asarray(likelihoods, dtype=float)
    if np.any(lik < 0):
        raise DomainError("likelihoods must be non-negative")
    joint = p * lik
    total = joint.sum()
    if not total > 0:
        raise ModelInconsistencyError("observation has zero probability under the prior")
    return joint / total


# -- composition accounting ----------------------------------------------------

@dataclass(frozen=True)
class LedgerEntry:
    t: int
    epsilon: float
    graph: PolicyGraph


@dataclass(frozen=True)
class PrivacyLedger:
    """Immutable record of releases with running (sum of epsilon, edge intersection)."""

    records: tuple = ()
    running_graph: PolicyGraph | None = None

    def append(self, t: int, epsilon: float, graph: PolicyGraph) -> "PrivacyLedger":
        running = graph if self.running_graph is None else self.running_graph & graph
        return PrivacyLedger(self.records + (LedgerEntry(t, float(epsilon), graph),), running)

    @property
    def total_epsilon(self) -> float:
        return math.fsum(r.epsilon for r in self.records)

    def __len__(self):
        return len(self.records)

    def summary(self) -> dict:
        eps, g = compose(self)
        return {
            "releases": len(self.records),
            "total_epsilon": eps,
            "intersection_edges": [list(e) for e in sorted(g.edges)],
        }


def compose(ledger: PrivacyLedger) -> tuple[float, PolicyGraph]:
    """Overall guarantee of the recorded releases: (sum of epsilons, intersection graph)."""
    if not ledger.records:
        raise DomainError("nothing has been released")
    return ledger.total_epsilon, ledger.running_graph


# -- release pipeline ----------------------------------------------------------

@dataclass(frozen=True)
class ReleaseRecord:
    t: int
    released: int
    epsilon: float
    mechanism: str
    domain: frozenset
    graph: PolicyGraph
    repairs: tuple
    isolated: tuple = ()

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "released": self.released,
            "epsilon": self.epsilon,
            "mechanism": self.mechanism,
            "domain": sorted(self.domain),
            "graph_edges": [list(e) for e in sorted(self.graph.edges)],
            "repairs": [list(e) for e in self.repairs],
            "isolated": list(self.isolated),
        }


@dataclass(frozen=True, eq=False)
class TraceState:
    """Everything the adversary and the releaser share between timestamps.

    ``belief`` is the initial belief before the first step and the latest
    posterior afterwards.
    """

    grid: GridMap
    model: MarkovModel
    policy: PolicyGraph
    belief: np.ndarray
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)
    t: int = 0

    @classmethod
    def start(cls, grid, model, policy, initial=None) -> "TraceState":
        if model.n != grid.n or policy.node_count != grid.n:
            raise DomainError("map, Markov model and policy disagree on the number of cells")
        belief = uniform_belief(grid.n) if initial is None else check_belief(initial, grid.n)
        return cls(grid, model, policy, belief)


@dataclass(frozen=True, eq=False)
class ReleasePlan:
    """How each cell of the domain would be released at one timestamp.

    ``groups`` maps a sensitivity to the cells that use it; ``exact`` lists
    cells released without noise because no policy edge reaches them.
    """

    domain: frozenset
    graph: PolicyGraph
    repairs: tuple
    isolated: tuple
    groups: list
    exact: frozenset

    def sensitivity_of(self, s: int) -> Sensitivity | None:
        for sens, cells in self.groups:
            if s in cells:
                return sens
        return None


def plan_release(grid: GridMap, policy: PolicyGraph, domain, *, repair: str = "min-area",
                 hull_scope: str = "component") -> ReleasePlan:
    """Restrict, detect, repair and assign a sensitivity to every cell of ``domain``.

    With ``hull_scope="component"`` cells use their own component's
    sensitivity; disconnected cells found not isolated use K(G^C) over the
    whole constrained graph, which is what covers them. ``hull_scope="graph"``
    makes every protected cell use K(G^C).
    """
    if hull_scope not in ("component", "graph"):
        raise DomainError(f"unknown hull scope {hull_scope!r}")
    dom = frozenset(domain)
    if len(dom) == 1:
        # a single possible cell is already known to the adversary
        gc = policy.restrict(dom)
        return ReleasePlan(dom, gc, (), (), [], dom)
    gc, statuses, repairs = resolve(grid, policy, dom, repair)
    isolated = tuple(s for s, st in statuses.items() if st is Status.ISOLATED)
    by_comp = gc.edges_by_component
    comp_sens = {c: sensitivity_from_edges(grid, es, c) for c, es in by_comp.items()}
    whole = combine_sensitivities([comp_sens[c] for c in sorted(comp_sens, key=min)], gc.nodes) if comp_sens else None
    groups: dict[frozenset, list] = {}
    exact, covered = [], []
    for s in sorted(dom):
        if gc.neighbors(s):
            groups.setdefault(whole.component if hull_scope == "graph" else gc.connected_component(s), []).append(s)
        elif statuses[s] is Status.DISCONNECTED and whole is not None:
            covered.append(s)
        else:
            exact.append(s)
    plan_groups = [(whole if hull_scope == "graph" else comp_sens[comp], frozenset(cells))
                   for comp, cells in groups.items()]
    if covered:
        if hull_scope == "graph" and plan_groups:
            sens, cells = plan_groups[0]
            plan_groups[0] = (sens, cells | frozenset(covered))
        else:
            plan_groups.append((whole, frozenset(covered)))
    return ReleasePlan(dom, gc, tuple(repairs), isolated, plan_groups, frozenset(exact))


def likelihood_vector(grid: GridMap, plan: ReleasePlan, z: int, epsilon: float, mechanism: str, *,
                      restrict_snap: bool = False, method: str = "center") -> np.ndarray:
    """Pr(z | s) for every s in the plan's domain (zero elsewhere)."""
    lik = np.zeros(grid.n)
    for sens, cells in plan.groups:
        src = np.array(sorted(cells), dtype=np.int64)
        rows = output_distribution(grid, sens, src, epsilon, mechanism,
                                   restrict_snap=restrict_snap, method=method)
        lik[src] = rows[:, z]
    for s in plan.exact:
        lik[s] = 1.0 if s == z else 0.0
    return lik


def release_step(state: TraceState, truth, epsilon, mechanism: str, rng, *, repair: str = "min-area",
                 hull_scope: str = "component", restrict_snap: bool = False,
                 likelihood: str = "center") -> tuple[ReleaseRecord, TraceState]:
    """One timestamp of the trace release pipeline.

    ``truth`` is read exactly once, inside the mechanism call, after the
    domain, detection and repair are settled.
    """
    eps = check_epsilon(epsilon)
    check_mechanism(mechanism)
    grid = state.grid
    prior = state.belief if state.t == 0 else propagate(state.model, state.belief)
    dom = constrained_domain(prior)
    plan = plan_release(grid, state.policy, dom, repair=repair, hull_scope=hull_scope)

    s = operator.index(truth)
    if s not in dom:
        raise ModelInconsistencyError(f"true cell {s} has zero probability under the adversary's model")
    sens = plan.sensitivity_of(s)
    if sens is None:
        z = s
    else:
        y = sample_noise(sens, mechanism, eps, rng)
        p = (grid.centers[s] + y)[None, :]
        z = int(grid.snap_within(p, sens.component)[0] if restrict_snap else grid.snap_many(p)[0])

    lik = likelihood_vector(grid, plan, z, eps, mechanism, restrict_snap=restrict_snap, method=likelihood)
    posterior = posterior_update(prior, lik)
    t = state.t + 1
    record = ReleaseRecord(t, z, eps, mechanism, dom, plan.graph, plan.repairs, plan.isolated)
    new_state = replace(state, belief=posterior, ledger=state.ledger.append(t, eps, plan.graph), t=t)
    return record, new_state


def release_trace(state: TraceState, truths, epsilon, mechanism: str = PPIM, rng=None, **kw):
    """Run :func:`release_step` over a whole trajectory; returns (records, final state)."""
    rng = np.random.default_rng() if rng is None else rng
    records = []
    for s in truths:
        rec, state = release_step(state, s, epsilon, mechanism, rng, **kw)
        records.append(rec)
    return records, state


def read_trajectory(path) -> list[int]:
    """``t,cell_index`` CSV (header optional), returned ordered by t."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not "".join(rec).strip():
                continue
            if rec[0].strip().lower() == "t":
                continue
            try:
                rows.append((int(rec[0]), int(rec[1])))
            except (ValueError, IndexError):
                raise DomainError(f"bad trajectory row {rec!r}") from None
    rows.sort()
    return [c for _, c in rows]


def write_trajectory(path, cells) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "cell_index"])
        for t, c in enumerate(cells, start=1):
            w.writerow([t, int(c)])
