"""Utility metrics, synthetic data and the experiment harness.

Random streams are derived from one master seed with
``np.random.SeedSequence(seed, spawn_key=key)`` using these keys:

* ``(0, rep)``            true cell of repetition ``rep`` (single-release mode)
* ``(1, m, e, rep)``      noise for mechanism ``m``, epsilon index ``e``
* ``(2, user)``           synthetic trajectory of ``user`` (trace mode)
* ``(3, m, e, user)``     release noise of ``user`` (trace mode)
* ``(4,)``                synthetic Markov model; ``(5,)`` synthetic categories

Keys do not include the policy, so policies are compared on common random
numbers, and no key depends on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, PGLPError
from .grid import GridMap
from .mechanisms import MECHANISMS, Sensitivity, check_epsilon, compute_sensitivity, release_many
from .policy import UNCATEGORIZED, block_index, from_descriptor, load_categories
from .trace import MarkovModel, TraceState, check_belief, point_belief, release_trace, uniform_belief

CSV_HEADER = ["policy", "mechanism", "epsilon", "metric", "mean", "stderr", "runtime_ms"]
METRICS = ("eeu", "er", "epoi")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


# -- metrics ---------------------------------------------------------------------

@dataclass(frozen=True)
class RegionPartition:
    """k x k tiling of the grid anchored at cell 0."""

    grid: GridMap
    side: int = 5

    def __post_init__(self):
        object.__setattr__(self, "_index", block_index(self.grid, self.side))

    def region(self, s) -> int:
        return int(self._index[self.grid.check(s)])

    def regions(self, cells) -> np.ndarray:
        return self._index[np.asarray(cells, dtype=np.int64)]


def metric_eeu(grid: GridMap, truth, released) -> float | np.ndarray:
    """Euclidean error (km) between true and released cell centres."""
    if np.ndim(truth) == 0 and np.ndim(released) == 0:
        return grid.distance(truth, released)
    d = grid.centers[np.asarray(released, dtype=np.int64)] - grid.centers[np.asarray(truth, dtype=np.int64)]
    return np.hypot(d[:, 0], d[:, 1])


def metric_er(partition: RegionPartition, truth, released) -> int | np.ndarray:
    """0 when both cells fall in the same region, else 1."""
    if np.ndim(truth) == 0 and np.ndim(released) == 0:
        return int(partition.region(truth) != partition.region(released))
    return (partition.regions(truth) != partition.regions(released)).astype(int)


def metric_epoi(categories: Mapping, truth, released) -> int | np.ndarray:
    """0 when both cells carry the same category label, else 1."""
    if np.ndim(truth) == 0 and np.ndim(released) == 0:
        return int(categories.get(int(truth), UNCATEGORIZED) != categories.get(int(released), UNCATEGORIZED))
    return np.array([metric_epoi(categories, a, b) for a, b in zip(np.ravel(truth), np.ravel(released))], dtype=int)


# -- Markov models ------------------------------------------------------------

def learn_markov(trajectories: Sequence[Sequence[int]], n: int, alpha: float = 0.0) -> MarkovModel:
    """Maximum-likelihood transitions with add-``alpha`` smoothing.

    Rows without any observed transition (and zero smoothing) become uniform.
    """
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    counts = np.zeros((n, n))
    seen = 0
    for traj in trajectories:
        a = np.asarray(traj, dtype=np.int64)
        if len(a) and (a.min() < 0 or a.max() >= n):
            raise DomainError("trajectory cell outside the model")
        if len(a) > 1:
            np.add.at(counts, (a[:-1], a[1:]), 1)
            seen += len(a) - 1
    if seen == 0:
        raise DomainError("no transitions observed")
    counts += alpha
    empty = counts.sum(axis=1) == 0
    counts[empty] = 1.0
    return MarkovModel(counts)


def simulate_trajectory(model: MarkovModel, initial, length: int, rng) -> list[int]:
    """s_1 ~ initial, s_{t+1} ~ row s_t."""
    init = check_belief(initial, model.n)
    if length <= 0:
        return []
    cdf = np.cumsum(model.transition, axis=1)
    s = int(rng.choice(model.n, p=init))
    out = [s]
    for u in rng.random(length - 1):
        s = int(min(np.searchsorted(cdf[s], u * cdf[s, -1], side="right"), model.n - 1))
        out.append(s)
    return out


def synthetic_markov(grid: GridMap, rng, radius: int = 1, stay: float = 1.0) -> MarkovModel:
    """Local random-walk mobility: moves to cells within Chebyshev ``radius``
    with random positive weights, plus extra weight ``stay`` on staying put."""
    n = grid.n
    m = np.zeros((n, n))
    cols, rows = np.arange(n) % grid.width, np.arange(n) // grid.width
    for i in range(n):
        near = np.flatnonzero((np.abs(cols - cols[i]) <= radius) & (np.abs(rows - rows[i]) <= radius))
        m[i, near] = rng.random(len(near)) + 0.1
        m[i, i] += stay
    return MarkovModel(m)


def synthetic_categories(grid: GridMap, rng, labels: Mapping[str, float] | None = None) -> dict[int, str]:
    """Random category per cell; leftover probability maps to :data:`UNCATEGORIZED`."""
    labels = {"restaurant": 0.2, "shop": 0.2} if labels is None else dict(labels)
    names = list(labels) + [UNCATEGORIZED]
    probs = np.array(list(labels.values()) + [max(0.0, 1 - sum(labels.values()))])
    picks = rng.choice(len(names), size=grid.n, p=probs / probs.sum())
    return {i: names[k] for i, k in enumerate(picks)}


# -- experiment harness ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    grid: GridMap
    policies: dict
    mechanisms: list = field(default_factory=lambda: list(MECHANISMS))
    epsilons: list = field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 11)])
    repetitions: int = 200
    seed: int = 0
    snapping: str = "map"
    region_size: int = 5
    categories: dict | None = None
    metrics: list = field(default_factory=lambda: ["eeu", "er"])
    mode: str = "single"
    users: int = 20
    length: int = 100
    markov: MarkovModel | None = None
    initial: str = "uniform"

    @classmethod
    def from_dict(cls, d: Mapping, base: Path | None = None) -> "ExperimentConfig":
        base = Path(".") if base is None else Path(base)
        try:
            m = d["map"]
            grid = GridMap.load(base / m) if isinstance(m, str) else GridMap.from_dict(m)
            seed = int(d.get("seed", 0))
            if not 0 <= seed < 2**64:
                raise ConfigError("seed must be a 64-bit unsigned integer")
            cats = d.get("categories")
            if isinstance(cats, str):
                cats = load_categories(_existing(base / cats))
            elif isinstance(cats, Mapping) and "synthetic" in cats:
                cats = synthetic_categories(grid, stream(seed, 5), cats["synthetic"].get("labels"))
            elif cats is not None:
                cats = {int(k): str(v) for k, v in cats.items()}
            policies = {}
            for i, p in enumerate(d["policies"]):
                if isinstance(p, str):
                    with open(_existing(base / p)) as fh:
                        desc = json.load(fh)
                    name = desc.get("name", Path(p).stem)
                else:
                    desc, name = p, p.get("name", f"policy{i}")
                policies[name] = from_descriptor(desc, grid, cats)
            trace = d.get("trace", {})
            markov = trace.get("markov")
            if isinstance(markov, str):
                markov = MarkovModel.load(_existing(base / markov))
            elif isinstance(markov, Mapping):
                markov = MarkovModel.from_dict(markov)
            metrics = list(d.get("metrics", ["eeu", "er"] + (["epoi"] if cats else [])))
            cfg = cls(
                grid=grid,
                policies=policies,
                mechanisms=list(d.get("mechanisms", MECHANISMS)),
                epsilons=[float(e) for e in d.get("epsilons", [0.1 * k for k in range(1, 11)])],
                repetitions=int(d.get("repetitions", 200)),
                seed=seed,
                snapping=d.get("snapping", "map"),
                region_size=int(d.get("region_size", 5)),
                categories=cats,
                metrics=metrics,
                mode=d.get("mode", "single"),
                users=int(trace.get("users", 20)),
                length=int(trace.get("length", 100)),
                markov=markov,
                initial=trace.get("initial", "uniform"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc!r}") from None
        except PGLPError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self):
        if not self.policies:
            raise ConfigError("no policies configured")
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ConfigError(f"unknown mechanism {m!r}")
        if not self.epsilons:
            raise ConfigError("no epsilons configured")
        for e in self.epsilons:
            try:
                check_epsilon(e)
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
        if self.repetitions < 1:
            raise ConfigError("repetitions must be positive")
        if self.snapping not in ("map", "component"):
            raise ConfigError("snapping must be 'map' or 'component'")
        for m in self.metrics:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}")
        if "epoi" in self.metrics and not self.categories:
            raise ConfigError("metric 'epoi' needs a category mapping")
        if self.mode not in ("single", "trace"):
            raise ConfigError("mode must be 'single' or 'trace'")
        if self.initial not in ("uniform", "point"):
            raise ConfigError("initial must be 'uniform' or 'point'")


def _existing(path: Path) -> Path:
    if not path.exists():
        raise ConfigError(f"missing file: {path}")
    return path


@dataclass
class ExperimentResult:
    rows: list
    samples: dict
    per_timestamp: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r[k] if r[k] is not None else "" for k in CSV_HEADER])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "per_timestamp": self.per_timestamp}, indent=1, sort_keys=True)


def _metric_values(cfg: ExperimentConfig, partition, truths, released) -> dict:
    out = {}
    for m in cfg.metrics:
        if m == "eeu":
            out[m] = metric_eeu(cfg.grid, truths, released)
        elif m == "er":
            out[m] = metric_er(partition, truths, released)
        else:
            out[m] = metric_epoi(cfg.categories, truths, released)
    return out


def _summary(vals: np.ndarray) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    mean = math.fsum(vals) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean, se


def run_experiment(config: ExperimentConfig | Mapping, timing: bool = False) -> ExperimentResult:
    """Average utility metrics for every (policy, mechanism, epsilon).

    ``runtime_ms`` is filled only when ``timing`` is set, so that untimed
    results are reproducible byte for byte.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    if cfg.mode == "trace":
        return _run_trace_experiment(cfg, timing)
    grid = cfg.grid
    partition = RegionPartition(grid, cfg.region_size)
    truths = np.array([stream(cfg.seed, 0, r).integers(grid.n) for r in range(cfg.repetitions)])
    rows, samples = [], {}
    restrict = cfg.snapping == "component"
    for pname, g in cfg.policies.items():
        sens_cache: dict[frozenset, Sensitivity | None] = {}
        for s in np.unique(truths):
            comp = g.connected_component(int(s))
            if comp not in sens_cache:
                sens_cache[comp] = compute_sensitivity(grid, g, int(s)) if len(comp) > 1 else None
        for mi, mech in enumerate(cfg.mechanisms):
            for ei, eps in enumerate(cfg.epsilons):
                t0 = time.perf_counter()
                released = np.empty(cfg.repetitions, dtype=np.int64)
                for r, s in enumerate(truths):
                    sens = sens_cache[g.connected_component(int(s))]
                    if sens is None:
                        released[r] = s
                    else:
                        released[r] = release_many(grid, sens, [s], eps, stream(cfg.seed, 1, mi, ei, r),
                                                   mech, restrict_snap=restrict)[0]
                elapsed = (time.perf_counter() - t0) * 1000
                for metric, vals in _metric_values(cfg, partition, truths, released).items():
                    samples[(pname, mech, eps, metric)] = np.asarray(vals, dtype=float)
                    mean, se = _summary(vals)
                    rows.append({
                        "policy": pname, "mechanism": mech, "epsilon": eps, "metric": metric,
                        "mean": mean, "stderr": se, "runtime_ms": round(elapsed, 3) if timing else None,
                    })
    return ExperimentResult(rows, samples)


def _run_trace_experiment(cfg: ExperimentConfig, timing: bool) -> ExperimentResult:
    grid = cfg.grid
    partition = RegionPartition(grid, cfg.region_size)
    model = cfg.markov if cfg.markov is not None else synthetic_markov(grid, stream(cfg.seed, 4))
    if model.n != grid.n:
        raise ConfigError("Markov model size does not match the map")
    start = uniform_belief(grid.n)
    trajs = [simulate_trajectory(model, start, cfg.length, stream(cfg.seed, 2, u)) for u in range(cfg.users)]
    rows, samples, per_t = [], {}, {}
    for pname, g in cfg.policies.items():
        for mi, mech in enumerate(cfg.mechanisms):
            for ei, eps in enumerate(cfg.epsilons):
                t0 = time.perf_counter()
                vals: dict[str, list] = {m: [] for m in cfg.metrics}
                for u, traj in enumerate(trajs):
                    init = point_belief(grid.n, traj[0]) if cfg.initial == "point" else None
                    state = TraceState.start(grid, model, g, init)
                    recs, _ = release_trace(state, traj, eps, mech, stream(cfg.seed, 3, mi, ei, u),
                                            restrict_snap=cfg.snapping == "component")
                    rel = np.array([r.released for r in recs])
                    for metric, v in _metric_values(cfg, partition, np.array(traj), rel).items():
                        vals[metric].append(np.asarray(v, dtype=float))
                elapsed = (time.perf_counter() - t0) * 1000
                for metric, per_user in vals.items():
                    arr = np.vstack(per_user)
                    samples[(pname, mech, eps, metric)] = arr
                    per_t[f"{pname}/{mech}/{eps}/{metric}"] = arr.mean(axis=0).tolist()
                    mean, se = _summary(arr.mean(axis=1))
                    rows.append({
                        "policy": pname, "mechanism": mech, "epsilon": eps, "metric": metric,
                        "mean": mean, "stderr": se, "runtime_ms": round(elapsed, 3) if timing else None,
                    })
    return ExperimentResult(rows, samples, per_t)


def load_config(path) -> ExperimentConfig:
    """Experiment config from a JSON or TOML file; relative paths resolve next to it."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing file: {path}")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON in {path}: {exc}") from None
    return ExperimentConfig.from_dict(raw, base=path.parent)
