"""Policy-graph based location privacy."""

from .errors import (
    ConfigError, DomainError, ModelInconsistencyError, NoSensitivityError, PGLPError, UnrepairableError,
)
from .exposure import (
    Status, classify, disconnected_nodes, is_isolated, repair_min_area, repair_nearest, resolve,
)
from .geometry import ConvexPolygon, contains, convex_hull, hulls_equal, k_norm, polygon_area, sample_uniform
from .grid import GridMap
from .mechanisms import (
    PLM, PPIM, Sensitivity, compute_sensitivity, noise_density, output_distribution, output_likelihood,
    release, release_plm, release_ppim,
)
from .policy import (
    PolicyGraph, build_block, build_g1, build_g2, build_poi, connected_component, graph_distance,
    intersect, neighbors, restrict,
)
from .trace import (
    MarkovModel, PrivacyLedger, ReleaseRecord, TraceState, compose, constrained_domain, posterior_update,
    propagate, release_step, release_trace,
)

__version__ = "0.1.0"

__all__ = [
    "build_block", "build_g1", "build_g2", "build_poi", "classify", "compose", "compute_sensitivity",
    "ConfigError", "connected_component", "constrained_domain", "contains", "convex_hull", "ConvexPolygon",
    "disconnected_nodes", "DomainError", "graph_distance", "GridMap", "hulls_equal", "intersect",
    "is_isolated", "k_norm", "MarkovModel", "ModelInconsistencyError", "neighbors", "noise_density",
    "NoSensitivityError", "output_distribution", "output_likelihood", "PGLPError", "PLM", "PolicyGraph",
    "polygon_area", "posterior_update", "PPIM", "PrivacyLedger", "propagate", "release", "release_plm",
    "release_ppim", "release_step", "release_trace", "ReleaseRecord", "repair_min_area", "repair_nearest",
    "resolve", "restrict", "sample_uniform", "Sensitivity", "Status", "TraceState", "UnrepairableError",
]
