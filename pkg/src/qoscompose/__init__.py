"""QoS-aware automatic service composition over semantic service registries."""

from .graph import Composition, NoSolutionError, ServiceMatchGraph, build_match_graph, validate_composition
from .model import EXACT_PLUGIN, SUBSUME_POLICY, MatchDegree, MatchPolicy, Ontology, Request, Service
from .prune import optimize_pipeline
from .qos import algebra_for, response_time_algebra, throughput_algebra
from .search import Deadline, global_search, hybrid_search, local_search, qos_update

__version__ = "0.1.0"
