"""Service Match Graph construction, resolution copies and composition checks."""

from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional

from .model import EXACT_PLUGIN, MatchPolicy, Ontology, Request, Service, match_set, matches
from .qos import QosAlgebra

log = logging.getLogger(__name__)

SOURCE = "<source>"
SINK = "<sink>"
ENDPOINTS = (SOURCE, SINK)


class NoSolutionError(Exception):
    """The request outputs cannot all be produced by the registry."""

    def __init__(self, missing):
        self.missing = frozenset(missing)
        super().__init__(f"request outputs not producible: {sorted(self.missing)}")


class InputVertex(NamedTuple):
    service: str
    concept: str

    def __str__(self) -> str:
        return f"{self.service}:{self.concept}"


class Match(NamedTuple):
    """An OI edge: ``output`` of ``provider`` feeds ``input`` of ``consumer``."""

    provider: str
    output: str
    consumer: str
    input: str


class _Base:
    """Structure shared between a graph and all its resolved copies."""

    __slots__ = ("services", "inputs", "providers", "consumers", "members", "layers")

    def __init__(self, services, providers, members, layers):
        self.services: dict[str, Service] = services
        self.providers: dict[InputVertex, dict[str, str]] = providers
        self.inputs: dict[str, tuple] = {
            w: tuple(InputVertex(w, c) for c in sorted(s.inputs)) for w, s in services.items()
        }
        consumers = defaultdict(list)
        for vertex in sorted(providers):
            for p in providers[vertex]:
                consumers[p].append(vertex)
        self.consumers: dict[str, tuple] = {w: tuple(consumers.get(w, ())) for w in services}
        self.members: dict[str, tuple] = members
        self.layers: dict[str, int] = layers


class ServiceMatchGraph:
    """Tripartite graph of services, their input/output vertices and match edges.

    Input vertices are ``(service id, concept)`` pairs. Each input keeps a map
    from provider service to the (lexicographically first) output concept of
    that provider that matches it. ``resolve`` returns a copy in which some
    inputs are fixed to a single provider; the structure is shared and the
    copy only records the resolved inputs.
    """

    def __init__(self, services: Mapping[str, Service], providers: Mapping[InputVertex, Mapping[str, str]],
                 ontology: Optional[Ontology] = None, policy: MatchPolicy = EXACT_PLUGIN,
                 members: Optional[Mapping[str, Iterable[str]]] = None,
                 layers: Optional[Mapping[str, int]] = None):
        if SOURCE not in services or SINK not in services:
            raise ValueError("a match graph needs both the source and the sink service")
        services = {w: services[w] for w in sorted(services)}
        full = {InputVertex(w, c): {} for w, s in services.items() for c in s.inputs}
        for vertex, parents in providers.items():
            if vertex not in full:
                raise ValueError(f"edge into unknown input {vertex}")
            for p, concept in parents.items():
                if p not in services:
                    raise ValueError(f"edge from unknown service {p!r}")
                if concept not in services[p].outputs:
                    raise ValueError(f"{p!r} has no output {concept!r}")
            full[vertex] = {p: parents[p] for p in sorted(parents)}
        members = {w: tuple(members.get(w, (w,))) if members else (w,) for w in services}
        self._base = _Base(services, full, members, dict(layers or {}))
        self._resolved: dict[InputVertex, str] = {}
        self.ontology = ontology
        self.policy = policy

    @classmethod
    def _view(cls, base, resolved, ontology, policy) -> "ServiceMatchGraph":
        g = cls.__new__(cls)
        g._base = base
        g._resolved = resolved
        g.ontology = ontology
        g.policy = policy
        return g

    source = SOURCE
    sink = SINK

    @property
    def services(self) -> tuple:
        return tuple(self._base.services)

    def service(self, w: str) -> Service:
        return self._base.services[w]

    def __contains__(self, w: object) -> bool:
        return w in self._base.services

    def inputs(self, w: str) -> tuple:
        return self._base.inputs[w]

    def outputs(self, w: str) -> frozenset:
        return self._base.services[w].outputs

    def members(self, w: str) -> tuple:
        return self._base.members[w]

    def layer(self, w: str) -> Optional[int]:
        return self._base.layers.get(w)

    @property
    def input_vertices(self):
        return self._base.providers.keys()

    def providers(self, vertex: InputVertex) -> dict:
        chosen = self._resolved.get(vertex)
        parents = self._base.providers[vertex]
        if chosen is None:
            return parents
        return {chosen: parents[chosen]}

    def indegree(self, vertex: InputVertex) -> int:
        if vertex in self._resolved:
            return 1
        return len(self._base.providers[vertex])

    def consumers(self, w: str) -> list:
        """Input vertices currently fed by an output of ``w``."""
        resolved = self._resolved
        if not resolved:
            return list(self._base.consumers[w])
        return [i for i in self._base.consumers[w] if resolved.get(i, w) == w]

    def is_resolved(self, vertex: InputVertex) -> bool:
        return vertex in self._resolved

    @property
    def resolved(self) -> Mapping[InputVertex, str]:
        return dict(self._resolved)

    def edges(self):
        for vertex in self._base.providers:
            for p, concept in self.providers(vertex).items():
                yield Match(p, concept, vertex.service, vertex.concept)

    def cost(self, w: str, algebra: QosAlgebra) -> float:
        """Own QoS of a service; source and sink cost the identity."""
        if w in ENDPOINTS:
            return algebra.identity
        try:
            return float(self._base.services[w].qos[algebra.criterion])
        except KeyError:
            raise ValueError(f"service {w!r} has no {algebra.criterion} value") from None

    def service_count(self) -> int:
        return len(self._base.services) - 2

    def resolve(self, w: str, inputs: Iterable[InputVertex]) -> "ServiceMatchGraph":
        """Copy of this graph where each of ``inputs`` is matched only by ``w``."""
        resolved = dict(self._resolved)
        for vertex in inputs:
            if w not in self.providers(vertex):
                raise ValueError(f"{w!r} does not match input {vertex}")
            resolved[vertex] = w
        return self._view(self._base, resolved, self.ontology, self.policy)

    def subgraph(self, keep: Iterable[str], members: Optional[Mapping[str, Iterable[str]]] = None
                 ) -> "ServiceMatchGraph":
        """New graph restricted to ``keep`` (endpoints are always kept).

        Resolutions whose provider survives are carried over.
        """
        keep = set(keep) | set(ENDPOINTS)
        base = self._base
        services = {w: s for w, s in base.services.items() if w in keep}
        providers = {}
        for vertex, parents in base.providers.items():
            if vertex.service in keep:
                providers[vertex] = {p: c for p, c in parents.items() if p in keep}
        merged = {w: base.members[w] for w in services}
        if members:
            merged.update({w: tuple(m) for w, m in members.items() if w in services})
        g = ServiceMatchGraph.__new__(ServiceMatchGraph)
        g._base = _Base(services, providers, merged, {w: l for w, l in base.layers.items() if w in keep})
        g._resolved = {i: p for i, p in self._resolved.items() if i.service in keep and p in keep}
        g.ontology = self.ontology
        g.policy = self.policy
        return g

    def __repr__(self) -> str:
        n_edges = sum(len(p) for p in self._base.providers.values())
        return f"<ServiceMatchGraph services={self.service_count()} edges={n_edges} resolved={len(self._resolved)}>"


def _endpoints(request: Request) -> tuple[Service, Service]:
    return (Service(SOURCE, frozenset(), request.provided, {}),
            Service(SINK, request.wanted, frozenset(), {}))


def compute_all_matches(ontology: Ontology, selected: Iterable[Service],
                        policy: MatchPolicy = EXACT_PLUGIN) -> dict:
    """Every output/input match among ``selected``, with no layer restriction.

    Returns ``{InputVertex: {provider id: output concept}}``; when several
    outputs of one provider match an input the lexicographically first is kept.
    """
    selected = sorted(selected, key=lambda s: s.id)
    by_concept = defaultdict(list)
    providers: dict[InputVertex, dict[str, str]] = {}
    for s in selected:
        for c in sorted(s.inputs):
            vertex = InputVertex(s.id, c)
            by_concept[c].append(vertex)
            providers[vertex] = {}
    for s in selected:
        for out in sorted(s.outputs):
            for concept in ontology.matched_by(out, policy):
                for vertex in by_concept.get(concept, ()):
                    providers[vertex].setdefault(s.id, out)
    return providers


def build_match_graph(ontology: Ontology, request: Request, registry: Iterable[Service],
                      policy: MatchPolicy = EXACT_PLUGIN) -> ServiceMatchGraph:
    """Layered forward expansion from the request inputs, then all matches.

    A service is selected in a layer once every one of its inputs is matched by
    concepts available from earlier layers.
    """
    request.check(ontology)
    registry = list(registry)
    by_id = {}
    for s in registry:
        if s.id in ENDPOINTS:
            raise ValueError(f"service id {s.id!r} is reserved")
        if s.id in by_id:
            raise ValueError(f"duplicate service id {s.id!r}")
        s.check(ontology)
        by_id[s.id] = s

    wanted_by = defaultdict(list)
    unmatched = {}
    for s in registry:
        unmatched[s.id] = set(s.inputs)
        for c in s.inputs:
            wanted_by[c].append(s.id)

    available: set = set()
    new = set(request.provided)
    remaining = set(by_id)
    layers = {SOURCE: 0}
    layer = 1
    free = sorted(w for w in remaining if not unmatched[w])
    while True:
        touched = set()
        for c in new:
            for concept in ontology.matched_by(c, policy):
                for w in wanted_by.get(concept, ()):
                    if w in remaining and concept in unmatched[w]:
                        unmatched[w].discard(concept)
                        touched.add(w)
        available |= new
        chosen = sorted({w for w in touched if not unmatched[w]} | set(free))
        free = ()
        if not chosen:
            break
        new = set()
        for w in chosen:
            remaining.discard(w)
            layers[w] = layer
            new |= by_id[w].outputs
        new -= available
        layer += 1

    covered = match_set(ontology, available, request.wanted, policy)
    if covered != request.wanted:
        raise NoSolutionError(request.wanted - covered)
    layers[SINK] = layer
    source, sink = _endpoints(request)
    services = {SOURCE: source, SINK: sink}
    services.update((w, by_id[w]) for w in layers if w not in ENDPOINTS)
    providers = compute_all_matches(ontology, services.values(), policy)
    log.debug("match graph: %d services in %d layers", len(services) - 2, layer)
    return ServiceMatchGraph(services, providers, ontology, policy, layers=layers)


@dataclass(frozen=True)
class Composition:
    """A candidate Service Composition Graph: retained services plus match edges."""

    services: frozenset
    matches: tuple

    def __post_init__(self):
        object.__setattr__(self, "services", frozenset(self.services) | {SOURCE, SINK})
        object.__setattr__(self, "matches", tuple(sorted(Match(*m) for m in self.matches)))

    @classmethod
    def from_resolved(cls, graph: ServiceMatchGraph, selected: Iterable[str]) -> "Composition":
        """Composition formed by ``selected`` services and their single providers."""
        selected = set(selected) | {SINK}
        edges = []
        used = set(selected)
        for w in selected:
            for vertex in graph.inputs(w):
                parents = graph.providers(vertex)
                if len(parents) != 1:
                    raise ValueError(f"input {vertex} is not resolved")
                (p, concept), = parents.items()
                used.add(p)
                edges.append(Match(p, concept, w, vertex.concept))
        return cls(frozenset(used), tuple(edges))

    @property
    def service_ids(self) -> tuple:
        return tuple(sorted(self.services - set(ENDPOINTS)))


def service_count(g) -> int:
    """Number of services excluding the source and the sink."""
    if isinstance(g, ServiceMatchGraph):
        return g.service_count()
    return len(g.service_ids)


@dataclass
class ValidationReport:
    valid: bool
    violations: list = field(default_factory=list)
    unmatched_inputs: list = field(default_factory=list)
    multi_matched_inputs: list = field(default_factory=list)
    invalid_edges: list = field(default_factory=list)
    cycle: list = field(default_factory=list)
    qos: Optional[float] = None
    service_count: int = 0


def _find_cycle(nodes, deps) -> list:
    """A dependency cycle as a node list, or [] if ``deps`` is acyclic."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    for root in sorted(nodes):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(deps.get(root, ()))))]
        path = [root]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
                path.pop()
            elif color.get(nxt) == GREY:
                return path[path.index(nxt):] + [nxt]
            elif color.get(nxt) == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(sorted(deps.get(nxt, ())))))
    return []


def validate_composition(graph: ServiceMatchGraph, composition: Composition,
                         algebra: QosAlgebra) -> ValidationReport:
    """Check the composition conditions against ``graph`` and recompute its QoS.

    Every input of a retained service must be matched by exactly one retained
    output, matches must be real semantic matches of the graph, and the service
    dependencies must be acyclic.
    """
    report = ValidationReport(valid=True, service_count=len(composition.service_ids))
    retained = composition.services
    for w in sorted(retained):
        if w not in graph:
            report.violations.append(f"unknown service {w!r}")
    incoming = defaultdict(list)
    for m in composition.matches:
        vertex = InputVertex(m.consumer, m.input)
        problem = None
        if m.provider not in retained or m.consumer not in retained:
            problem = "endpoint service not in composition"
        elif m.provider not in graph or m.consumer not in graph:
            problem = "unknown service"
        elif m.input not in graph.service(m.consumer).inputs:
            problem = f"{m.consumer!r} has no input {m.input!r}"
        elif m.output not in graph.service(m.provider).outputs:
            problem = f"{m.provider!r} has no output {m.output!r}"
        elif graph.ontology is not None and not matches(graph.ontology, m.output, m.input, graph.policy):
            problem = f"{m.output!r} does not match {m.input!r}"
        elif graph.ontology is None and m.provider not in graph._base.providers[vertex]:
            problem = "no such match edge"
        if problem:
            report.invalid_edges.append(m)
            report.violations.append(f"invalid match {m.provider}.{m.output} -> {vertex}: {problem}")
            continue
        incoming[vertex].append(m)
    for w in sorted(retained):
        if w not in graph:
            continue
        for vertex in graph.inputs(w):
            n = len(incoming.get(vertex, ()))
            if n == 0:
                report.unmatched_inputs.append(vertex)
                report.violations.append(f"input {vertex} is not matched")
            elif n > 1:
                report.multi_matched_inputs.append(vertex)
                report.violations.append(f"input {vertex} is matched {n} times")
    deps = defaultdict(set)
    for vertex, ms in incoming.items():
        for m in ms:
            deps[m.consumer].add(m.provider)
    known = [w for w in retained if w in graph]
    report.cycle = _find_cycle(known, deps)
    if report.cycle:
        report.violations.append("dependency cycle: " + " -> ".join(report.cycle))
    report.valid = not report.violations
    if report.valid:
        report.qos = _evaluate(graph, known, incoming, algebra)
    return report


def _evaluate(graph, services, incoming, algebra) -> float:
    """Aggregated QoS of the sink by topological evaluation of a valid composition."""
    deps = {w: [ms[0].provider for v, ms in incoming.items() if v.service == w] for w in services}
    order = []
    indeg = {w: len(set(deps[w])) for w in services}
    users = defaultdict(set)
    for w, ps in deps.items():
        for p in ps:
            users[p].add(w)
    queue = deque(sorted(w for w in services if indeg[w] == 0))
    while queue:
        w = queue.popleft()
        order.append(w)
        for u in sorted(users[w]):
            indeg[u] -= 1
            if indeg[u] == 0:
                queue.append(u)
    value = {}
    for w in order:
        cost = graph.cost(w, algebra)
        if deps[w]:
            value[w] = algebra.aggregate(algebra.worst(value[p] for p in deps[w]), cost)
        else:
            value[w] = cost
    return value[SINK]
