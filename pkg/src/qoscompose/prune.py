"""Admissible graph reductions applied before extracting a composition.

Passes, cheapest first:

1. drop services that cannot reach the sink;
2. drop services whose aggregated QoS exceeds every bound they could serve;
3. merge interface- and QoS-equivalent services into one abstract service;
4. drop services dominated by another service.

Each pass returns a new graph; none of them changes the optimal QoS or the
minimum number of services of an optimal composition.
"""

from __future__ import annotations

import time
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field

from .graph import ENDPOINTS, SINK, SOURCE, ServiceMatchGraph
from .qos import QosAlgebra
from .search import QosTable, qos_update


@dataclass
class PassReport:
    name: str
    services_before: int
    services_after: int
    inputs_removed: int = 0
    outputs_removed: int = 0
    merges: int = 0
    seconds: float = 0.0


@dataclass
class PruneReport:
    passes: list = field(default_factory=list)

    @property
    def services_before(self) -> int:
        return self.passes[0].services_before if self.passes else 0

    @property
    def services_after(self) -> int:
        return self.passes[-1].services_after if self.passes else 0

    def extend(self, other: "PruneReport") -> None:
        self.passes.extend(other.passes)

    def to_dict(self) -> dict:
        return {
            "servicesBefore": self.services_before,
            "servicesAfter": self.services_after,
            "passes": [asdict(p) for p in self.passes],
        }


def _shrink(g: ServiceMatchGraph, keep, name: str, started: float, members=None, merges=0):
    removed = [w for w in g.services if w not in keep and w not in ENDPOINTS]
    out = g.subgraph(keep, members)
    report = PassReport(
        name=name,
        services_before=g.service_count(),
        services_after=out.service_count(),
        inputs_removed=sum(len(g.inputs(w)) for w in removed),
        outputs_removed=sum(len(g.outputs(w)) for w in removed),
        merges=merges,
        seconds=time.monotonic() - started,
    )
    return out, PruneReport([report])


def prune_unreachable(g: ServiceMatchGraph):
    """Keep only services whose outputs lead, through matches, to the sink."""
    started = time.monotonic()
    keep = {SINK}
    queue = deque([SINK])
    while queue:
        w = queue.popleft()
        for vertex in g.inputs(w):
            for p in g.providers(vertex):
                if p not in keep:
                    keep.add(p)
                    queue.append(p)
    return _shrink(g, keep, "unreachable", started)


def compute_max_bounds(g: ServiceMatchGraph, algebra: QosAlgebra, qos: QosTable = None) -> dict:
    """Maximum admissible aggregated QoS for every input that can reach the sink.

    The sink's inputs get ``V(sink) - F(sink)``; the inputs of any other service
    get the worst bound among the inputs its outputs match, minus its own QoS.
    Computed as a label-correcting fixpoint since the graph may be cyclic.
    """
    if qos is None:
        qos = qos_update(g, algebra)
    bounds = {}
    service_bound = {}
    top = algebra.subtract(qos.optimum(), g.cost(SINK, algebra))
    service_bound[SINK] = top
    pending = deque()
    queued = set()
    for vertex in g.inputs(SINK):
        bounds[vertex] = top
        for p in g.providers(vertex):
            if p not in queued:
                queued.add(p)
                pending.append(p)
    while pending:
        w = pending.popleft()
        queued.discard(w)
        served = [bounds[i] for i in g.consumers(w) if i in bounds]
        if not served:
            continue
        b = algebra.subtract(algebra.worst(served), g.cost(w, algebra))
        old = service_bound.get(w)
        if old is not None and not algebra.lt(old, b):
            continue
        service_bound[w] = b
        for vertex in g.inputs(w):
            bounds[vertex] = b
            for p in g.providers(vertex):
                if p not in queued:
                    queued.add(p)
                    pending.append(p)
    return bounds


def prune_suboptimal(g: ServiceMatchGraph, algebra: QosAlgebra, qos: QosTable = None,
                     bounds: dict = None):
    """Remove services that exceed the bound of every input they match.

    A service exactly on a bound is kept. Services left without a path to the
    sink are removed as well.
    """
    started = time.monotonic()
    if qos is None:
        qos = qos_update(g, algebra)
    if bounds is None:
        bounds = compute_max_bounds(g, algebra, qos)
    keep = set(ENDPOINTS)
    for w in g.services:
        if w in ENDPOINTS:
            continue
        value = qos.services[w]
        if any(i in bounds and algebra.le(value, bounds[i]) for i in g.consumers(w)):
            keep.add(w)
    out, report = _shrink(g, keep, "suboptimal", started)
    out, cascade = prune_unreachable(out)
    report.passes[0].services_after = out.service_count()
    report.passes[0].inputs_removed += cascade.passes[0].inputs_removed
    report.passes[0].outputs_removed += cascade.passes[0].outputs_removed
    report.passes[0].seconds = time.monotonic() - started
    return out, report


def _provider_sets(g: ServiceMatchGraph) -> dict:
    return {w: [frozenset(g.providers(i)) for i in g.inputs(w)] for w in g.services}


def combine_equivalent(g: ServiceMatchGraph, algebra: QosAlgebra):
    """Merge services with identical input provider sets, consumer sets and own QoS.

    The lexicographically smallest member becomes the representative and
    carries the member list.
    """
    started = time.monotonic()
    inputs = _provider_sets(g)
    groups = defaultdict(list)
    for w in g.services:
        if w in ENDPOINTS:
            continue
        signature = (frozenset(inputs[w]), frozenset(g.consumers(w)), g.cost(w, algebra))
        groups[signature].append(w)
    keep = set(ENDPOINTS)
    members = {}
    merges = 0
    for group in groups.values():
        group.sort()
        keep.add(group[0])
        if len(group) > 1:
            merges += len(group) - 1
            merged = []
            for w in group:
                merged.extend(g.members(w))
            members[group[0]] = tuple(sorted(merged))
    return _shrink(g, keep, "equivalent", started, members=members, merges=merges)


def _requires_less(a_sets, b_sets) -> bool:
    """Every input of ``a`` can be fed by whatever feeds some input of ``b``."""
    return all(any(pb <= pa for pb in b_sets) for pa in a_sets)


def dominates(g: ServiceMatchGraph, algebra: QosAlgebra, w1: str, w2: str, inputs=None) -> bool:
    """``w1`` needs no more, feeds no less and costs no more than ``w2``, and is
    strictly better in one of the three (ties go to the smaller id)."""
    if inputs is None:
        inputs = _provider_sets(g)
    if w1 == w2 or w2 in ENDPOINTS or w1 == SINK:
        return False
    c1, c2 = set(g.consumers(w1)), set(g.consumers(w2))
    if not c2 <= c1:
        return False
    f1, f2 = g.cost(w1, algebra), g.cost(w2, algebra)
    if not algebra.le(f1, f2):
        return False
    if not _requires_less(inputs[w1], inputs[w2]):
        return False
    strict = (c1 != c2 or algebra.lt(f1, f2)
              or not _requires_less(inputs[w2], inputs[w1]))
    return strict or w1 == SOURCE or w1 < w2


def remove_dominated(g: ServiceMatchGraph, algebra: QosAlgebra):
    """Iteratively drop dominated services until no dominance remains."""
    started = time.monotonic()
    current = g
    while True:
        inputs = _provider_sets(current)
        doomed = set()
        for w2 in current.services:
            if w2 in ENDPOINTS:
                continue
            fed = current.consumers(w2)
            if not fed:
                doomed.add(w2)
                continue
            # A dominator must feed every consumer of w2, in particular the
            # one with the fewest providers.
            anchor = min(fed, key=lambda i: (current.indegree(i), i))
            for w1 in current.providers(anchor):
                if dominates(current, algebra, w1, w2, inputs):
                    doomed.add(w2)
                    break
        if not doomed:
            break
        current = current.subgraph(w for w in current.services if w not in doomed)
    out, report = _shrink(g, set(current.services), "dominated", started)
    return out, report


def optimize_pipeline(g: ServiceMatchGraph, algebra: QosAlgebra):
    """Apply the four passes in order, repeating until the graph stops shrinking."""
    report = PruneReport()
    current = g
    while True:
        before = current.service_count()
        current, r = prune_unreachable(current)
        report.extend(r)
        current, r = prune_suboptimal(current, algebra)
        report.extend(r)
        current, r = combine_equivalent(current, algebra)
        report.extend(r)
        current, r = remove_dominated(current, algebra)
        report.extend(r)
        if current.service_count() == before:
            return current, report
