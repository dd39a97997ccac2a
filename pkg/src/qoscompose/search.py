"""QoS-Update label setting, cycle look-ahead, and the local/global/hybrid searches."""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .graph import SINK, SOURCE, Composition, InputVertex, ServiceMatchGraph, validate_composition
from .qos import QosAlgebra

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECS = 300.0


class SearchFailed(Exception):
    """No composition could be extracted from the graph."""


class TimedOut(Exception):
    """The deadline expired before any solution was found."""

    def __init__(self, message, expanded=0, best_partial=None):
        super().__init__(message)
        self.expanded = expanded
        self.best_partial = best_partial


class Deadline:
    """Wall-clock budget measured with a monotonic clock."""

    def __init__(self, seconds: float = DEFAULT_TIMEOUT_SECS):
        if seconds is None or seconds <= 0:
            raise ValueError("deadline budget must be positive")
        self.seconds = float(seconds)
        self.started = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self.started

    def remaining(self) -> float:
        return max(0.0, self.seconds - self.elapsed())

    def expired(self) -> bool:
        return self.elapsed() >= self.seconds


@dataclass
class QosTable:
    """Best aggregated value per input vertex, plus the derived service values."""

    inputs: dict
    services: dict
    # Settle position of each service and the provider behind each label.
    order: dict = field(default_factory=dict)
    parent: dict = field(default_factory=dict)

    def __getitem__(self, vertex: InputVertex) -> float:
        return self.inputs[vertex]

    def __contains__(self, vertex) -> bool:
        return vertex in self.inputs

    def __len__(self) -> int:
        return len(self.inputs)

    def optimum(self) -> float:
        return self.services[SINK]


def qos_update(graph: ServiceMatchGraph, algebra: QosAlgebra) -> QosTable:
    """Generalized Dijkstra from the source computing every input's best value.

    Services are expanded in best-first order of their aggregated value; stale
    heap entries are skipped on pop. Inputs that stay unreachable keep the zero
    element.
    """
    zero = algebra.zero
    label = {i: zero for i in graph.input_vertices}
    value = {w: zero for w in graph.services}
    seeds = [w for w in graph.services if not graph.inputs(w)]
    for w in seeds:
        value[w] = graph.cost(w, algebra)
    table = QosTable(label, value, {}, {})
    _settle(graph, table, algebra, seeds, set(graph.services))
    return table


def _settle(graph, table, algebra, seeds, open_services):
    """Dijkstra pass over ``open_services`` starting from the tentative ``seeds``."""
    lt, key = algebra.lt, algebra.key
    label, value, order, parent = table.inputs, table.services, table.order, table.parent
    heap = []
    counter = itertools.count()
    for w in sorted(seeds):
        heapq.heappush(heap, (key(value[w]), next(counter), w))
    while heap:
        k, _, w = heapq.heappop(heap)
        if w in order or k != key(value[w]):
            continue
        order[w] = len(order)
        vw = value[w]
        updated = set()
        for i in graph.consumers(w):
            if i.service in open_services and lt(vw, label[i]):
                label[i] = vw
                parent[i] = w
                updated.add(i.service)
        for u in sorted(updated):
            if u in order:
                continue
            worst = algebra.worst(label[i] for i in graph.inputs(u))
            vu = algebra.aggregate(worst, graph.cost(u, algebra))
            if lt(vu, value[u]):
                value[u] = vu
                heapq.heappush(heap, (key(vu), next(counter), u))


def _settled_before(table: QosTable, w: str, u: str) -> bool:
    order = table.order
    return w in order and u in order and order[w] < order[u]


def resolve_and_update(g: ServiceMatchGraph, table: QosTable, w: str, vertex: InputVertex,
                       algebra: QosAlgebra):
    """Resolve ``vertex`` with ``w`` and return the resolved graph with its labels.

    Resolving can only make labels worse. Services whose labels do not trace
    back to the owner of ``vertex`` through label parents keep their values;
    the rest are reset and settled again.
    """
    resolved = g.resolve(w, [vertex])
    owner = vertex.service
    vw = table.services[w]
    if _settled_before(table, w, owner):
        labels = [vw if i == vertex else table[i] for i in g.inputs(owner)]
        value = algebra.aggregate(algebra.worst(labels), g.cost(owner, algebra))
        if value == table.services[owner]:
            inputs, parent = dict(table.inputs), dict(table.parent)
            inputs[vertex] = vw
            parent[vertex] = w
            return resolved, QosTable(inputs, table.services, table.order, parent)
    return resolved, _repair(resolved, table, vertex, algebra)


def _repair(g: ServiceMatchGraph, table: QosTable, vertex: InputVertex, algebra: QosAlgebra):
    parent = table.parent
    affected = {vertex.service}
    queue = [vertex.service]
    while queue:
        a = queue.pop()
        for i in g.consumers(a):
            if parent.get(i) == a and i.service not in affected:
                affected.add(i.service)
                queue.append(i.service)
    zero = algebra.zero
    out = QosTable(dict(table.inputs), dict(table.services),
                   {w: k for w, k in table.order.items() if w not in affected}, dict(parent))
    for u in affected:
        out.services[u] = zero
    for u in affected:
        for i in g.inputs(u):
            if i != vertex and parent.get(i) not in affected:
                continue
            out.inputs[i] = zero
            out.parent.pop(i, None)
            for p in g.providers(i):
                if p not in affected and algebra.lt(out.services[p], out.inputs[i]):
                    out.inputs[i] = out.services[p]
                    out.parent[i] = p
    seeds = []
    for u in affected:
        inputs = g.inputs(u)
        worst = algebra.worst(out.inputs[i] for i in inputs) if inputs else algebra.identity
        vu = algebra.aggregate(worst, g.cost(u, algebra))
        if vu != zero:
            out.services[u] = vu
            seeds.append(u)
    # Settle positions continue after the untouched services.
    base = max(out.order.values(), default=-1) + 1
    order = out.order
    out.order = {}
    _settle(g, out, algebra, seeds, affected)
    order.update({w: base + k for w, k in out.order.items()})
    out.order = order
    return out


def detect_cycle(graph: ServiceMatchGraph, w: str, vertex: InputVertex) -> bool:
    """Whether resolving ``vertex`` with ``w`` closes a dependency cycle.

    Breadth-first walk from the owner of ``vertex`` along resolved matches only
    (inputs with exactly one provider); reaching ``w`` proves a cycle.
    """
    owner = vertex.service
    if owner == w:
        return True
    visited = {owner}
    frontier = [owner]
    while frontier:
        reached = []
        for wn in frontier:
            for i in graph.consumers(wn):
                target = i.service
                if target in visited or graph.indegree(i) != 1:
                    continue
                if target == w:
                    return True
                visited.add(target)
                reached.append(target)
        frontier = reached
    return False


def rank_resolvers(graph: ServiceMatchGraph, unresolved) -> list:
    """Candidate services ordered by matched unresolved inputs (desc), then fewer inputs, then id."""
    counts = Counter()
    for vertex in unresolved:
        for p in graph.providers(vertex):
            counts[p] += 1
    return sorted(counts, key=lambda w: (-counts[w], len(graph.inputs(w)), w))


@dataclass
class SolutionRecord:
    composition: Composition
    total_qos: float
    services: int
    method: str
    elapsed: float = 0.0
    # Global search only: True when the search proved minimality.
    completed: bool = True
    expanded: int = 0


def _finish(graph, selected, algebra, method, started, **extra) -> SolutionRecord:
    composition = Composition.from_resolved(graph, selected)
    report = validate_composition(graph, composition, algebra)
    if not report.valid:
        raise AssertionError(f"search produced an invalid composition: {report.violations}")
    return SolutionRecord(composition, report.qos, report.service_count, method,
                          time.monotonic() - started, **extra)


def local_search(graph: ServiceMatchGraph, algebra: QosAlgebra, qos: Optional[QosTable] = None,
                 deadline: Optional[Deadline] = None) -> SolutionRecord:
    """Backtracking extraction of a first composition with the graph's optimal QoS.

    Starting from the sink's inputs, candidate resolvers are tried in ranked
    order. An input is only resolved with a candidate when the end-to-end
    optimum stays achievable in the resolved copy, so the first complete
    composition already has optimal QoS.
    """
    started = time.monotonic()
    if qos is None:
        qos = qos_update(graph, algebra)
    optimum = qos.optimum()
    if optimum == algebra.zero:
        raise SearchFailed("the sink is unreachable")

    def attempt(g, table, w, unresolved):
        accepted = []
        for vertex in sorted(v for v in unresolved if w in g.providers(v)):
            if detect_cycle(g, w, vertex):
                continue
            trial, trial_table = resolve_and_update(g, table, w, vertex, algebra)
            if trial_table.optimum() != optimum:
                continue
            g, table = trial, trial_table
            accepted.append(vertex)
        return g, table, accepted

    # Explicit DFS stack of (graph, table, unresolved, selected, candidate iterator).
    root_unresolved = tuple(graph.inputs(SINK))
    stack = [(graph, qos, root_unresolved, frozenset({SINK}),
              iter(rank_resolvers(graph, root_unresolved)))]
    backtracks = 0
    while stack:
        if deadline is not None and deadline.expired():
            raise TimedOut("local search exceeded its deadline")
        g, table, unresolved, selected, candidates = stack[-1]
        w = next(candidates, None)
        if w is None:
            stack.pop()
            backtracks += 1
            continue
        g2, table2, resolved = attempt(g, table, w, unresolved)
        if not resolved:
            continue
        remaining = [v for v in unresolved if v not in resolved]
        if w not in selected:
            remaining.extend(graph.inputs(w))
        selected2 = selected | {w}
        if not remaining:
            log.debug("local search done after %d backtracks", backtracks)
            return _finish(g2, selected2, algebra, "local", started)
        remaining = tuple(remaining)
        stack.append((g2, table2, remaining, selected2, iter(rank_resolvers(g2, remaining))))
    raise SearchFailed("local search exhausted every branch")


def _count(selected) -> int:
    return len(selected - {SOURCE, SINK})


@dataclass
class SearchState:
    """A partial solution: resolved graph copy, bounded unresolved inputs, labels, selection."""

    graph: ServiceMatchGraph
    unresolved: dict  # InputVertex -> (min, max)
    qos: QosTable
    selected: frozenset = field(default_factory=lambda: frozenset({SINK}))

    @property
    def size(self) -> int:
        return _count(self.selected)


def initial_state(graph: ServiceMatchGraph, algebra: QosAlgebra,
                  qos: Optional[QosTable] = None) -> SearchState:
    if qos is None:
        qos = qos_update(graph, algebra)
    top = qos.optimum()
    unresolved = {i: (qos[i], top) for i in graph.inputs(SINK)}
    return SearchState(graph, unresolved, qos, frozenset({SINK}))


def resolvers(state: SearchState, vertex: InputVertex, algebra: QosAlgebra) -> list:
    """Providers of ``vertex`` whose aggregated value lies within its bounds."""
    lo, hi = state.unresolved[vertex]
    values = state.qos.services
    return [w for w in state.graph.providers(vertex)
            if algebra.le(lo, values[w]) and algebra.le(values[w], hi)]


def select_input(state: SearchState, algebra: QosAlgebra) -> InputVertex:
    """Minimum-remaining-values choice; ties by input vertex order."""
    return min(state.unresolved, key=lambda v: (len(resolvers(state, v, algebra)), v))


def expand_state(state: SearchState, algebra: QosAlgebra, optimum: float) -> list:
    """Children of ``state`` obtained by resolving its MRV input with each valid resolver."""
    vertex = select_input(state, algebra)
    lo, hi = state.unresolved[vertex]
    children = []
    for w in resolvers(state, vertex, algebra):
        if detect_cycle(state.graph, w, vertex):
            continue
        g2, table = resolve_and_update(state.graph, state.qos, w, vertex, algebra)
        if table.optimum() != optimum:
            continue
        unresolved = dict(state.unresolved)
        del unresolved[vertex]
        selected = state.selected
        if w not in selected:
            selected = selected | {w}
            bound = algebra.subtract(hi, g2.cost(w, algebra))
            for i in g2.inputs(w):
                unresolved[i] = (table[i], bound)
        children.append(SearchState(g2, unresolved, table, selected))
    return children


def global_search(graph: ServiceMatchGraph, algebra: QosAlgebra, deadline: Optional[Deadline] = None,
                  incumbent: Optional[SolutionRecord] = None,
                  qos: Optional[QosTable] = None) -> SolutionRecord:
    """Best-first search over partial solutions ordered by selected-service count.

    The first complete state popped has the minimum number of services among
    all optimal-QoS compositions. With an incumbent, states that cannot beat it
    are dropped; exhausting the queue then proves the incumbent minimal.
    """
    started = time.monotonic()
    root = initial_state(graph, algebra, qos)
    optimum = root.qos.optimum()
    if optimum == algebra.zero:
        raise SearchFailed("the sink is unreachable")
    limit = incumbent.services if incumbent is not None else None
    counter = itertools.count()
    queue = [(root.size, next(counter), root)]
    expanded = 0
    while queue:
        if deadline is not None and deadline.expired():
            if incumbent is not None:
                return SolutionRecord(incumbent.composition, incumbent.total_qos, incumbent.services,
                                      "global", time.monotonic() - started, completed=False,
                                      expanded=expanded)
            raise TimedOut("global search exceeded its deadline", expanded=expanded)
        size, _, state = heapq.heappop(queue)
        if limit is not None and size >= limit:
            continue
        if not state.unresolved:
            return _finish(state.graph, state.selected, algebra, "global", started, expanded=expanded)
        expanded += 1
        for child in expand_state(state, algebra, optimum):
            if limit is not None and child.size >= limit:
                continue
            heapq.heappush(queue, (child.size, next(counter), child))
    if incumbent is not None:
        return SolutionRecord(incumbent.composition, incumbent.total_qos, incumbent.services,
                              "global", time.monotonic() - started, completed=True, expanded=expanded)
    raise SearchFailed("global search exhausted the queue")


class HybridResult(NamedTuple):
    local: SolutionRecord
    global_: Optional[SolutionRecord]
    best: SolutionRecord


def hybrid_search(graph: ServiceMatchGraph, algebra: QosAlgebra,
                  deadline: Optional[Deadline] = None) -> HybridResult:
    """Local search first, then global search with the remaining budget.

    ``global_`` is None when the global search ran out of time before proving
    minimality; ``best`` is the global result if it has fewer services.
    """
    if deadline is None:
        deadline = Deadline()
    qos = qos_update(graph, algebra)
    local = local_search(graph, algebra, qos)
    glob = None
    if not deadline.expired():
        glob = global_search(graph, algebra, deadline, incumbent=local, qos=qos)
        if not glob.completed:
            glob = None
    best = glob if glob is not None and glob.services < local.services else local
    return HybridResult(local, glob, best)
