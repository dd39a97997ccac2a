"""Concept ontology, service and request records, and semantic matchmaking."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional


class UnknownConceptError(KeyError):
    """Raised when a concept id is not defined in the ontology."""

    def __init__(self, concept: str):
        super().__init__(concept)
        self.concept = concept

    def __str__(self) -> str:
        return f"unknown concept: {self.concept!r}"


class MatchDegree(enum.Enum):
    EXACT = "exact"
    PLUGIN = "plugin"
    SUBSUME = "subsume"
    FAIL = "fail"


@dataclass(frozen=True)
class MatchPolicy:
    """Set of match degrees accepted as a valid match."""

    allowed: frozenset = frozenset({MatchDegree.EXACT, MatchDegree.PLUGIN})

    def __post_init__(self):
        allowed = frozenset(self.allowed)
        if MatchDegree.FAIL in allowed:
            raise ValueError("FAIL cannot be an accepted match degree")
        object.__setattr__(self, "allowed", allowed | {MatchDegree.EXACT})

    @property
    def subsume(self) -> bool:
        return MatchDegree.SUBSUME in self.allowed

    @property
    def plugin(self) -> bool:
        return MatchDegree.PLUGIN in self.allowed

    @classmethod
    def from_name(cls, name: str) -> "MatchPolicy":
        try:
            return POLICIES[name]
        except KeyError:
            raise ValueError(f"unknown match policy {name!r}; expected one of {sorted(POLICIES)}") from None


EXACT_PLUGIN = MatchPolicy()
SUBSUME_POLICY = MatchPolicy(frozenset({MatchDegree.EXACT, MatchDegree.PLUGIN, MatchDegree.SUBSUME}))
POLICIES = {"exact-plugin": EXACT_PLUGIN, "paper": SUBSUME_POLICY}


class Ontology:
    """A single-inheritance concept forest.

    ``parents`` maps every concept to its parent concept, or ``None`` for roots.
    """

    def __init__(self, parents: Mapping[str, Optional[str]]):
        self._parent: dict[str, Optional[str]] = {}
        for concept, parent in parents.items():
            if not concept:
                raise ValueError("concept ids must be non-empty")
            self._parent[concept] = parent or None
        for concept, parent in self._parent.items():
            if parent is not None and parent not in self._parent:
                raise ValueError(f"concept {concept!r} references undefined parent {parent!r}")
        self._depth: dict[str, int] = {}
        for concept in self._parent:
            self._compute_depth(concept)
        self._children: dict[str, list[str]] = {c: [] for c in self._parent}
        for concept, parent in self._parent.items():
            if parent is not None:
                self._children[parent].append(concept)
        self._ancestors: dict[str, frozenset] = {}
        self._descendants: dict[str, frozenset] = {}

    def _compute_depth(self, concept: str) -> int:
        # Iterative walk; detects cycles in the parent links.
        chain = []
        seen = set()
        node = concept
        while node is not None and node not in self._depth:
            if node in seen:
                raise ValueError(f"parent links form a cycle through {node!r}")
            seen.add(node)
            chain.append(node)
            node = self._parent[node]
        base = -1 if node is None else self._depth[node]
        for offset, item in enumerate(reversed(chain), start=1):
            self._depth[item] = base + offset
        return self._depth[concept]

    def __contains__(self, concept: object) -> bool:
        return concept in self._parent

    def __len__(self) -> int:
        return len(self._parent)

    def __iter__(self):
        return iter(self._parent)

    @property
    def concepts(self) -> frozenset:
        return frozenset(self._parent)

    def parent(self, concept: str) -> Optional[str]:
        self.check(concept)
        return self._parent[concept]

    def depth(self, concept: str) -> int:
        self.check(concept)
        return self._depth[concept]

    def check(self, concept: str) -> None:
        if concept not in self._parent:
            raise UnknownConceptError(concept)

    def ancestors(self, concept: str) -> frozenset:
        """Strict ancestors of ``concept``."""
        cached = self._ancestors.get(concept)
        if cached is None:
            self.check(concept)
            found = []
            node = self._parent[concept]
            while node is not None:
                found.append(node)
                node = self._parent[node]
            cached = self._ancestors[concept] = frozenset(found)
        return cached

    def descendants(self, concept: str) -> frozenset:
        """Strict descendants of ``concept``."""
        cached = self._descendants.get(concept)
        if cached is None:
            self.check(concept)
            found = []
            stack = list(self._children[concept])
            while stack:
                node = stack.pop()
                found.append(node)
                stack.extend(self._children[node])
            cached = self._descendants[concept] = frozenset(found)
        return cached

    def is_descendant(self, a: str, b: str) -> bool:
        """True if ``a`` is a strict descendant of ``b`` (walks ``a``'s parent chain)."""
        self.check(a)
        self.check(b)
        da, db = self._depth[a], self._depth[b]
        if da <= db:
            return False
        node = a
        for _ in range(da - db):
            node = self._parent[node]
        return node == b

    def matched_by(self, provided: str, policy: MatchPolicy = EXACT_PLUGIN) -> frozenset:
        """All concepts that ``provided`` matches under ``policy``."""
        result = {provided}
        if policy.plugin:
            result |= self.ancestors(provided)
        if policy.subsume:
            result |= self.descendants(provided)
        return frozenset(result)

    def to_parents(self) -> dict[str, Optional[str]]:
        return dict(self._parent)


def degree(ontology: Ontology, a: str, b: str) -> MatchDegree:
    """Degree of match when concept ``a`` is offered where ``b`` is required."""
    ontology.check(a)
    ontology.check(b)
    if a == b:
        return MatchDegree.EXACT
    if ontology.is_descendant(a, b):
        return MatchDegree.PLUGIN
    if ontology.is_descendant(b, a):
        return MatchDegree.SUBSUME
    return MatchDegree.FAIL


def matches(ontology: Ontology, a: str, b: str, policy: MatchPolicy = EXACT_PLUGIN) -> bool:
    return degree(ontology, a, b) in policy.allowed


def match_set(ontology: Ontology, c1: Iterable[str], c2: Iterable[str],
              policy: MatchPolicy = EXACT_PLUGIN) -> frozenset:
    """The concepts of ``c2`` matched by at least one concept of ``c1``."""
    c2 = frozenset(c2)
    for c in c2:
        ontology.check(c)
    covered = set()
    for c in c1:
        covered |= ontology.matched_by(c, policy)
    return c2 & covered


@dataclass(frozen=True)
class Service:
    id: str
    inputs: frozenset = frozenset()
    outputs: frozenset = frozenset()
    qos: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        object.__setattr__(self, "qos", dict(self.qos))

    def __hash__(self) -> int:
        return hash(self.id)

    def check(self, ontology: Ontology) -> None:
        for concept in sorted(self.inputs | self.outputs):
            ontology.check(concept)


@dataclass(frozen=True)
class Request:
    provided: frozenset
    wanted: frozenset

    def __post_init__(self):
        object.__setattr__(self, "provided", frozenset(self.provided))
        object.__setattr__(self, "wanted", frozenset(self.wanted))
        if not self.provided or not self.wanted:
            raise ValueError("a request needs non-empty provided and wanted concept sets")

    def check(self, ontology: Ontology) -> None:
        for concept in sorted(self.provided | self.wanted):
            ontology.check(concept)


def is_invokable(ontology: Ontology, provided: Iterable[str], service: Service,
                 policy: MatchPolicy = EXACT_PLUGIN) -> bool:
    if not service.inputs:
        return True
    return match_set(ontology, provided, service.inputs, policy) == service.inputs
