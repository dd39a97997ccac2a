"""JSON documents, the seeded dataset generator and the brute-force oracle."""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .graph import ENDPOINTS, SINK, SOURCE, Composition, Match, ServiceMatchGraph
from .model import Ontology, Request, Service, UnknownConceptError
from .qos import RESPONSE_TIME, QosAlgebra

PRNG = "PCG64"


class DocumentError(ValueError):
    """A document failed schema or referential validation."""


@functools.lru_cache(maxsize=None)
def _schema(name: str) -> dict:
    text = resources.files("qoscompose").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


def _validate(document, name: str) -> None:
    try:
        jsonschema.validate(document, _schema(name))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DocumentError(f"{name} document invalid at {path}: {exc.message}") from None


def encode_qos(value: float):
    if math.isinf(value):
        return "inf"
    return int(value) if float(value).is_integer() else value


def decode_qos(value) -> float:
    if isinstance(value, str):
        if value in ("inf", "Infinity"):
            return math.inf
        raise DocumentError(f"bad QoS value {value!r}")
    return float(value)


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: not valid JSON ({exc})") from None


def dump_json(document, path=None) -> str:
    text = json.dumps(document, indent=1, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_registry(document: dict) -> tuple:
    """Parse a registry document into ``(Ontology, [Service])`` sorted by id."""
    _validate(document, "registry")
    parents = {}
    for k, entry in enumerate(document["ontology"]):
        concept = entry["concept"]
        if concept in parents:
            raise DocumentError(f"ontology/{k}: duplicate concept {concept!r}")
        parents[concept] = entry.get("parent")
    try:
        ontology = Ontology(parents)
    except ValueError as exc:
        raise DocumentError(f"ontology: {exc}") from None
    services = {}
    for k, entry in enumerate(document["services"]):
        sid = entry["id"]
        if sid in services:
            raise DocumentError(f"services/{k}: duplicate service id {sid!r}")
        if sid in ENDPOINTS:
            raise DocumentError(f"services/{k}: service id {sid!r} is reserved")
        service = Service(sid, entry["inputs"], entry["outputs"], {c: float(v) for c, v in entry["qos"].items()})
        try:
            service.check(ontology)
        except UnknownConceptError as exc:
            raise DocumentError(f"services/{k} ({sid}): {exc}") from None
        services[sid] = service
    return ontology, [services[s] for s in sorted(services)]


def registry_document(ontology: Ontology, services) -> dict:
    ontology_entries = []
    for concept, parent in ontology.to_parents().items():
        entry = {"concept": concept}
        if parent is not None:
            entry["parent"] = parent
        ontology_entries.append(entry)
    return {
        "ontology": ontology_entries,
        "services": [
            {
                "id": s.id,
                "inputs": sorted(s.inputs),
                "outputs": sorted(s.outputs),
                "qos": {c: encode_qos(v) for c, v in sorted(s.qos.items())},
            }
            for s in sorted(services, key=lambda s: s.id)
        ],
    }


@dataclass
class RequestSpec:
    request: Request
    criterion: str = RESPONSE_TIME
    match_policy: str = "exact-plugin"
    timeout_secs: Optional[float] = None


def load_request(document: dict, ontology: Optional[Ontology] = None) -> RequestSpec:
    _validate(document, "request")
    request = Request(document["provided"], document["wanted"])
    if ontology is not None:
        try:
            request.check(ontology)
        except UnknownConceptError as exc:
            raise DocumentError(f"request: {exc}") from None
    return RequestSpec(request, document.get("criterion", RESPONSE_TIME),
                       document.get("matchPolicy", "exact-plugin"), document.get("timeoutSecs"))


def request_document(spec: RequestSpec) -> dict:
    doc = {
        "provided": sorted(spec.request.provided),
        "wanted": sorted(spec.request.wanted),
        "criterion": spec.criterion,
        "matchPolicy": spec.match_policy,
    }
    if spec.timeout_secs is not None:
        doc["timeoutSecs"] = spec.timeout_secs
    return doc


def record_summary(record) -> Optional[dict]:
    if record is None:
        return None
    return {"serviceCount": record.services, "totalQos": encode_qos(record.total_qos),
            "elapsed": round(record.elapsed, 6)}


def solution_document(record, graph: ServiceMatchGraph, algebra: QosAlgebra,
                      prune_report=None, local=None, glob=None) -> dict:
    """Serialize a solution record; abstract services list all their members."""
    services = []
    for w in record.composition.service_ids:
        services.append({"id": w, "qos": encode_qos(graph.cost(w, algebra)),
                         "members": list(graph.members(w))})
    matches = [{"fromService": m.provider, "output": m.output, "toService": m.consumer, "input": m.input}
               for m in record.composition.matches]
    doc = {
        "criterion": algebra.criterion,
        "services": services,
        "matches": matches,
        "totalQos": encode_qos(record.total_qos),
        "serviceCount": record.services,
        "method": record.method,
        "elapsed": round(record.elapsed, 6),
        "pruneReport": prune_report.to_dict() if prune_report is not None else None,
    }
    if local is not None:
        doc["local"] = record_summary(local)
        doc["global"] = record_summary(glob)
    return doc


def load_solution(document: dict) -> tuple:
    """Parse a solution document into ``(Composition, claimed total QoS)``."""
    _validate(document, "solution")
    services = {s["id"] for s in document["services"]}
    matches = [Match(m["fromService"], m["output"], m["toService"], m["input"]) for m in document["matches"]]
    return Composition(frozenset(services), tuple(matches)), decode_qos(document["totalQos"])


@dataclass
class GeneratorParams:
    """Knobs of the random registry model. Ranges are inclusive ``(low, high)``."""

    seed: int = 0
    num_services: int = 1000
    num_concepts: int = 3000
    ontology_depth: int = 4
    inputs_per_service: tuple = (1, 3)
    outputs_per_service: tuple = (1, 3)
    response_time: tuple = (10, 500)
    throughput: tuple = (100, 10000)
    solvable: bool = True
    provided: int = 3
    wanted: int = 2
    planted_length: int = 4
    # Probability that a random service input is drawn from already produced concepts.
    reuse: float = 0.6
    # Probability that a random service output is a concept some planted service needs.
    useful: float = 0.2
    prng: str = PRNG

    def check(self) -> None:
        for name in ("inputs_per_service", "outputs_per_service", "response_time", "throughput"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range {lo}..{hi} is degenerate")
        if self.outputs_per_service[0] < 1:
            raise ValueError("services need at least one output")
        if self.ontology_depth < 1:
            raise ValueError("ontology_depth must be at least 1")
        if not 0 <= self.reuse <= 1 or not 0 <= self.useful <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.prng != PRNG:
            raise ValueError(f"only the {PRNG} generator is supported")
        if self.provided < 1 or self.wanted < 1:
            raise ValueError("requests need at least one provided and one wanted concept")
        needed = max(self.inputs_per_service[1], self.outputs_per_service[1], self.provided + self.wanted)
        if self.num_concepts < needed:
            raise ValueError(f"num_concepts={self.num_concepts} is smaller than the fan-out needs ({needed})")
        if self.solvable and self.num_services < self.planted_length:
            raise ValueError("num_services must cover the planted solution length")


def generate_dataset(params: GeneratorParams) -> tuple:
    """Random registry and request documents, fully determined by ``params``.

    With ``params.solvable`` a chain of services leading from the provided to
    the wanted concepts is planted, so the request is satisfiable.
    """
    params.check()
    rng = np.random.Generator(np.random.PCG64(params.seed))
    width = len(str(params.num_concepts - 1))
    concepts = [f"c{k:0{width}d}" for k in range(params.num_concepts)]
    depth = {}
    parents = {}
    roots = max(1, params.num_concepts // 20)
    for k, c in enumerate(concepts):
        if k < roots or params.ontology_depth == 1:
            parents[c] = None
            depth[c] = 0
            continue
        while True:
            p = concepts[int(rng.integers(0, k))]
            if depth[p] < params.ontology_depth - 1:
                break
        parents[c] = p
        depth[c] = depth[p] + 1
    ontology = Ontology(parents)

    def ancestor_or_self(c):
        chain = [c, *sorted(ontology.ancestors(c))]
        return chain[int(rng.integers(0, len(chain)))]

    def draw(pool, n):
        n = min(n, len(pool))
        picks = rng.choice(len(pool), size=n, replace=False)
        return [pool[int(i)] for i in sorted(picks)]

    def qos():
        return {
            "responseTime": float(rng.integers(params.response_time[0], params.response_time[1] + 1)),
            "throughput": float(rng.integers(params.throughput[0], params.throughput[1] + 1)),
        }

    def fanout(rangepair):
        return int(rng.integers(rangepair[0], rangepair[1] + 1))

    provided = draw(concepts, params.provided)
    produced = list(provided)
    produced_set = set(produced)

    def produce(outs):
        for c in sorted(outs):
            if c not in produced_set:
                produced_set.add(c)
                produced.append(c)
    services = []
    needed = []
    width_s = len(str(params.num_services - 1))
    sid = iter(f"ws{k:0{width_s}d}" for k in range(params.num_services))

    wanted = []
    if params.solvable:
        available = list(provided)
        for step in range(params.planted_length):
            n_in = max(1, fanout(params.inputs_per_service))
            ins = sorted({ancestor_or_self(c) for c in draw(available, n_in)})
            n_out = fanout(params.outputs_per_service)
            outs = draw(concepts, n_out)
            services.append(Service(next(sid), ins, outs, qos()))
            needed.extend(ins)
            available.extend(c for c in outs if c not in available)
            produce(outs)
        last = services[-1].outputs
        extra = [c for c in produced if c not in provided]
        pool = sorted(last) + [c for c in extra if c not in last]
        wanted = sorted({ancestor_or_self(c) for c in pool[:max(1, min(params.wanted, len(pool)))]})
        needed.extend(wanted)
    else:
        wanted = draw([c for c in concepts if c not in provided], params.wanted)
    needed = sorted(set(needed)) or list(wanted)

    while len(services) < params.num_services:
        n_in = fanout(params.inputs_per_service)
        ins = set()
        for _ in range(n_in):
            if produced and rng.random() < params.reuse:
                ins.add(ancestor_or_self(produced[int(rng.integers(0, len(produced)))]))
            else:
                ins.add(concepts[int(rng.integers(0, len(concepts)))])
        outs = set()
        for _ in range(fanout(params.outputs_per_service)):
            if rng.random() < params.useful:
                target = needed[int(rng.integers(0, len(needed)))]
                below = sorted(ontology.descendants(target))
                choices = [target, *below]
                outs.add(choices[int(rng.integers(0, len(choices)))])
            else:
                outs.add(concepts[int(rng.integers(0, len(concepts)))])
        services.append(Service(next(sid), ins, outs, qos()))
        produce(outs)

    order = rng.permutation(len(services))
    # Shuffle ids so the planted chain is not recognizable by name.
    renamed = []
    for new_index, old in enumerate(order):
        s = services[int(old)]
        renamed.append(Service(f"ws{new_index:0{width_s}d}", s.inputs, s.outputs, s.qos))
    registry = registry_document(ontology, renamed)
    request = {"provided": sorted(provided), "wanted": sorted(wanted), "criterion": RESPONSE_TIME}
    return registry, request


def params_document(params: GeneratorParams) -> dict:
    doc = asdict(params)
    for k, v in doc.items():
        if isinstance(v, tuple):
            doc[k] = list(v)
    return doc


class OracleGuardError(ValueError):
    """The graph is too large for exhaustive enumeration."""


@dataclass
class OracleResult:
    feasible: bool
    services: int = 0
    total_qos: Optional[float] = None
    selection: tuple = field(default_factory=tuple)
    subsets_checked: int = 0


def _oracle_tables(g: ServiceMatchGraph):
    names = list(g.services)
    index = {w: k for k, w in enumerate(names)}
    needs = []  # per service: list of provider-index lists, one per input
    for w in names:
        needs.append([[index[p] for p in g.providers(i)] for i in g.inputs(w)])
    return names, index, needs


def _fixpoint(names, needs, costs, allowed, algebra):
    """Least fixpoint of the aggregation equations over ``allowed`` services.

    Plain round-based value iteration starting from the zero element; a
    service only gets a finite value once all its inputs have one.
    """
    zero = algebra.zero
    value = [zero] * len(names)
    labels = [[zero] * len(n) for n in needs]
    for _ in range(len(names) + 2):
        changed = False
        for w in allowed:
            row = labels[w]
            for k, parents in enumerate(needs[w]):
                best = zero
                for p in parents:
                    if p in allowed and algebra.lt(value[p], best):
                        best = value[p]
                row[k] = best
            if row:
                v = algebra.aggregate(algebra.worst(row), costs[w])
            else:
                v = costs[w]
            if v != value[w]:
                value[w] = v
                changed = True
        if not changed:
            break
    return value, labels


def oracle_input_labels(g: ServiceMatchGraph, algebra: QosAlgebra) -> dict:
    """Optimal value of every input vertex, by value iteration over the whole graph."""
    names, index, needs = _oracle_tables(g)
    costs = [g.cost(w, algebra) for w in names]
    value, labels = _fixpoint(names, needs, costs, set(range(len(names))), algebra)
    out = {}
    for w in names:
        for k, vertex in enumerate(g.inputs(w)):
            out[vertex] = labels[index[w]][k]
    return out


def brute_force_min_composition(g: ServiceMatchGraph, algebra: QosAlgebra,
                                max_services: int = 25) -> OracleResult:
    """Smallest service subset that still achieves the graph's optimal QoS.

    Subsets are enumerated by increasing size; a subset qualifies when the sink
    reaches the global optimum using only its services (plus source and sink).
    """
    real = [w for w in g.services if w not in ENDPOINTS]
    if len(real) > max_services:
        raise OracleGuardError(f"{len(real)} services exceed the oracle limit of {max_services}")
    names, index, needs = _oracle_tables(g)
    costs = [g.cost(w, algebra) for w in names]
    fixed = {index[SOURCE], index[SINK]}
    sink = index[SINK]
    everything = fixed | {index[w] for w in real}
    value, _ = _fixpoint(names, needs, costs, everything, algebra)
    optimum = value[sink]
    if optimum == algebra.zero:
        return OracleResult(False)
    checked = 0
    ids = [index[w] for w in real]
    for size in range(len(ids) + 1):
        for combo in itertools.combinations(ids, size):
            checked += 1
            value, _ = _fixpoint(names, needs, costs, fixed | set(combo), algebra)
            if value[sink] == optimum:
                return OracleResult(True, size, optimum, tuple(names[k] for k in combo), checked)
    raise AssertionError("the full service set must reach the optimum")
