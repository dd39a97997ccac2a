from __future__ import annotations

import itertools
from collections import deque

import pytest
from corpus import small_instance, small_params, tiny_graph

from qoscompose.data import (
    _fixpoint,
    _oracle_tables,
    brute_force_min_composition,
    generate_dataset,
    load_registry,
    load_request,
)
from qoscompose.graph import ENDPOINTS, SINK, InputVertex, build_match_graph
from qoscompose.model import Service
from qoscompose.prune import (
    combine_equivalent,
    compute_max_bounds,
    dominates,
    optimize_pipeline,
    prune_suboptimal,
    prune_unreachable,
    remove_dominated,
)
from qoscompose.qos import response_time_algebra, throughput_algebra
from qoscompose.search import qos_update

ALGEBRAS = [response_time_algebra(), throughput_algebra()]


def test_fraud_bounds(fraud_graph, rt):
    bounds = compute_max_bounds(fraud_graph, rt)
    for i in fraud_graph.inputs("ML Predictor Service"):
        assert bounds[i] == 200
    assert bounds[InputVertex("Transaction Service", "ont3:Payment")] == 70
    for i in fraud_graph.inputs("Premium Geoloc Service"):
        assert bounds[i] == 160
    assert bounds[InputVertex(SINK, "xsd:boolean")] == 410


def test_secure_payment_out_of_bounds(fraud_graph, rt):
    pruned, report = prune_suboptimal(fraud_graph, rt)
    assert set(fraud_graph.services) - set(pruned.services) == {"Secure Payment"}
    assert report.passes[0].services_before == 7
    assert report.passes[0].services_after == 6
    assert qos_update(pruned, rt).optimum() == 410


def test_single_chain_bound(rt):
    g = tiny_graph([("a", ["x"], ["y"], 7, 1)], ["x"], ["y"])
    bounds = compute_max_bounds(g, rt)
    assert bounds[InputVertex("a", "x")] == 7 - 7


def test_bound_is_inclusive(rt):
    rows = [("C", ["x", "y"], ["z"], 5, 1), ("A", ["in"], ["x"], 10, 1),
            ("B", ["in"], ["y"], 4, 1), ("D", ["in"], ["y"], 10, 1), ("E", ["in"], ["y"], 11, 1)]
    g = tiny_graph(rows, ["in"], ["z"])
    pruned, _ = prune_suboptimal(g, rt)
    assert "D" in pruned.services
    assert "E" not in pruned.services


def test_unreachable_dangling_producer(rt):
    g = tiny_graph([("a", ["in"], ["out"], 1, 1), ("junk", ["in"], ["waste"], 1, 1)], ["in"], ["out"])
    pruned, report = prune_unreachable(g)
    assert "junk" not in pruned.services
    assert report.passes[0].services_after == 1
    same, _ = prune_unreachable(pruned)
    assert set(same.services) == set(pruned.services)


def _reach_oracle(g):
    # plain BFS on a reversed adjacency built from the edge list
    feeds = {}
    for m in g.edges():
        feeds.setdefault(m.consumer, set()).add(m.provider)
    seen = {SINK}
    todo = deque([SINK])
    while todo:
        for p in feeds.get(todo.popleft(), ()):
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


@pytest.mark.parametrize("seed", range(25))
def test_unreachable_matches_oracle(seed):
    g = small_instance(seed)
    pruned, _ = prune_unreachable(g)
    assert set(pruned.services) - set(ENDPOINTS) == _reach_oracle(g) - set(ENDPOINTS)


def test_duplicates_merged(rt):
    rows = [("b", ["in"], ["out"], 5, 5), ("a", ["in"], ["out"], 5, 5)]
    g = tiny_graph(rows, ["in"], ["out"])
    merged, report = combine_equivalent(g, rt)
    assert list(s for s in merged.services if s not in ENDPOINTS) == ["a"]
    assert merged.members("a") == ("a", "b")
    assert report.passes[0].merges == 1


def test_different_qos_not_merged(rt):
    rows = [("b", ["in"], ["out"], 6, 5), ("a", ["in"], ["out"], 5, 5)]
    merged, _ = combine_equivalent(tiny_graph(rows, ["in"], ["out"]), rt)
    assert merged.service_count() == 2


@pytest.mark.parametrize("seed", range(10))
def test_planted_duplicates(seed):
    registry, request = generate_dataset(small_params(seed, 16))
    ontology, services = load_registry(registry)
    spec = load_request(request, ontology)
    plain = build_match_graph(ontology, spec.request, services)
    real = sorted(w for w in plain.services if w not in ENDPOINTS)
    groups = {w: 1 + (k % 3) for k, w in enumerate(real[:4])}
    extra = []
    for w, k in groups.items():
        s = plain.service(w)
        extra += [Service(f"{w}-copy{n}", s.inputs, s.outputs, s.qos) for n in range(k)]
    doubled = build_match_graph(ontology, spec.request, list(services) + extra)
    for algebra in ALGEBRAS:
        a, _ = combine_equivalent(plain, algebra)
        b, _ = combine_equivalent(doubled, algebra)
        assert doubled.service_count() - plain.service_count() == sum(groups.values())
        assert b.service_count() == a.service_count()


def test_strictly_better_duplicate_dominates(rt):
    rows = [("slow", ["in"], ["out"], 9, 1), ("fast", ["in"], ["out"], 3, 1)]
    g = tiny_graph(rows, ["in"], ["out"])
    assert dominates(g, rt, "fast", "slow")
    assert not dominates(g, rt, "slow", "fast")
    pruned, _ = remove_dominated(g, rt)
    assert [w for w in pruned.services if w not in ENDPOINTS] == ["fast"]


def test_incomparable_pair_kept(rt):
    rows = [("A", ["in"], ["x"], 1, 1), ("B", ["in"], ["y"], 1, 1), ("C", ["x", "y"], ["out"], 1, 1)]
    g = tiny_graph(rows, ["in"], ["out"])
    pruned, _ = remove_dominated(g, rt)
    assert {"A", "B", "C"} <= set(pruned.services)


def test_mutual_domination_keeps_smaller_id(rt):
    # equal QoS and interface: only the id breaks the tie
    rows = [("B", ["in"], ["out"], 3, 1), ("A", ["in"], ["out"], 3, 1)]
    g = tiny_graph(rows, ["in"], ["out"])
    pruned, _ = remove_dominated(g, rt)
    assert [w for w in pruned.services if w not in ENDPOINTS] == ["A"]


def _exact(g, algebra):
    r = brute_force_min_composition(g, algebra)
    return r.total_qos, r.services


def _corpus(count, cap=12):
    seed = 0
    found = 0
    while found < count:
        g = small_instance(seed)
        seed += 1
        if g.service_count() > cap:
            continue
        found += 1
        yield seed - 1, g


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_each_pass_preserves_oracle_value(algebra):
    for seed, g in _corpus(40):
        expected = _exact(g, algebra)
        for step in (prune_unreachable, lambda x: prune_suboptimal(x, algebra),
                     lambda x: combine_equivalent(x, algebra), lambda x: remove_dominated(x, algebra)):
            out, _ = step(g)
            assert _exact(out, algebra) == expected, seed


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_pipeline_admissible_and_idempotent(algebra):
    for seed, g in _corpus(40):
        once, report = optimize_pipeline(g, algebra)
        assert _exact(once, algebra) == _exact(g, algebra), seed
        twice, _ = optimize_pipeline(once, algebra)
        assert sorted(twice.services) == sorted(once.services)
        assert set(twice.edges()) == set(once.edges())
        counts = [p.services_after for p in report.passes]
        assert all(p.services_after <= p.services_before for p in report.passes)
        assert counts[-1] == once.service_count()


def _all_minimal_optimal(g, algebra):
    names, index, needs = _oracle_tables(g)
    costs = [g.cost(w, algebra) for w in names]
    fixed = {index[w] for w in ENDPOINTS}
    ids = [index[w] for w in names if w not in ENDPOINTS]
    optimum = _fixpoint(names, needs, costs, fixed | set(ids), algebra)[0][index[SINK]]
    for size in range(len(ids) + 1):
        hits = [c for c in itertools.combinations(ids, size)
                if _fixpoint(names, needs, costs, fixed | set(c), algebra)[0][index[SINK]] == optimum]
        if hits:
            return [{names[k] for k in c} for c in hits]
    return []


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_suboptimal_pass_keeps_every_minimal_optimum(algebra):
    for seed, g in _corpus(30, cap=10):
        kept = set(prune_suboptimal(g, algebra)[0].services)
        for solution in _all_minimal_optimal(g, algebra):
            assert solution <= kept, seed


def test_pipeline_on_minimal_graph_is_fixpoint(rt):
    g = tiny_graph([("a", ["in"], ["out"], 1, 1)], ["in"], ["out"])
    out, _ = optimize_pipeline(g, rt)
    assert sorted(out.services) == sorted(g.services)


def test_fraud_pipeline(fraud_graph, rt):
    out, report = optimize_pipeline(fraud_graph, rt)
    assert "Secure Payment" not in out.services
    assert qos_update(out, rt).optimum() == 410
    doc = report.to_dict()
    assert doc["servicesBefore"] == 7
    assert doc["servicesAfter"] == out.service_count()
