from __future__ import annotations

import random

import networkx as nx
import pytest
from corpus import small_instance, tiny_graph

from qoscompose.data import brute_force_min_composition, oracle_input_labels
from qoscompose.graph import SINK, InputVertex
from qoscompose.prune import optimize_pipeline
from qoscompose.qos import response_time_algebra, throughput_algebra
from qoscompose.search import (
    Deadline,
    SearchFailed,
    TimedOut,
    detect_cycle,
    expand_state,
    global_search,
    hybrid_search,
    initial_state,
    local_search,
    qos_update,
    rank_resolvers,
    resolve_and_update,
)

ALGEBRAS = [response_time_algebra(), throughput_algebra()]
CLIENT_ID = InputVertex("Premium Geoloc Service", "ont4:ClientID")


def test_fraud_labels(fraud_graph, rt):
    table = qos_update(fraud_graph, rt)
    assert table[InputVertex(SINK, "xsd:boolean")] == 410
    assert table[InputVertex("Transaction Service", "ont3:Payment")] == 70
    assert table.optimum() == 410


@pytest.mark.parametrize("k", [1, 2, 5, 9])
def test_chain_sums(k, rt):
    rows = [(f"s{n}", [f"c{n}"], [f"c{n + 1}"], 10, 1) for n in range(k)]
    g = tiny_graph(rows, ["c0"], [f"c{k}"])
    assert qos_update(g, rt).optimum() == k * 10


def test_unreachable_inputs_stay_zero(rt):
    g = tiny_graph([("a", ["in"], ["out"], 2, 2)], ["in"], ["out"])
    table = qos_update(g.subgraph([]), rt)
    assert table[InputVertex(SINK, "out")] == rt.zero
    assert table.optimum() == rt.zero


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_labels_match_oracle_and_are_stable(algebra):
    for seed in range(40):
        g = small_instance(seed)
        table = qos_update(g, algebra)
        assert table.inputs == oracle_input_labels(g, algebra), seed
        again = qos_update(g, algebra)
        assert again.inputs == table.inputs and again.services == table.services


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_incremental_update_equals_recompute(algebra):
    for seed in range(60):
        g = small_instance(seed, 20)
        rnd = random.Random(seed)
        table = qos_update(g, algebra)
        for _ in range(10):
            open_inputs = [v for v in g.input_vertices if g.indegree(v) > 1]
            if not open_inputs:
                break
            v = rnd.choice(open_inputs)
            w = rnd.choice(sorted(g.providers(v)))
            g, table = resolve_and_update(g, table, w, v, algebra)
            fresh = qos_update(g, algebra)
            assert table.inputs == fresh.inputs, seed
            assert table.services == fresh.services, seed


def _crossing():
    # I needs K's output, K needs I's output; J and L are the alternatives
    rows = [("I", ["p", "k"], ["i", "out"], 1, 1), ("K", ["i"], ["k"], 1, 1),
            ("J", ["p"], ["k"], 1, 1), ("L", ["p"], ["i"], 1, 1)]
    return tiny_graph(rows, ["p"], ["out"])


def test_cycle_after_resolution():
    g = _crossing()
    k_input = InputVertex("I", "k")
    assert not detect_cycle(g, "K", k_input)
    g = g.resolve("I", [InputVertex("K", "i")])
    assert detect_cycle(g, "K", k_input)
    assert not detect_cycle(g, "J", k_input)


def test_self_feed_is_a_cycle():
    g = tiny_graph([("w", ["in", "x"], ["x", "out"], 1, 1), ("v", ["in"], ["x"], 1, 1)], ["in"], ["out"])
    assert detect_cycle(g, "w", InputVertex("w", "x"))


def _scc_oracle(g, w, vertex):
    h = g.resolve(w, [vertex])
    dg = nx.DiGraph()
    dg.add_nodes_from(h.services)
    for m in h.edges():
        if h.indegree(InputVertex(m.consumer, m.input)) == 1:
            dg.add_edge(m.provider, m.consumer)
    if w == vertex.service:
        return True
    return any(w in comp and vertex.service in comp for comp in nx.strongly_connected_components(dg))


def test_detect_cycle_agrees_with_scc():
    checked = 0
    for seed in range(40):
        g = small_instance(seed, 20)
        rnd = random.Random(seed)
        for _ in range(6):
            open_inputs = [v for v in g.input_vertices if g.indegree(v) > 1]
            if not open_inputs:
                break
            v = rnd.choice(open_inputs)
            g = g.resolve(rnd.choice(sorted(g.providers(v))), [v])
        for vertex in g.input_vertices:
            for w in g.providers(vertex):
                assert detect_cycle(g, w, vertex) == _scc_oracle(g, w, vertex), (seed, w, vertex)
                checked += 1
    assert checked > 500


def test_rank_resolvers():
    rows = [("A", ["in"], ["x", "y"], 1, 1), ("B", ["in"], ["y"], 1, 1),
            ("C", ["in", "q"], ["y"], 1, 1), ("D", ["in"], ["q"], 1, 1),
            ("E", ["in"], ["y"], 1, 1), ("F", ["x", "y"], ["out"], 1, 1)]
    g = tiny_graph(rows, ["in"], ["out"])
    x, y = InputVertex("F", "x"), InputVertex("F", "y")
    assert rank_resolvers(g, [x]) == ["A"]
    ranked = rank_resolvers(g, [x, y])
    assert ranked[0] == "A"
    # equal counts: fewer inputs first, then id
    assert ranked[1:] == ["B", "E", "C"]


def test_local_search_fraud(fraud_graph, rt):
    pruned, _ = optimize_pipeline(fraud_graph, rt)
    for g in (fraud_graph, pruned):
        record = local_search(g, rt)
        assert (record.services, record.total_qos, record.method) == (4, 410, "local")
        assert record.composition.service_ids == (
            "Free Geoloc Service", "ML Predictor Service", "Transaction Service", "WS E-Payment")


def test_local_search_single_path(rt):
    rows = [("a", ["in"], ["x"], 3, 1), ("b", ["x"], ["out"], 4, 1)]
    record = local_search(tiny_graph(rows, ["in"], ["out"]), rt)
    assert record.composition.service_ids == ("a", "b")
    assert record.total_qos == 7


def test_client_id_bounds(fraud_graph, rt):
    pruned, _ = optimize_pipeline(fraud_graph, rt)
    optimum = qos_update(pruned, rt).optimum()
    frontier = [initial_state(pruned, rt)]
    seen = []
    while frontier:
        state = frontier.pop()
        if CLIENT_ID in state.unresolved:
            seen.append(state.unresolved[CLIENT_ID])
        if state.unresolved:
            frontier.extend(expand_state(state, rt, optimum))
    assert seen and set(seen) == {(20, 160)}


def test_global_search_fraud(fraud_graph, rt):
    record = global_search(fraud_graph, rt)
    assert (record.services, record.total_qos, record.method) == (4, 410, "global")
    assert record.completed


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_global_matches_oracle(algebra):
    for seed in range(60):
        g, _ = optimize_pipeline(small_instance(seed), algebra)
        oracle = brute_force_min_composition(g, algebra)
        record = global_search(g, algebra)
        assert (record.services, record.total_qos) == (oracle.services, oracle.total_qos), seed


def test_throughput_bounds_never_cut_an_optimum():
    th = throughput_algebra()
    for seed in range(60):
        raw = small_instance(seed, 16)
        oracle = brute_force_min_composition(raw, th)
        record = global_search(raw, th)
        assert record.total_qos == oracle.total_qos
        assert record.services == oracle.services


@pytest.mark.parametrize("algebra", ALGEBRAS, ids=lambda a: a.criterion)
def test_local_is_optimal_and_not_smaller_than_global(algebra):
    for seed in range(60):
        g, _ = optimize_pipeline(small_instance(seed), algebra)
        optimum = qos_update(g, algebra).optimum()
        local = local_search(g, algebra)
        glob = global_search(g, algebra, incumbent=local)
        assert local.total_qos == optimum == glob.total_qos
        assert glob.services <= local.services


def test_deadline_paths(fraud_graph, rt):
    with pytest.raises(ValueError):
        Deadline(0)
    expired = Deadline(1e-9)
    with pytest.raises(TimedOut):
        global_search(fraud_graph, rt, expired)
    local = local_search(fraud_graph, rt)
    record = global_search(fraud_graph, rt, expired, incumbent=local)
    assert not record.completed
    assert record.services == local.services
    with pytest.raises(TimedOut):
        local_search(fraud_graph, rt, deadline=expired)


def test_unreachable_sink_fails(rt):
    g = tiny_graph([("a", ["in"], ["out"], 2, 2)], ["in"], ["out"]).subgraph([])
    with pytest.raises(SearchFailed):
        local_search(g, rt)
    with pytest.raises(SearchFailed):
        global_search(g, rt)


def test_hybrid(fraud_graph, rt):
    result = hybrid_search(fraud_graph, rt, Deadline(30))
    assert result.local.services == result.global_.services == result.best.services == 4
    for seed in range(30):
        g, _ = optimize_pipeline(small_instance(seed), rt)
        result = hybrid_search(g, rt, Deadline(30))
        assert result.best.services <= result.local.services
        assert result.best.total_qos == result.local.total_qos == qos_update(g, rt).optimum()
