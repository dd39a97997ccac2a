"""QoS algebras and the aggregation functions evaluated over a match graph.

An algebra is the tuple (aggregate, subtract, order) with an identity and a
zero element. Values are floats; ``math.inf`` is the infinite element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

INF = math.inf

RESPONSE_TIME = "responseTime"
THROUGHPUT = "throughput"
CRITERIA = (RESPONSE_TIME, THROUGHPUT)


@dataclass(frozen=True)
class QosAlgebra:
    criterion: str
    aggregate: Callable[[float, float], float]
    subtract: Callable[[float, float], float]
    identity: float
    zero: float
    # True when smaller magnitudes are better (order is <=), False for >=.
    smaller_is_better: bool

    def le(self, a: float, b: float) -> bool:
        """``a`` is better than or equal to ``b``."""
        return a <= b if self.smaller_is_better else a >= b

    def lt(self, a: float, b: float) -> bool:
        """``a`` is strictly better than ``b``."""
        return a < b if self.smaller_is_better else a > b

    def key(self, a: float) -> float:
        """Sort key: ascending key order is best-first."""
        return a if self.smaller_is_better else -a

    def best(self, values: Iterable[float]) -> float:
        values = list(values)
        if not values:
            raise ValueError("best() of an empty sequence")
        return min(values) if self.smaller_is_better else max(values)

    def worst(self, values: Iterable[float]) -> float:
        values = list(values)
        if not values:
            raise ValueError("worst() of an empty sequence")
        return max(values) if self.smaller_is_better else min(values)

    def __repr__(self) -> str:
        return f"QosAlgebra({self.criterion})"


def _rt_subtract(a: float, b: float) -> float:
    if a == INF:
        return INF
    return a - b


def response_time_algebra() -> QosAlgebra:
    return QosAlgebra(
        criterion=RESPONSE_TIME,
        aggregate=lambda a, b: a + b,
        subtract=_rt_subtract,
        identity=0.0,
        zero=INF,
        smaller_is_better=True,
    )


def throughput_algebra() -> QosAlgebra:
    return QosAlgebra(
        criterion=THROUGHPUT,
        aggregate=min,
        subtract=min,
        identity=INF,
        zero=0.0,
        smaller_is_better=False,
    )


_FACTORIES = {RESPONSE_TIME: response_time_algebra, THROUGHPUT: throughput_algebra}


def algebra_for(criterion: str) -> QosAlgebra:
    try:
        return _FACTORIES[criterion]()
    except KeyError:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {list(CRITERIA)}") from None


def best(values: Iterable[float], algebra: QosAlgebra) -> float:
    return algebra.best(values)


def worst(values: Iterable[float], algebra: QosAlgebra) -> float:
    return algebra.worst(values)


def service_aggregated_qos(graph, service: str, table: Mapping, algebra: QosAlgebra) -> float:
    """Worst input label of ``service`` aggregated with its own QoS.

    ``table`` maps input vertices to their best aggregated value. A service
    without inputs is worth its own QoS.
    """
    cost = graph.cost(service, algebra)
    inputs = graph.inputs(service)
    if not inputs:
        return cost
    try:
        values = [table[i] for i in inputs]
    except KeyError as exc:
        raise KeyError(f"no QoS entry for input {exc.args[0]}") from None
    return algebra.aggregate(algebra.worst(values), cost)


def input_qos(graph, vertex, service_values: Mapping[str, float], algebra: QosAlgebra) -> float:
    """Best aggregated value over the providers of an input vertex.

    ``service_values`` holds the aggregated value of every provider service
    (the value of an output equals the value of its service).
    """
    parents = graph.providers(vertex)
    if not parents:
        return algebra.zero
    return algebra.best(service_values[p] for p in parents)


def graph_optimal_qos(graph, algebra: QosAlgebra) -> float:
    """Optimal end-to-end value: the aggregated value of the sink after QoS-Update."""
    from .search import qos_update

    table = qos_update(graph, algebra)
    return table.services[graph.sink]
