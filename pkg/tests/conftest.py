from __future__ import annotations

import sys
from pathlib import Path

import pytest

from qoscompose.data import load_json, load_registry, load_request
from qoscompose.graph import build_match_graph
from qoscompose.qos import response_time_algebra, throughput_algebra

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_fixture(name):
    ontology, services = load_registry(load_json(FIXTURES / name / "registry.json"))
    spec = load_request(load_json(FIXTURES / name / "request.json"), ontology)
    return ontology, services, spec


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def fraud():
    return load_fixture("fraud_detection")


@pytest.fixture(scope="session")
def fraud_graph(fraud):
    ontology, services, spec = fraud
    return build_match_graph(ontology, spec.request, services)


@pytest.fixture
def rt():
    return response_time_algebra()


@pytest.fixture
def th():
    return throughput_algebra()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
