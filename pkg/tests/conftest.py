import itertools

import networkx as nx
import numpy as np
import pytest

from spansub.graph import Graph


def to_nx(g: Graph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges())
    return h


def from_nx(h: nx.Graph) -> Graph:
    h = nx.convert_node_labels_to_integers(h)
    return Graph.from_edges(h.number_of_nodes(), h.edges())


def random_graph(n: int, p: float, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    edges = [e for e in itertools.combinations(range(n), 2) if rng.random() < p]
    return Graph.from_edges(n, edges)


@pytest.fixture
def tmp_files(tmp_path):
    return tmp_path


_ACCEPTANCE: list[str] = []


@pytest.fixture
def record(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines: list[str] = []

    def add(number, name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
        lines.append(line)
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    yield add
    if not lines:
        _ACCEPTANCE.append(f"FAIL {request.node.name}: raised before a measurement was recorded")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
