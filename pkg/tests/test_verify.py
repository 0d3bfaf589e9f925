import itertools

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from spansub.errors import GraphFormatError
from spansub.graph import Graph, complete_graph, cycle_graph, path_graph, petersen_graph
from spansub.verify import Subdivision, oracle_exists, verify

from conftest import random_graph, to_nx


def has_ham_cycle(g):
    if g.n < 3:
        return False
    for perm in itertools.permutations(range(1, g.n)):
        cyc = (0, *perm, 0)
        if all(g.has_edge(a, b) for a, b in zip(cyc, cyc[1:])):
            return True
    return False


def has_ham_path(g):
    return any(all(g.has_edge(a, b) for a, b in zip(p, p[1:])) for p in itertools.permutations(range(g.n)))


@pytest.mark.parametrize("seed", range(30))
def test_oracle_t3_spanning_is_hamiltonicity(seed):
    g = random_graph(7, 0.5, seed)
    found, wit = oracle_exists(g, 3, "spanning")
    assert found == has_ham_cycle(g)
    if found:
        assert verify(g, wit, "spanning").ok


@pytest.mark.parametrize("seed", range(20))
def test_oracle_t2_spanning_is_ham_path(seed):
    g = random_graph(6, 0.4, seed)
    assert oracle_exists(g, 2, "spanning")[0] == has_ham_path(g)


@pytest.mark.parametrize("seed", range(20))
def test_oracle_t3_any_is_cyclicity(seed):
    g = random_graph(7, 0.25, seed)
    assert oracle_exists(g, 3, "any")[0] == (not nx.is_forest(to_nx(g)))


def test_oracle_degree_obstruction():
    assert not oracle_exists(petersen_graph(), 5, "any")[0]
    found, wit = oracle_exists(petersen_graph(), 4, "any")
    assert found and verify(petersen_graph(), wit, "any").ok
    octahedron = Graph.from_edges(6, [e for e in itertools.combinations(range(6), 2)
                                      if e not in ((0, 1), (2, 3), (4, 5))])
    assert not oracle_exists(octahedron, 5, "any")[0]  # planar


def test_oracle_nearly_balanced():
    found, wit = oracle_exists(cycle_graph(9), 3, "nearly_balanced_spanning")
    ls = list(wit.lengths().values())
    assert found and sum(ls) == 9 and max(ls) - min(ls) <= 2
    found, wit = oracle_exists(complete_graph(4), 4, "nearly_balanced_spanning")
    assert found and set(wit.lengths().values()) == {1}


def test_oracle_size_limit():
    with pytest.raises(ValueError):
        oracle_exists(complete_graph(13), 3)


@pytest.fixture
def k5_sub():
    g = complete_graph(8)
    sub = Subdivision(4, [0, 1, 2, 3], {(0, 1): [0, 4, 1], (0, 2): [0, 5, 2], (0, 3): [0, 3],
                                        (1, 2): [1, 6, 2], (1, 3): [1, 7, 3], (2, 3): [2, 3]})
    return g, sub


def test_valid_subdivision(k5_sub):
    g, sub = k5_sub
    for mode in ("any", "spanning", "nearly_balanced_spanning"):
        assert verify(g, sub, mode).ok


def test_mutations_are_rejected(k5_sub):
    g, sub = k5_sub
    h = Graph.from_edges(8, [e for e in g.edges() if e != (1, 4)])
    assert verify(h, sub).check == "adjacency"
    over = Subdivision(4, sub.branch, {**sub.paths, (0, 3): [0, 4, 3]})
    assert verify(g, over).check == "disjointness"
    gap = Subdivision(4, sub.branch, {**sub.paths, (1, 3): [1, 3]})
    assert verify(g, gap, "any").ok and verify(g, gap).check == "spanning"
    long = complete_graph(10)
    imb = Subdivision(4, sub.branch, {**sub.paths, (1, 3): [1, 7, 8, 9, 3]})
    assert verify(long, imb).ok and verify(long, imb, "nearly_balanced_spanning").check == "near-balance"
    missing = Subdivision(4, sub.branch, {e: p for e, p in sub.paths.items() if e != (2, 3)})
    assert verify(g, missing).check == "structure"
    wrong_end = Subdivision(4, sub.branch, {**sub.paths, (2, 3): [2, 1]})
    assert verify(g, wrong_end).check == "structure"


def test_subdivision_text_round_trip(k5_sub):
    _, sub = k5_sub
    assert Subdivision.from_text(sub.to_text()) == sub
    assert sub.to_text().splitlines()[:3] == ["4", "0 1 2 3", "0 1: 0 4 1"]
    with pytest.raises(GraphFormatError):
        Subdivision.from_text("2\n0 1\n0 1: 0 1\n0 1: 0 1\n")
    with pytest.raises(GraphFormatError):
        Subdivision.from_text("x\n")


def test_mode_validation(k5_sub):
    g, sub = k5_sub
    with pytest.raises(ValueError):
        verify(g, sub, "bogus")
