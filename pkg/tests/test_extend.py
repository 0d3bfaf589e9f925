import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spansub.errors import (CertificateError, InfeasibleError, JoinednessFalsified, PreconditionError,
                            SearchExhausted)
from spansub.extend import (ExtendableState, connect, dfs_long_path, greedy_stars, hamilton_path,
                            is_extendable_exhaustive, sufficient_extendability, three_path_connect)
from spansub.graph import complete_graph, cycle_graph, path_graph, petersen_graph, random_regular
from spansub.graph import Graph

from conftest import random_graph


def brute_extendable(state):
    """Direct set-based evaluation of the extendability inequality."""
    g = state.host
    verts = [v for v in range(g.n) if state.allowed[v]]
    S = {v for v in verts if state.in_S[v]}
    for size in range(1, min(2 * state.m, len(verts)) + 1):
        for U in itertools.combinations(verts, size):
            gamma = {w for u in U for w in g.neighbors(u) if state.allowed[w]}
            rhs = (state.D - 1) * size - sum(state.deg_S[u] - 1 for u in U if u in S)
            if len(gamma - S) < rhs:
                return False
    return True


def random_state(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 13))
    g = random_graph(n, float(rng.uniform(0.3, 0.9)), seed)
    st_ = ExtendableState(g, int(rng.integers(3, 5)), int(rng.integers(1, 3)))
    edges = g.edges()
    for i in rng.permutation(len(edges))[: int(rng.integers(0, 4))]:
        st_.add_edge(*edges[int(i)])
    return st_


@pytest.mark.parametrize("seed", range(40))
def test_exhaustive_check_matches_brute_force(seed):
    st_ = random_state(seed)
    verdict = is_extendable_exhaustive(st_)
    assert bool(verdict) == brute_extendable(st_)
    if not verdict:
        assert verdict.witness is not None


@pytest.mark.parametrize("seed", range(40))
def test_sufficient_implies_extendable(seed):
    st_ = random_state(seed)
    if sufficient_extendability(st_):
        assert is_extendable_exhaustive(st_)


def test_inconclusive_over_budget():
    st_ = ExtendableState(random_regular(40, 6, 0), 3, 4)
    assert is_extendable_exhaustive(st_, budget=100).status == "inconclusive"


def test_state_bookkeeping():
    g = complete_graph(6)
    st_ = ExtendableState(g, 3, 1, allowed=range(5))
    st_.add_path([0, 1, 2])
    assert st_.vertices() == [0, 1, 2] and st_.max_degree() == 2
    assert st_.free_vertices() == [3, 4]
    st_.forbid([4])
    assert st_.free_vertices() == [3]
    with pytest.raises(ValueError):
        st_.add_vertex(5)
    with pytest.raises(ValueError):
        st_.add_vertex(4)
    with pytest.raises(ValueError):
        st_.forbid([0])
    with pytest.raises(ValueError):
        ExtendableState(g, 2, 1)


@pytest.mark.parametrize("length", [3, 5, 10, 30])
def test_connect_exact_length(length):
    g = random_regular(200, 20, 1)
    st_ = ExtendableState(g, 3, 1)
    st_.add_vertex(0)
    st_.add_vertex(1)
    path = connect(st_, 0, 1, length, rng=0)
    assert path[0] == 0 and path[-1] == 1 and len(path) == length + 1 == len(set(path))
    assert all(g.has_edge(a, b) for a, b in zip(path, path[1:]))
    assert set(path) <= set(st_.vertices())


def test_connect_avoids_forbidden_and_S():
    g = complete_graph(8)
    st_ = ExtendableState(g, 3, 1)
    st_.add_path([0, 1])
    st_.add_vertex(2)
    st_.forbid([3, 4, 5])
    path = connect(st_, 0, 2, 3, rng=0)
    assert set(path[1:-1]) <= {6, 7}


def test_connect_gives_up():
    g = path_graph(6)
    st_ = ExtendableState(g, 3, 1)
    st_.add_vertex(0)
    st_.add_vertex(5)
    with pytest.raises(SearchExhausted):
        connect(st_, 0, 5, 3, rng=0, restarts=2)


def test_greedy_stars():
    g = random_regular(100, 10, 2)
    stars = greedy_stars(g, 5)
    assert len(stars.centers) == 5 and len(stars.vertices()) == 25
    for c, leaves in stars.stars:
        assert len(leaves) == 4 and all(g.has_edge(c, w) for w in leaves)
    with pytest.raises(PreconditionError):
        greedy_stars(cycle_graph(10), 4)


def has_ham_path(g, R, a, b):
    inner = [v for v in R if v not in (a, b)]
    for perm in itertools.permutations(inner):
        p = [a, *perm, b]
        if all(g.has_edge(x, y) for x, y in zip(p, p[1:])):
            return True
    return False


@pytest.mark.parametrize("seed", range(20))
def test_hamilton_path_agrees_with_brute_force(seed):
    g = random_graph(8, 0.6, seed)
    exists = has_ham_path(g, range(8), 0, 7)
    try:
        path = hamilton_path(g, range(8), 0, 7, rng=seed, restarts=50)
    except (SearchExhausted, InfeasibleError):
        assert not exists
    else:
        assert exists and path[0] == 0 and path[-1] == 7 and sorted(path) == list(range(8))


def test_hamilton_path_degree_obstruction():
    g = complete_graph(6)
    star_tail = Graph.from_edges(7, g.edges() + [(5, 6)])
    with pytest.raises(InfeasibleError, match="vertex 6"):
        hamilton_path(star_tail, range(7), 0, 1)


def test_hamilton_path_large():
    g = random_regular(500, 30, 4)
    R = range(100, 400)
    path = hamilton_path(g, R, 100, 399, rng=0)
    assert sorted(path) == list(R)


def brute_longest(g):
    best = 0
    for v in range(g.n):
        stack = [(v, {v}, 0)]
        while stack:
            x, seen, ln = stack.pop()
            best = max(best, ln)
            for y in g.neighbors(x):
                if y not in seen:
                    stack.append((y, seen | {y}, ln + 1))
    return best


@pytest.mark.parametrize("seed", range(10))
def test_dfs_long_path_is_a_path(seed):
    g = random_graph(10, 0.4, seed)
    p = dfs_long_path(g)
    assert len(set(p)) == len(p) and all(g.has_edge(a, b) for a, b in zip(p, p[1:]))
    assert len(p) - 1 <= brute_longest(g)


def test_dfs_long_path_certified():
    g = complete_graph(10)
    assert len(dfs_long_path(g, m=1, certified=True)) == 10
    empty = Graph.from_edges(6, [])
    with pytest.raises(CertificateError):
        dfs_long_path(empty, m=1, certified=True)


def test_three_path_connect():
    g = random_regular(300, 60, 0)
    U = set(range(100, 300))
    p = three_path_connect(g, 0, 1, U, rng=0)
    assert p[0] == 0 and p[-1] == 1 and set(p[1:3]) <= U
    assert all(g.has_edge(a, b) for a, b in zip(p, p[1:]))


def test_three_path_connect_falsified():
    g = petersen_graph()
    with pytest.raises(JoinednessFalsified) as exc:
        three_path_connect(g, 0, 2, {5, 6}, rng=0)
    assert not any(g.has_edge(x, y) for x in exc.value.X for y in exc.value.Y)
