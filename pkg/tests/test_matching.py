import networkx as nx
from hypothesis import given, strategies as st

from spansub.matching import hall_violator, hopcroft_karp


bipartite = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(lambda ab: st.tuples(
    st.just(ab[0]), st.just(ab[1]),
    st.sets(st.tuples(st.integers(0, ab[0] - 1), st.integers(0, ab[1] - 1)), max_size=30)))


@given(bipartite)
def test_matching_size_agrees_with_networkx(case):
    a, b, edges = case
    left = [("L", i) for i in range(a)]
    adj = {u: [] for u in left}
    for i, j in sorted(edges):
        adj[("L", i)].append(("R", j))
    m = hopcroft_karp(left, adj)
    assert all(w in adj[u] for u, w in m.items())
    assert len(set(m.values())) == len(m)
    h = nx.Graph()
    h.add_nodes_from(left)
    h.add_nodes_from(("R", j) for j in range(b))
    h.add_edges_from((("L", i), ("R", j)) for i, j in edges)
    assert len(m) == len(nx.bipartite.maximum_matching(h, top_nodes=left)) // 2
    if len(m) < a:
        S = hall_violator(left, adj, m)
        assert len({w for u in S for w in adj[u]}) < len(S)


def test_deterministic_for_fixed_input():
    left = list(range(5))
    adj = {u: [10 + (u + k) % 5 for k in range(3)] for u in left}
    assert hopcroft_karp(left, adj) == hopcroft_karp(left, adj)
