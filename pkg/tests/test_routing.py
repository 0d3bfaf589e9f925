import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spansub.errors import InfeasibleError, MatchingFailure
from spansub.extend import ExtendableState
from spansub.graph import Graph, complete_bipartite_graph, random_regular
from spansub.params import DeskScaleParams
from spansub.routing import (SortingRouter, assemble_sigma, build_comparator_network, check_path_factor,
                             embed_router, log_length, matching_chain, near_equal_blocks,
                             plan_lengths_balanced, plan_lengths_unbalanced, route, sorts_all_binary,
                             split_window, unbalanced_pairs)


@pytest.mark.parametrize("w", range(1, 13))
def test_bitonic_network_sorts_all_binary(w):
    net = build_comparator_network(w, verify=True)
    assert sorts_all_binary(net)
    assert all(i < j < w for layer in net.layers for i, j in layer)


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=40))
def test_bitonic_network_sorts(values):
    assert build_comparator_network(len(values)).apply(values) == sorted(values)


def test_network_depth_is_logarithmic():
    for w in (8, 16, 32):
        k = int(math.log2(w))
        assert build_comparator_network(w).depth == k * (k + 1) // 2


def test_broken_network_fails_zero_one_test():
    net = build_comparator_network(4)
    broken = type(net)(4, net.layers[:-1])
    assert not sorts_all_binary(broken)


@pytest.fixture(scope="module")
def router4():
    g = random_regular(300, 30, 5)
    rng = np.random.default_rng(0)
    t_in = [int(v) for v in rng.permutation(g.n)[:4]]
    return g, embed_router(ExtendableState(g, 3, 1), t_in, rng=rng)


def test_route_every_permutation(router4):
    g, router = router4
    for perm in itertools.permutations(range(4)):
        sigma = {router.terminals_in[i]: router.terminals_out[perm[i]] for i in range(4)}
        paths = route(router, sigma)
        check_path_factor(g, router, sigma, paths)


def test_router_json_round_trip(router4):
    _, router = router4
    again = SortingRouter.from_json(router.to_json())
    assert again == router and again.to_json() == router.to_json()


def test_router_with_out_terminals():
    g = random_regular(400, 30, 6)
    rng = np.random.default_rng(1)
    perm = [int(v) for v in rng.permutation(g.n)]
    t_in, t_out = perm[:3], perm[3:6]
    st_ = ExtendableState(g, 3, 1, allowed=[v for v in range(g.n)])
    router = embed_router(st_, t_in, t_out, rng=rng)
    assert router.terminals_out == t_out
    for p in itertools.permutations(range(3)):
        sigma = {t_in[i]: t_out[p[i]] for i in range(3)}
        check_path_factor(g, router, sigma, route(router, sigma))


def test_route_rejects_non_bijection(router4):
    _, router = router4
    sigma = {v: router.terminals_out[0] for v in router.terminals_in}
    with pytest.raises(ValueError):
        route(router, sigma)


def test_split_window():
    assert split_window(3, 10, 20, 2) == [4, 3, 3]
    assert split_window(3, 1, 20, 5) == [5, 5, 5]
    assert split_window(0, 0, 5, 1) == []
    with pytest.raises(InfeasibleError):
        split_window(3, 1, 10, 4)


@given(st.integers(0, 200), st.integers(1, 12))
def test_near_equal_blocks_partition(total, k):
    blocks = near_equal_blocks(total, list(range(k)))
    flat = [x for b in blocks.values() for x in b]
    assert flat == list(range(total))
    sizes = [len(b) for b in blocks.values()]
    assert max(sizes) - min(sizes) <= 1


@given(st.integers(200, 20000), st.integers(2, 8))
def test_unbalanced_plan_window(n, t):
    params = DeskScaleParams()
    try:
        plan = plan_lengths_unbalanced(n, t, params)
    except InfeasibleError:
        return
    lo = (1 - params.p) * n - 200 * params.epsilon * n
    hi = (1 - params.p) * n - 100 * params.epsilon * n
    assert set(plan.pair_lengths) == set(unbalanced_pairs(t))
    if t == 2:
        assert plan.pair_lengths == {}  # the single pair is left to the Hamilton path
        return
    total = sum(plan.pair_lengths.values())
    assert lo <= total <= hi
    assert all(x >= log_length(params.beta_log, n) for x in plan.pair_lengths.values())


def test_balanced_plan_identity():
    n, t, k, ell, mp = 4000, 3, 3, 40, 13
    sizes = {"V_prime": 200, "Z": 100, "m": 16}
    plan = plan_lengths_balanced(n, t, k, ell, mp, sizes)
    totals = list(plan.totals().values())
    assert max(totals) - min(totals) <= 1
    fill = k * (16 - math.ceil(DeskScaleParams().epsilon * 16))
    used = sum(a - 1 + b - 1 for a, b in plan.pair_lengths.values())
    assert n - 200 - 100 - mp * (plan.loop_length - 1) - used == fill


def test_balanced_plan_infeasible_when_too_small():
    with pytest.raises(InfeasibleError):
        plan_lengths_balanced(100, 5, 3, 40, 10, {"V_prime": 50, "Z": 20, "m": 16})


def layered_graph(size, layers):
    """Complete bipartite joins between consecutive layers of ``size`` vertices."""
    n = size * layers
    edges = [(a, b) for L in range(layers - 1) for a in range(L * size, (L + 1) * size)
             for b in range((L + 1) * size, (L + 2) * size)]
    return Graph.from_edges(n, edges)


def test_matching_chain_paths():
    g = layered_graph(4, 4)
    res = matching_chain(g, range(4), [range(4, 8), range(8, 12)], range(12, 16))
    assert len(res.paths) == 4
    covered = [v for p in res.paths.values() for v in p]
    assert sorted(covered) == list(range(16))
    assert all(g.has_edge(a, b) for p in res.paths.values() for a, b in zip(p, p[1:]))


def test_matching_chain_failure_carries_witness():
    g = Graph.from_edges(4, [(0, 2), (1, 2)])
    with pytest.raises(MatchingFailure):
        matching_chain(g, [0, 1], [], [2, 3])


def test_assemble_sigma_threads_loops():
    loops = [(100, 200), (101, 201)]
    blocks = {(0, 1): (0, 1), (0, 2): ()}
    v_prime = {(0, 1): 1, (0, 2): 2}
    chain_end = {100: 11, 101: 12}
    u_out = {(0, 1): 301, (0, 2): 302}
    sigma = assemble_sigma(blocks, loops, v_prime, chain_end, u_out)
    assert sigma == {1: 200, 11: 201, 12: 301, 2: 302}
