"""Hopcroft–Karp maximum bipartite matching with a Hall-violator witness."""
from __future__ import annotations

from collections import deque
from typing import Hashable, Mapping, Sequence

_INF = float("inf")


def hopcroft_karp(left: Sequence[Hashable], adj: Mapping[Hashable, Sequence[Hashable]]
                  ) -> dict[Hashable, Hashable]:
    """Maximum matching of a bipartite graph given by left-vertex adjacency.

    Returns ``{left_vertex: right_vertex}``.  Neighbours are tried in the
    order given, so the result is deterministic for a fixed input.
    """
    match_l: dict = {u: None for u in left}
    match_r: dict = {}
    dist: dict = {}

    def bfs() -> bool:
        q = deque()
        for u in left:
            if match_l[u] is None:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = _INF
        found = False
        while q:
            u = q.popleft()
            for w in adj.get(u, ()):
                x = match_r.get(w)
                if x is None:
                    found = True
                elif dist[x] == _INF:
                    dist[x] = dist[u] + 1
                    q.append(x)
        return found

    def dfs(root) -> bool:
        # iterative layered DFS; stack of (vertex, neighbour iterator)
        stack = [(root, iter(adj.get(root, ())))]
        path = []
        while stack:
            u, it = stack[-1]
            advanced = False
            for w in it:
                x = match_r.get(w)
                if x is None:
                    path.append((u, w))
                    for a, b in path:
                        match_l[a] = b
                        match_r[b] = a
                    return True
                if dist[x] == dist[u] + 1:
                    path.append((u, w))
                    stack.append((x, iter(adj.get(x, ()))))
                    advanced = True
                    break
            if not advanced:
                dist[u] = _INF
                stack.pop()
                if path:
                    path.pop()
        return False

    while bfs():
        for u in left:
            if match_l[u] is None:
                dfs(u)
    return {u: w for u, w in match_l.items() if w is not None}


def hall_violator(left: Sequence[Hashable], adj: Mapping[Hashable, Sequence[Hashable]],
                  matching: Mapping[Hashable, Hashable]) -> set:
    """Set ``S`` of left vertices with ``|N(S)| < |S|`` for a maximum, non-saturating matching.

    ``S`` is everything reachable from the unmatched left vertices by
    alternating paths (König's construction).
    """
    match_r = {w: u for u, w in matching.items()}
    free = [u for u in left if u not in matching]
    seen = set(free)
    q = deque(free)
    while q:
        u = q.popleft()
        for w in adj.get(u, ()):
            x = match_r.get(w)
            if x is not None and x not in seen:
                seen.add(x)
                q.append(x)
    return seen
