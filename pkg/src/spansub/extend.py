"""Extendable subgraphs and the path-finding primitives used by every pipeline."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Collection, Iterable, Sequence

import numpy as np

from .errors import (CertificateError, InfeasibleError, JoinednessFalsified, PreconditionError,
                     SearchExhausted)
from .graph import Graph

log = logging.getLogger(__name__)

SHORT_LENGTH = 8


class ExtendableState:
    """A subgraph ``S`` growing inside ``host[allowed]`` with parameters ``(D, m)``.

    ``forbidden`` vertices are used up outside ``S`` and may never become
    path interiors.  ``blocked[v]`` is true for anything that is not free
    (outside ``allowed``, in ``S`` or forbidden, or on a path under search).
    """

    def __init__(self, host: Graph, D: int, m: int, allowed: Iterable[int] | None = None,
                 strict: bool = False):
        if D < 3:
            raise ValueError("D must be at least 3")
        self.host = host
        self.D = int(D)
        self.m = int(m)
        self.strict = strict
        n = host.n
        self.allowed = [True] * n if allowed is None else [False] * n
        if allowed is not None:
            for v in allowed:
                self.allowed[v] = True
        self.in_S = [False] * n
        self.forbidden = [False] * n
        self.deg_S = [0] * n
        self.edges: set[tuple[int, int]] = set()
        self.blocked = [not a for a in self.allowed]
        self._free_deg: list[int] | None = None
        self.size = 0
        self.audits: list = []

    # bookkeeping ------------------------------------------------------------
    def _block(self, v: int) -> None:
        if not self.blocked[v]:
            self.blocked[v] = True
            if self._free_deg is not None:
                fd = self._free_deg
                for w in self.host.adj[v]:
                    fd[w] -= 1

    def _unblock(self, v: int) -> None:
        if self.blocked[v]:
            self.blocked[v] = False
            if self._free_deg is not None:
                fd = self._free_deg
                for w in self.host.adj[v]:
                    fd[w] += 1

    def free_degree(self) -> list[int]:
        """Per-vertex count of free neighbours, maintained incrementally once built."""
        if self._free_deg is None:
            mask = ~np.array(self.blocked, dtype=bool)
            self._free_deg = self.host.count_into(mask).tolist()
        return self._free_deg

    def is_free(self, v: int) -> bool:
        return not self.blocked[v]

    def add_vertex(self, v: int) -> None:
        if not self.allowed[v]:
            raise ValueError(f"vertex {v} lies outside the host")
        if self.forbidden[v]:
            raise ValueError(f"vertex {v} is forbidden")
        if not self.in_S[v]:
            self.in_S[v] = True
            self.size += 1
            self._block(v)

    def add_edge(self, u: int, v: int) -> None:
        if not self.host.has_edge(u, v):
            raise ValueError(f"{u}-{v} is not a host edge")
        key = (u, v) if u < v else (v, u)
        if key in self.edges:
            return
        self.add_vertex(u)
        self.add_vertex(v)
        self.edges.add(key)
        self.deg_S[u] += 1
        self.deg_S[v] += 1

    def add_path(self, path: Sequence[int]) -> None:
        for v in path:
            self.add_vertex(v)
        for a, b in zip(path, path[1:]):
            self.add_edge(a, b)

    def forbid(self, vertices: Iterable[int]) -> None:
        for v in vertices:
            if self.in_S[v]:
                raise ValueError(f"vertex {v} already lies in S")
            self.forbidden[v] = True
            self._block(v)

    def vertices(self) -> list[int]:
        return [v for v in range(self.host.n) if self.in_S[v]]

    def free_vertices(self) -> list[int]:
        return [v for v in range(self.host.n) if not self.blocked[v]]

    def max_degree(self) -> int:
        return max(self.deg_S, default=0)


# extendability checks -------------------------------------------------------
@dataclass(frozen=True)
class ExtendabilityVerdict:
    status: str  # extendable | violated | inconclusive
    witness: tuple[int, ...] | None = None
    checked: int = 0

    def __bool__(self) -> bool:
        return self.status == "extendable"


def _host_vertices(state: ExtendableState) -> list[int]:
    return [v for v in range(state.host.n) if state.allowed[v]]


def _enumeration_size(N: int, top: int) -> int:
    return sum(math.comb(N, s) for s in range(1, top + 1))


def _scan_sets(state: ExtendableState, budget: int, test) -> ExtendabilityVerdict:
    verts = _host_vertices(state)
    top = min(2 * state.m, len(verts))
    if _enumeration_size(len(verts), top) > budget:
        return ExtendabilityVerdict("inconclusive")
    index = {v: i for i, v in enumerate(verts)}
    adj = state.host.adj
    gamma = []  # Γ(v) ∩ host as bitmask over host positions
    for v in verts:
        mask = 0
        for w in adj[v]:
            if w in index:
                mask |= 1 << index[w]
        gamma.append(mask)
    s_mask = 0
    for v in verts:
        if state.in_S[v]:
            s_mask |= 1 << index[v]
    checked = 0
    for size in range(1, top + 1):
        for U in itertools.combinations(range(len(verts)), size):
            checked += 1
            if not test(U, gamma, s_mask, verts):
                return ExtendabilityVerdict("violated", tuple(verts[i] for i in U), checked)
    return ExtendabilityVerdict("extendable", None, checked)


def is_extendable_exhaustive(state: ExtendableState, budget: int = 10**6) -> ExtendabilityVerdict:
    """Check ``|Γ(U) \\ V(S)| >= (D-1)|U| - Σ_{u ∈ U∩V(S)} (d_S(u) - 1)`` for all ``1 <= |U| <= 2m``.

    Sets are enumerated by size, then lexicographically, so a returned
    witness is a smallest one.  ``inconclusive`` when the count exceeds ``budget``.
    """
    D = state.D
    deg = state.deg_S

    def test(U, gamma, s_mask, verts):
        cover = 0
        rhs = (D - 1) * len(U)
        for i in U:
            cover |= gamma[i]
            if state.in_S[verts[i]]:
                rhs -= deg[verts[i]] - 1
        return (cover & ~s_mask).bit_count() >= rhs

    return _scan_sets(state, budget, test)


def sufficient_extendability(state: ExtendableState, budget: int = 10**6) -> ExtendabilityVerdict:
    """Check the stronger ``|N(U) \\ V(S)| >= D|U|`` for all ``1 <= |U| <= 2m``."""
    D = state.D

    def test(U, gamma, s_mask, verts):
        cover = 0
        umask = 0
        for i in U:
            cover |= gamma[i]
            umask |= 1 << i
        return (cover & ~umask & ~s_mask).bit_count() >= D * len(U)

    return _scan_sets(state, budget, test)


def audit_extendability(state: ExtendableState, samples: int = 200, seed=None) -> ExtendabilityVerdict:
    """Sampled version of the defining inequality, biased towards sets touching ``S``."""
    rng = np.random.default_rng(seed)
    verts = _host_vertices(state)
    in_s = [v for v in verts if state.in_S[v]]
    adj = state.host.adj
    D = state.D
    for k in range(samples):
        size = int(rng.integers(1, 2 * state.m + 1))
        pool = in_s if (in_s and k % 2 == 0) else verts
        U = set(int(x) for x in rng.choice(pool, size=min(size, len(pool)), replace=False))
        cover = set()
        for u in U:
            cover.update(w for w in adj[u] if state.allowed[w])
        lhs = sum(1 for w in cover if not state.in_S[w])
        rhs = (D - 1) * len(U) - sum(state.deg_S[u] - 1 for u in U if state.in_S[u])
        if lhs < rhs:
            return ExtendabilityVerdict("violated", tuple(sorted(U)), k + 1)
    return ExtendabilityVerdict("extendable", None, samples)


# exact-length connection ----------------------------------------------------
def connect(state: ExtendableState, a: int, b: int, length: int, *, rng=None,
            restarts: int = 20, prefer: str = "most", budget: int | None = None,
            audit: bool = False) -> list[int]:
    """Find an ``(a, b)``-path with exactly ``length`` edges and add it to ``S``.

    Interior vertices are free (outside ``S`` and ``forbidden``).  The path
    grows greedily from ``a``, preferring the free neighbour with the most
    free neighbours (``prefer="fewest"`` inverts this, ties by index), until
    ``SHORT_LENGTH`` edges remain; the rest is an exhaustive depth-first
    search pruned by free-graph distances to ``b``.  A failed tail backtracks
    the greedy prefix by one vertex.  Raises :class:`SearchExhausted` after
    ``restarts`` randomized attempts.
    """
    if a == b:
        raise ValueError("endpoints must differ")
    if not (state.in_S[a] and state.in_S[b]):
        raise ValueError("endpoints must lie in S")
    if length < 1:
        raise ValueError("length must be positive")
    _check_connect_preconditions(state, a, b, length)
    rng = np.random.default_rng(rng)
    for attempt in range(restarts):
        jitter = 0.0 if attempt == 0 else min(4.0, 0.5 * attempt)
        path = _search(state, a, b, length, rng, jitter, prefer, budget or 20000)
        if path is not None:
            _check_path(state.host, path, a, b, length)
            state.add_path(path)
            if audit:
                state.audits.append(audit_extendability(state, seed=rng.integers(2**32)))
            return path
    raise SearchExhausted(f"no {a}-{b} path of length {length}", restarts)


def _check_connect_preconditions(state: ExtendableState, a: int, b: int, length: int) -> None:
    D, m = state.D, state.m
    msgs = []
    if 2 * state.deg_S[a] > D or 2 * state.deg_S[b] > D:
        msgs.append("endpoint degree in S exceeds D/2")
    k = math.ceil(math.log(max(2 * m, 2)) / math.log(D - 1))
    if length < 2 * k + 1:
        msgs.append(f"length {length} below 2k+1 = {2 * k + 1}")
    host_size = sum(state.allowed)
    if state.size > host_size - 10 * D * m - (length - 2 * k - 1):
        msgs.append("S too large for the connection slack")
    if msgs:
        text = "; ".join(msgs)
        if state.strict:
            raise PreconditionError(text)
        log.debug("connect precondition unmet: %s", text)


def _check_path(host: Graph, path, a, b, length) -> None:
    if len(path) != length + 1 or path[0] != a or path[-1] != b or len(set(path)) != len(path):
        raise AssertionError("search returned a malformed path")
    sets = host.nbr_sets
    for x, y in zip(path, path[1:]):
        if y not in sets[x]:
            raise AssertionError("search returned a non-edge")


def _order(cands: list[int], fd: list[int], rng, jitter: float, prefer: str) -> list[int]:
    sign = -1 if prefer == "most" else 1
    if jitter == 0.0:
        return sorted(cands, key=lambda y: sign * fd[y])
    noise = rng.random(len(cands)) * jitter
    keyed = sorted(range(len(cands)), key=lambda i: sign * fd[cands[i]] + noise[i])
    return [cands[i] for i in keyed]


def _search(state: ExtendableState, a, b, length, rng, jitter, prefer, budget, max_tails: int = 12):
    if length == 1:
        return [a, b] if state.host.has_edge(a, b) else None
    adj = state.host.adj
    blocked = state.blocked
    fd = state.free_degree()
    tail = min(length, SHORT_LENGTH)
    path = [a]
    cands: list[list[int] | None] = [None]
    tails = 0
    pushes = 0
    try:
        while True:
            x = path[-1]
            if len(path) - 1 == length - tail:
                rest = _tail_search(state, x, b, tail, rng, jitter, budget)
                if rest is not None:
                    return path + rest
                tails += 1
                if len(path) == 1 or tails >= max_tails:
                    return None
                path.pop()
                cands.pop()
                state._unblock(x)
                continue
            if cands[-1] is None:
                c = [y for y in adj[x] if not blocked[y]]
                cands[-1] = _order(c, fd, rng, jitter, prefer)[::-1]
            stack = cands[-1]
            y = None
            while stack:
                cand = stack.pop()
                if not blocked[cand]:
                    y = cand
                    break
            if y is None:
                if len(path) == 1:
                    return None
                path.pop()
                cands.pop()
                state._unblock(x)
                continue
            pushes += 1
            if pushes > budget:
                return None
            path.append(y)
            cands.append(None)
            state._block(y)
    finally:
        for v in path[1:]:
            state._unblock(v)


def _tail_search(state: ExtendableState, x, b, length, rng, jitter, budget):
    """Exhaustive (budgeted) search for an ``(x, b)``-path of ``length`` edges through free vertices."""
    adj = state.host.adj
    sets = state.host.nbr_sets
    blocked = state.blocked
    if length == 1:
        return [b] if b in sets[x] else None
    # distances to b through free vertices, capped at length
    dist = {b: 0}
    frontier = [b]
    for depth in range(1, length):
        nxt = []
        for u in frontier:
            for y in adj[u]:
                if not blocked[y] and y not in dist:
                    dist[y] = depth
                    nxt.append(y)
        frontier = nxt
        if not frontier:
            break
    far = length + 1
    fd = state.free_degree()
    out: list[int] = []
    onpath: set[int] = set()
    nodes = 0

    def rec(u, remaining):
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            return False
        if remaining == 1:
            if b in sets[u]:
                out.append(b)
                return True
            return False
        cands = [y for y in adj[u] if not blocked[y] and y not in onpath
                 and dist.get(y, far) <= remaining - 1]
        for y in _order(cands, fd, rng, jitter, "most"):
            out.append(y)
            onpath.add(y)
            if rec(y, remaining - 1):
                return True
            out.pop()
            onpath.discard(y)
        return False

    return list(out) if rec(x, length) else None


# stars ----------------------------------------------------------------------
@dataclass(frozen=True)
class StarSystem:
    t: int
    stars: tuple[tuple[int, tuple[int, ...]], ...]

    @property
    def centers(self) -> list[int]:
        return [c for c, _ in self.stars]

    def vertices(self) -> set[int]:
        out = set()
        for c, leaves in self.stars:
            out.add(c)
            out.update(leaves)
        return out


def greedy_stars(g: Graph, t: int, avoid: Collection[int] = (), allowed: Collection[int] | None = None
                 ) -> StarSystem:
    """``t`` vertex-disjoint stars with ``t-1`` leaves each.

    Centers are chosen by maximum residual degree (ties: smallest index);
    leaves are the smallest-index unused neighbours.
    """
    if t < 2:
        raise ValueError("t must be at least 2")
    n = g.n
    ok = [True] * n if allowed is None else [False] * n
    if allowed is not None:
        for v in allowed:
            ok[v] = True
    for v in avoid:
        ok[v] = False
    adj = g.adj
    res = [sum(1 for w in adj[v] if ok[w]) if ok[v] else -1 for v in range(n)]
    stars = []

    def use(v):
        ok[v] = False
        res[v] = -1
        for w in adj[v]:
            if ok[w]:
                res[w] -= 1

    for _ in range(t):
        best = max(range(n), key=lambda v: (res[v], -v), default=None)
        if best is None or res[best] < t - 1:
            raise PreconditionError(f"only {len(stars)} disjoint stars with {t - 1} leaves exist")
        leaves = [w for w in adj[best] if ok[w]][: t - 1]
        use(best)
        for w in leaves:
            use(w)
        stars.append((best, tuple(leaves)))
    return StarSystem(t, tuple(stars))


# Hamilton paths -------------------------------------------------------------
def hamilton_path(g: Graph, restrict: Collection[int], a: int, b: int, *, rng=None,
                  restarts: int = 30, rotation_factor: int = 50) -> list[int]:
    """Hamiltonian ``(a, b)``-path of ``g[restrict]`` by rotation–extension.

    The path grows from ``a`` over ``restrict \\ {b}`` (extensions pick the
    neighbour with fewest unvisited neighbours); when stuck, or when complete
    but not ending next to ``b``, a Pósa rotation about an edge from the end
    moves the endpoint.  Each restart allows ``rotation_factor·|restrict|``
    rotations.  The result is verified before return.  A vertex of too small
    degree inside ``restrict`` raises :class:`InfeasibleError` up front.
    """
    R = set(restrict)
    if a == b or a not in R or b not in R:
        raise ValueError("a and b must be distinct members of restrict")
    adj = g.adj
    for v in R:
        need = 1 if v in (a, b) else 2
        deg = sum(1 for w in adj[v] if w in R)
        if deg < need and len(R) > 2:
            raise InfeasibleError(f"vertex {v} has {deg} neighbour(s) in the set; no Hamiltonian {a}-{b} path")
    rng = np.random.default_rng(rng)
    sets = g.nbr_sets
    inner = R - {b}
    nb = sets[b] & inner
    size = len(inner)
    cap = rotation_factor * len(R)
    inner_adj = {v: [w for w in adj[v] if w in inner] for v in inner}
    for _ in range(restarts):
        path = [a]
        pos = {a: 0}
        unvis = {v: len(inner_adj[v]) for v in inner}
        for w in inner_adj[a]:
            unvis[w] -= 1
        rotations = 0
        while True:
            end = path[-1]
            if len(path) == size:
                if end in nb:
                    result = path + [b]
                    _verify_hamilton(g, R, result, a, b)
                    return result
            else:
                ext = [y for y in inner_adj[end] if y not in pos]
                if ext:
                    low = min(unvis[y] for y in ext)
                    best = [y for y in ext if unvis[y] == low]
                    y = best[int(rng.integers(len(best)))]
                    pos[y] = len(path)
                    path.append(y)
                    for w in inner_adj[y]:
                        unvis[w] -= 1
                    continue
            if rotations >= cap:
                break
            pivots = [pos[u] for u in inner_adj[end] if u in pos and pos[u] < len(path) - 2]
            if not pivots:
                break
            if len(path) == size:
                good = [i for i in pivots if path[i + 1] in nb]
            else:
                good = [i for i in pivots if unvis[path[i + 1]] > 0]
            choices = good or pivots
            i = choices[int(rng.integers(len(choices)))]
            path[i + 1:] = path[:i:-1]
            for k in range(i + 1, len(path)):
                pos[path[k]] = k
            rotations += 1
    raise SearchExhausted(f"no Hamiltonian {a}-{b} path on {len(R)} vertices", restarts)


def _verify_hamilton(g: Graph, R: set, path: list[int], a: int, b: int) -> None:
    if path[0] != a or path[-1] != b or len(path) != len(R) or set(path) != R:
        raise AssertionError("rotation search returned a path not covering restrict")
    sets = g.nbr_sets
    if any(y not in sets[x] for x, y in zip(path, path[1:])):
        raise AssertionError("rotation search returned a non-edge")


# DFS long path --------------------------------------------------------------
def dfs_long_path(g: Graph, restrict: Collection[int] | None = None, m: int | None = None, *,
                  certified: bool = False, order: str = "fewest", start: int | None = None
                  ) -> list[int]:
    """Deepest stack of a depth-first traversal of ``g[restrict]``, as a path.

    The traversal restarts from a new root whenever the stack empties.  With
    ``order="fewest"`` the next vertex is the unvisited neighbour with fewest
    unvisited neighbours (ties by index); ``order="index"`` takes the smallest
    index.  If ``certified`` the length bound ``|restrict| - 2m`` is asserted.
    """
    R = set(range(g.n)) if restrict is None else set(restrict)
    adj = g.adj
    inner_adj = {v: [w for w in adj[v] if w in R] for v in R}
    unvis = {v: len(inner_adj[v]) for v in R}
    visited = set()
    best: list[int] = []
    roots = sorted(R)
    if start is not None:
        roots = [start] + [v for v in roots if v != start]
    fewest = order == "fewest"

    def visit(v):
        visited.add(v)
        for w in inner_adj[v]:
            unvis[w] -= 1

    for root in roots:
        if root in visited:
            continue
        stack = [root]
        visit(root)
        grew = True
        while stack:
            x = stack[-1]
            cand = [y for y in inner_adj[x] if y not in visited]
            if cand:
                y = min(cand, key=lambda v: (unvis[v], v)) if fewest else min(cand)
                stack.append(y)
                visit(y)
                grew = True
            else:
                if grew and len(stack) > len(best):
                    best = list(stack)
                grew = False
                stack.pop()
    if certified:
        if m is None:
            raise ValueError("certified mode needs m")
        if len(best) - 1 < len(R) - 2 * m:
            raise CertificateError(f"path of length {len(best) - 1} < {len(R)} - 2*{m}")
    return best


# length-3 connections -------------------------------------------------------
def three_path_connect(g: Graph, v: int, v2: int, U: Collection[int], Z: Collection[int] = (),
                       avoid: Collection[int] = (), *, eps_n: float | None = None,
                       strict: bool = False, rng=None) -> list[int]:
    """Path ``v-x-y-v2`` with ``x, y ∈ U \\ (Z ∪ avoid)``.

    ``X ⊆ N(v)`` and ``Y ⊆ N(v2)`` are disjoint pools built from all eligible
    neighbours (shared ones split alternately); the first edge found between
    them is returned.  When ``eps_n`` is given the degree precondition
    ``d(v,U), d(v2,U) > |Z| + 4·eps_n`` is checked (raises only if ``strict``).
    No edge raises :class:`JoinednessFalsified` carrying ``X`` and ``Y``.
    """
    if v == v2:
        raise ValueError("endpoints must differ")
    sets = g.nbr_sets
    if eps_n is not None:
        need = len(Z) + 4 * eps_n
        dv = sum(1 for w in g.adj[v] if w in U)
        dv2 = sum(1 for w in g.adj[v2] if w in U)
        if not (dv > need and dv2 > need):
            if strict:
                raise PreconditionError(f"degrees into U ({dv}, {dv2}) not above {need}")
            log.debug("length-3 connection precondition unmet")

    def pool(x, other):
        return [w for w in g.adj[x] if w in U and w not in Z and w not in avoid and w != other]

    px, py = pool(v, v2), pool(v2, v)
    sy = set(py)
    common = [w for w in px if w in sy]
    cset = set(common)
    X = [w for w in px if w not in cset]
    Y = [w for w in py if w not in cset]
    gen = np.random.default_rng(rng)
    if common:
        common = [common[i] for i in gen.permutation(len(common))]
        X += common[0::2]
        Y += common[1::2]
    Yset = set(Y)
    order = gen.permutation(len(X)) if X else []
    for i in order:
        x = X[int(i)]
        hits = sets[x] & Yset
        if hits:
            return [v, x, min(hits), v2]
    raise JoinednessFalsified(f"no edge between pools of {v} ({len(X)}) and {v2} ({len(Y)})",
                              tuple(sorted(X)), tuple(sorted(Y)))
