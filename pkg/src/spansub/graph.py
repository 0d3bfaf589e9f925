"""Simple undirected graphs on ``0..n-1``, generators, edge-list IO and partitions."""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphFormatError, InfeasibleError, RetryBudgetExhausted
from .params import DeskScaleParams, as_fraction


class Graph:
    """Immutable simple undirected graph with vertices ``0..n-1``.

    Adjacency is stored in CSR form (``indptr``, ``indices``) with every
    neighbour list sorted.  Python tuples and frozensets of neighbours are
    built lazily on first use, since search loops want them but bulk numeric
    code does not.
    """

    __slots__ = ("n", "indptr", "indices", "edge_count", "_adj", "_sets", "_rows")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.edge_count = int(len(self.indices) // 2)
        self._adj = None
        self._sets = None
        self._rows = None

    # construction ---------------------------------------------------------
    @classmethod
    def from_edge_arrays(cls, n: int, u, v, *, strict: bool = True) -> "Graph":
        """Build from parallel endpoint arrays.

        With ``strict`` loops and repeated edges raise; otherwise they are dropped.
        """
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise ValueError("endpoint arrays differ in length")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ValueError("vertex out of range")
        loops = u == v
        if loops.any():
            if strict:
                raise ValueError(f"self-loop at vertex {int(u[loops][0])}")
            u, v = u[~loops], v[~loops]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = np.sort(lo * n + hi)
        if len(key) > 1:
            dup = key[1:] == key[:-1]
            if dup.any():
                if strict:
                    k = int(key[1:][dup][0])
                    raise ValueError(f"duplicate edge {k // n} {k % n}")
                key = np.unique(key)
        lo, hi = key // n, key % n
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, indptr, cols)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], *, strict: bool = True) -> "Graph":
        pairs = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls.from_edge_arrays(n, pairs[:, 0], pairs[:, 1], strict=strict)

    # queries --------------------------------------------------------------
    @property
    def adj(self) -> tuple[tuple[int, ...], ...]:
        if self._adj is None:
            flat = self.indices.tolist()
            ptr = self.indptr.tolist()
            self._adj = tuple(tuple(flat[ptr[v]:ptr[v + 1]]) for v in range(self.n))
        return self._adj

    @property
    def nbr_sets(self) -> tuple[frozenset, ...]:
        if self._sets is None:
            self._sets = tuple(frozenset(a) for a in self.adj)
        return self._sets

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.nbr_sets[u]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def min_degree(self) -> int:
        return int(self.degrees().min()) if self.n else 0

    def max_degree(self) -> int:
        return int(self.degrees().max()) if self.n else 0

    def regular_degree(self) -> int | None:
        """Common degree if the graph is regular, else ``None``."""
        if self.n == 0:
            return 0
        deg = self.degrees()
        return int(deg[0]) if (deg == deg[0]).all() else None

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints ``(u, v)`` with ``u < v``, sorted lexicographically."""
        rows = self.row_index()
        keep = rows < self.indices
        return rows[keep], self.indices[keep]

    def edges(self) -> list[tuple[int, int]]:
        u, v = self.edge_arrays()
        return list(zip(u.tolist(), v.tolist()))

    def row_index(self) -> np.ndarray:
        """Row of every CSR entry (the source vertex of each half-edge)."""
        if self._rows is None:
            self._rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())
        return self._rows

    def count_into(self, mask: np.ndarray) -> np.ndarray:
        """Per-vertex number of neighbours inside the boolean ``mask``."""
        hits = np.asarray(mask, dtype=bool)[self.indices]
        return np.bincount(self.row_index()[hits], minlength=self.n)

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=dtype)
        a[self.row_index(), self.indices] = 1
        return a

    def induced_edge_count(self, vertices: Iterable[int]) -> int:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(vertices)] = True
        return int(self.count_into(mask)[mask].sum() // 2)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.n, self.edge_count, self.indices[:64].tobytes()))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.edge_count})"


def check_graph(g: Graph) -> None:
    """Full adjacency scan for simplicity, symmetry and the edge count."""
    seen = set()
    for v in range(g.n):
        nb = g.adj[v]
        if any(nb[i] >= nb[i + 1] for i in range(len(nb) - 1)):
            raise AssertionError(f"neighbours of {v} not strictly sorted")
        if v in nb:
            raise AssertionError(f"self-loop at {v}")
        for w in nb:
            if v not in g.nbr_sets[w]:
                raise AssertionError(f"asymmetric edge {v}-{w}")
            seen.add((min(v, w), max(v, w)))
    if len(seen) != g.edge_count or 2 * g.edge_count != int(g.degrees().sum()):
        raise AssertionError("edge count mismatch")


# generators -----------------------------------------------------------------
def empty_graph(n: int) -> Graph:
    return Graph.from_edge_arrays(n, [], [])


def complete_graph(n: int) -> Graph:
    u, v = np.triu_indices(n, k=1)
    return Graph.from_edge_arrays(n, u, v)


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    u = np.arange(n)
    return Graph.from_edge_arrays(n, u, (u + 1) % n)


def path_graph(n: int) -> Graph:
    u = np.arange(max(n - 1, 0))
    return Graph.from_edge_arrays(n, u, u + 1)


def complete_bipartite_graph(a: int, b: int) -> Graph:
    u, v = np.meshgrid(np.arange(a), np.arange(a, a + b), indexing="ij")
    return Graph.from_edge_arrays(a + b, u, v)


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph.from_edges(10, outer + spokes + inner)


def disjoint_union(*graphs: Graph) -> Graph:
    us, vs, offset = [], [], 0
    for g in graphs:
        u, v = g.edge_arrays()
        us.append(u + offset)
        vs.append(v + offset)
        offset += g.n
    if not us:
        return empty_graph(0)
    return Graph.from_edge_arrays(offset, np.concatenate(us), np.concatenate(vs))


def complement(g: Graph) -> Graph:
    a = g.to_dense(dtype=bool)
    a = ~a
    np.fill_diagonal(a, False)
    u, v = np.nonzero(np.triu(a, k=1))
    return Graph.from_edge_arrays(g.n, u, v)


def union(g1: Graph, g2: Graph) -> Graph:
    """Edge-wise union of two graphs on the same vertex set."""
    if g1.n != g2.n:
        raise ValueError(f"vertex-set mismatch: {g1.n} vs {g2.n}")
    u1, v1 = g1.edge_arrays()
    u2, v2 = g2.edge_arrays()
    return Graph.from_edge_arrays(g1.n, np.concatenate([u1, u2]), np.concatenate([v1, v2]),
                                  strict=False)


def clique_with_isolated(n: int, m: int) -> Graph:
    """``K_{n-m+1}`` plus ``m-1`` isolated vertices (m-joined, not (m-1)-joined)."""
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    return disjoint_union(complete_graph(n - m + 1), empty_graph(m - 1))


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    for f in range(2, math.isqrt(q) + 1):
        if q % f == 0:
            return False
    return True


def paley_graph(q: int) -> Graph:
    """Paley graph on ``Z_q``: ``x ~ y`` iff ``x - y`` is a nonzero square mod ``q``."""
    if not _is_prime(q) or q % 4 != 1:
        raise ValueError(f"q must be a prime congruent to 1 mod 4, got {q}")
    squares = np.zeros(q, dtype=bool)
    squares[(np.arange(1, q) ** 2) % q] = True
    u, v = np.triu_indices(q, k=1)
    keep = squares[(v - u) % q]
    return Graph.from_edge_arrays(q, u[keep], v[keep])


def gnp(n: int, p: float, seed=None) -> Graph:
    """Binomial random graph; each of the ``n(n-1)/2`` pairs present with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    total = n * (n - 1) // 2
    count = int(rng.binomial(total, p)) if total else 0
    idx = np.sort(rng.choice(total, size=count, replace=False)) if count else np.zeros(0, np.int64)
    # Invert the row-major upper-triangle index k -> (u, v).
    u = (n - 2 - np.floor(np.sqrt(-8.0 * idx + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    v = idx + u + 1 - n * (n - 1) // 2 + (n - u) * ((n - u) - 1) // 2
    return Graph.from_edge_arrays(n, u, v)


def random_regular(n: int, d: int, seed=None, *, max_restarts: int = 1000) -> Graph:
    """Random simple ``d``-regular graph on ``n`` vertices.

    For small ``d`` the pairing model is resampled until simple.  For larger
    ``d`` a simple pairing is exponentially unlikely, so loops and repeated
    pairs are repaired by random double-edge switches instead.  Degrees above
    ``(n-1)/2`` are produced as complements of the low-degree case.
    """
    if d < 0 or n < 0:
        raise ValueError("n and d must be non-negative")
    if d >= n and not (n == 0 and d == 0):
        raise InfeasibleError(f"degree {d} needs more than {n} vertices")
    if (n * d) % 2:
        raise InfeasibleError(f"n*d = {n * d} is odd")
    if d == 0:
        return empty_graph(n)
    if d == n - 1:
        return complete_graph(n)
    rng = np.random.default_rng(seed)
    if 2 * d > n - 1:
        return complement(_regular_low(n, n - 1 - d, rng, max_restarts))
    return _regular_low(n, d, rng, max_restarts)


def _pairing(n: int, d: int, rng) -> tuple[np.ndarray, np.ndarray]:
    stubs = rng.permutation(np.repeat(np.arange(n, dtype=np.int64), d))
    return stubs[0::2].copy(), stubs[1::2].copy()


def _regular_low(n: int, d: int, rng, max_restarts: int) -> Graph:
    if d == 0:
        return empty_graph(n)
    if (d * d - 1) / 4 <= 3:
        for _ in range(max_restarts):
            u, v = _pairing(n, d, rng)
            if (u != v).all():
                key = np.minimum(u, v) * n + np.maximum(u, v)
                if len(np.unique(key)) == len(key):
                    return Graph.from_edge_arrays(n, u, v)
        raise RetryBudgetExhausted("pairing model never produced a simple graph", max_restarts)
    for _ in range(max_restarts):
        u, v = _pairing(n, d, rng)
        if _switch_repair(n, u, v, rng):
            return Graph.from_edge_arrays(n, u, v)
    raise RetryBudgetExhausted("switching repair stalled", max_restarts)


def _switch_repair(n: int, u: np.ndarray, v: np.ndarray, rng, stall: int = 200) -> bool:
    """Remove loops and repeated pairs in place by double-edge switches."""
    E = len(u)
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    keys = lo * n + hi
    uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
    bad_mask = np.ones(E, dtype=bool)
    bad_mask[first] = False
    bad_mask |= u == v
    bad = np.flatnonzero(bad_mask).tolist()
    if not bad:
        return True
    count = dict(zip(uniq.tolist(), counts.tolist()))
    uu, vv = u.tolist(), v.tolist()
    bad_set = set(bad)
    picks = rng.integers(0, E, size=64 * len(bad) + 1024).tolist()
    flips = rng.integers(0, 2, size=len(picks)).tolist()
    pos = 0

    def key(a, b):
        return a * n + b if a < b else b * n + a

    for i in bad:
        a, b = uu[i], vv[i]
        tries = 0
        while True:
            if pos >= len(picks):
                picks = rng.integers(0, E, size=4096).tolist()
                flips = rng.integers(0, 2, size=4096).tolist()
                pos = 0
            j, flip = picks[pos], flips[pos]
            pos += 1
            tries += 1
            if tries > stall:
                return False
            if j == i or j in bad_set:
                continue
            c, e = (uu[j], vv[j]) if flip else (vv[j], uu[j])
            if a == c or b == e:
                continue
            k1, k2 = key(a, c), key(b, e)
            if k1 == k2 or count.get(k1, 0) or count.get(k2, 0):
                continue
            kab, kce = key(a, b), key(c, e)
            count[kab] -= 1
            count[kce] -= 1
            count[k1] = 1
            count[k2] = 1
            uu[i], vv[i] = a, c
            uu[j], vv[j] = b, e
            bad_set.discard(i)
            break
    u[:] = uu
    v[:] = vv
    return True


def two_cliques(n: int) -> Graph:
    """Two disjoint cliques on ``n/2`` vertices each."""
    if n % 2:
        raise ValueError("n must be even")
    return disjoint_union(complete_graph(n // 2), complete_graph(n // 2))


def perturbed_two_cliques(n: int, p: float, seed=None) -> Graph:
    """Two disjoint ``K_{n/2}`` with an independent ``G(n, p)`` sprinkled on top."""
    return union(two_cliques(n), gnp(n, p, seed))


# edge-list IO ---------------------------------------------------------------
def format_edge_list(g: Graph) -> str:
    u, v = g.edge_arrays()
    buf = io.StringIO()
    buf.write(f"{g.n} {g.edge_count}\n")
    for a, b in zip(u.tolist(), v.tolist()):
        buf.write(f"{a} {b}\n")
    return buf.getvalue()


def write_edge_list(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_edge_list(g))


def parse_edge_list(text: str) -> Graph:
    """Parse the ``n m`` / ``u v`` format, rejecting loops, repeats and bad counts."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise GraphFormatError("empty edge list")
    try:
        header = [int(x) for x in lines[0]]
        body = np.array([[int(x) for x in ln] for ln in lines[1:]], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise GraphFormatError(f"malformed edge list: {exc}") from None
    if len(header) != 2 or header[0] < 0 or header[1] < 0:
        raise GraphFormatError("header must be 'n m'")
    n, m = header
    if any(len(ln) != 2 for ln in lines[1:]):
        raise GraphFormatError("every edge line must hold two vertices")
    if len(body) != m:
        raise GraphFormatError(f"header announces {m} edges, found {len(body)}")
    try:
        return Graph.from_edge_arrays(n, body[:, 0], body[:, 1], strict=True)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None


def read_edge_list(path: str | os.PathLike) -> Graph:
    with open(path, encoding="ascii") as fh:
        return parse_edge_list(fh.read())


# partitions -----------------------------------------------------------------
@dataclass(frozen=True)
class VertexPartition:
    parts: tuple[tuple[int, ...], ...]
    targets: tuple[Fraction, ...]
    gamma: Fraction
    mode: str
    retries: int

    def part_of(self, n: int) -> np.ndarray:
        """Label array: index of the part holding each vertex, -1 if uncovered."""
        lab = np.full(n, -1, dtype=np.int64)
        for i, part in enumerate(self.parts):
            lab[list(part)] = i
        return lab


def _frac_bounds_ok(values: np.ndarray, lo: Fraction, hi: Fraction, scale: np.ndarray) -> bool:
    """Exact elementwise check ``lo*scale <= values <= hi*scale`` in integers."""
    values = np.asarray(values, dtype=np.int64)
    scale = np.asarray(scale, dtype=np.int64)
    ok_lo = (values * lo.denominator >= scale * lo.numerator).all()
    ok_hi = (values * hi.denominator <= scale * hi.numerator).all()
    return bool(ok_lo and ok_hi)


def partition_with_inheritance(g: Graph, targets: Sequence, gamma, params: DeskScaleParams | None = None,
                               *, seed=None, subset: Sequence[int] | None = None,
                               check_parts: Sequence[int] | None = None) -> VertexPartition:
    """Random partition of ``subset`` (default ``V(G)``) whose parts inherit degrees.

    ``targets`` are either probabilities summing to 1 (independent assignment;
    sizes within ``(1±γ)p_i N`` and ``d(v, X_i)`` within ``(p_i ± γ) d(v)``) or
    integer sizes summing to ``|subset|`` (uniform split; ``d(v, V_i)`` within
    ``(1±γ) d(v) n_i / n``).  Every vertex of ``G`` is checked, for the parts
    listed in ``check_parts`` (default all).  Samples are drawn until one
    passes or ``params.max_retries`` attempts are spent.
    """
    params = params or DeskScaleParams()
    gamma = as_fraction(gamma)
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    verts = np.arange(g.n, dtype=np.int64) if subset is None else np.array(sorted(set(subset)), dtype=np.int64)
    N = len(verts)
    is_sizes = (all(isinstance(x, (int, np.integer)) and not isinstance(x, bool) for x in targets)
                and sum(int(x) for x in targets) == N)
    if is_sizes:
        if any(int(x) < 0 for x in targets):
            raise ValueError("sizes must be non-negative")
        fr = tuple(Fraction(int(x)) for x in targets)
        mode = "sizes"
    else:
        fr = tuple(as_fraction(x) for x in targets)
        if sum(fr) != 1 or any(x < 0 for x in fr):
            raise ValueError("targets must be probabilities summing to 1 or sizes summing to the subset size")
        mode = "probabilities"
    k = len(fr)
    if k == 1:
        return VertexPartition((tuple(verts.tolist()),), fr, gamma, mode, 0)
    checked = list(range(k)) if check_parts is None else list(check_parts)
    rng = np.random.default_rng(params.rng_seed if seed is None else seed)
    deg = g.degrees()
    probs = np.array([float(x) for x in fr])
    for attempt in range(params.max_retries):
        if mode == "sizes":
            perm = rng.permutation(verts)
            labels_sub = np.repeat(np.arange(k), [int(x) for x in fr])
            members = [np.sort(perm[labels_sub == i]) for i in range(k)]
        else:
            lab = rng.choice(k, size=N, p=probs / probs.sum())
            members = [verts[lab == i] for i in range(k)]
        ok = True
        for i in checked:
            mask = np.zeros(g.n, dtype=bool)
            mask[members[i]] = True
            into = g.count_into(mask)
            if mode == "sizes":
                scale = deg * int(fr[i])
                ok = _frac_bounds_ok(into * g.n, 1 - gamma, 1 + gamma, scale)
            else:
                size = len(members[i])
                ok = (1 - gamma) * fr[i] * N <= size <= (1 + gamma) * fr[i] * N
                ok = ok and _frac_bounds_ok(into, fr[i] - gamma, fr[i] + gamma, deg)
            if not ok:
                break
        if ok:
            parts = tuple(tuple(m.tolist()) for m in members)
            return VertexPartition(parts, fr, gamma, mode, attempt)
    raise RetryBudgetExhausted(
        f"no partition met the (1±{gamma}) bounds in {params.max_retries} attempts", params.max_retries)
