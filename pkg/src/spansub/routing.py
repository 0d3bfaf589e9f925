"""Sorting-network routers, exact integer length plans and matching chains."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import InfeasibleError, MatchingFailure, SearchExhausted
from .extend import ExtendableState, connect
from .graph import Graph
from .params import DeskScaleParams
from .spectra import bipartite_min_degree_matching


# comparator networks --------------------------------------------------------
@dataclass(frozen=True)
class ComparatorNetwork:
    """Layers of comparators ``(i, j)``, ``i < j``; the smaller value leaves on wire ``i``."""

    width: int
    layers: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def size(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def apply(self, values: Sequence) -> list:
        vals = list(values)
        for layer in self.layers:
            for i, j in layer:
                if vals[i] > vals[j]:
                    vals[i], vals[j] = vals[j], vals[i]
        return vals


def build_comparator_network(w: int, *, verify: bool = False) -> ComparatorNetwork:
    """Bitonic sorting network on ``w`` wires.

    Built on the next power of two with every comparator ascending (the
    first layer of each merge compares mirror positions), then comparators
    touching padding wires are dropped: padding holds ``+∞`` at the top, so
    those comparators never swap.  ``verify`` runs the 0/1 test for ``w <= 12``.
    """
    if w < 1:
        raise ValueError("width must be positive")
    W = 1 << max(0, (w - 1).bit_length())
    layers = []
    size = 2
    while size <= W:
        flip = []
        for start in range(0, W, size):
            for k in range(size // 2):
                flip.append((start + k, start + size - 1 - k))
        layers.append(flip)
        half = size // 4
        while half >= 1:
            layer = []
            for start in range(0, W, 2 * half):
                for k in range(half):
                    layer.append((start + k, start + k + half))
            layers.append(layer)
            half //= 2
        size *= 2
    pruned = tuple(tuple(c for c in layer if c[1] < w) for layer in layers)
    net = ComparatorNetwork(w, tuple(layer for layer in pruned if layer))
    if verify and w <= 12 and not sorts_all_binary(net):
        raise AssertionError(f"network on {w} wires fails the 0/1 test")
    return net


def sorts_all_binary(net: ComparatorNetwork) -> bool:
    """0/1 principle: a comparator network sorts everything iff it sorts all 0/1 inputs."""
    for bits in itertools.product((0, 1), repeat=net.width):
        out = net.apply(bits)
        if any(out[i] > out[i + 1] for i in range(net.width - 1)):
            return False
    return True


# routers --------------------------------------------------------------------
@dataclass
class Gadget:
    """A comparator as ``K_{2,2}``: ports ``(p, q)`` joined to outputs ``(o_i, o_j)``.

    An idle wire is a one-port gadget: ``ports=(p,)``, ``outs=(o,)``.
    """

    wires: tuple[int, ...]
    ports: tuple[int, ...]
    outs: tuple[int, ...]


@dataclass
class SortingRouter:
    terminals_in: list[int]
    terminals_out: list[int]
    layers: list[list[Gadget]]
    finals: list[list[int]] | None
    path_length: int

    @property
    def width(self) -> int:
        return len(self.terminals_in)

    @property
    def network(self) -> ComparatorNetwork:
        return ComparatorNetwork(self.width, tuple(
            tuple(gd.wires for gd in layer if len(gd.wires) == 2) for layer in self.layers))

    def vertices(self) -> set[int]:
        out = set(self.terminals_in) | set(self.terminals_out)
        for layer in self.layers:
            for gd in layer:
                out.update(gd.ports)
                out.update(gd.outs)
        for p in self.finals or ():
            out.update(p)
        return out

    @property
    def gadget_vertices(self) -> set[int]:
        return self.vertices() - set(self.terminals_in) - set(self.terminals_out)

    def to_dict(self) -> dict:
        return {
            "terminals_in": self.terminals_in,
            "terminals_out": self.terminals_out,
            "path_length": self.path_length,
            "layers": [[{"wires": list(gd.wires), "ports": list(gd.ports), "outs": list(gd.outs)}
                        for gd in layer] for layer in self.layers],
            "finals": self.finals,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SortingRouter":
        layers = [[Gadget(tuple(gd["wires"]), tuple(gd["ports"]), tuple(gd["outs"])) for gd in layer]
                  for layer in data["layers"]]
        return cls(list(data["terminals_in"]), list(data["terminals_out"]), layers,
                   data.get("finals"), int(data["path_length"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SortingRouter":
        return cls.from_dict(json.loads(text))


def embed_router(state: ExtendableState, terminals_in: Sequence[int],
                 terminals_out: Sequence[int] | None = None, network: ComparatorNetwork | None = None,
                 *, rng=None, min_layers: int = 1, final_length: int = 3, attempts: int = 200
                 ) -> SortingRouter:
    """Realize ``network`` in the free part of the host, starting at ``terminals_in``.

    Every layer moves each wire two edges: a wire edge into a fresh port and a
    gadget edge out.  A comparator on wires ``i, j`` takes ports ``p ∈ N(cur_i)``,
    ``q ∈ N(cur_j)`` and two common neighbours of ``p`` and ``q`` as outputs,
    so both the straight and the crossed pairing are vertex-disjoint paths.
    Idle wires take a port and one output.  With ``terminals_out`` the final
    outputs are joined to it by ``connect`` paths of ``final_length`` edges;
    otherwise the last outputs become the out-terminals.  All router edges
    are added to ``state``; search failures raise :class:`SearchExhausted`.
    """
    w = len(terminals_in)
    network = network or build_comparator_network(w)
    if network.width != w:
        raise ValueError("network width differs from the terminal count")
    if terminals_out is not None and len(terminals_out) != w:
        raise ValueError("terminal lists differ in length")
    for v in terminals_in:
        state.add_vertex(v)
    if terminals_out is not None:
        for v in terminals_out:
            state.add_vertex(v)
    rng = np.random.default_rng(rng)
    host = state.host
    adj, sets = host.adj, host.nbr_sets
    blocked = state.blocked
    layer_specs = [list(layer) for layer in network.layers]
    while len(layer_specs) < min_layers:
        layer_specs.append([])
    cur = list(terminals_in)
    layers: list[list[Gadget]] = []

    def free_nbrs(v, exclude=()):
        out = [y for y in adj[v] if not blocked[y] and y not in exclude]
        return [out[i] for i in rng.permutation(len(out))]

    for spec in layer_specs:
        gadgets = []
        busy = set()
        for i, j in spec:
            busy.update((i, j))
            found = None
            tries = 0
            for p in free_nbrs(cur[i]):
                for q in free_nbrs(cur[j], (p,)):
                    tries += 1
                    common = [o for o in sets[p] & sets[q] if not blocked[o] and o not in (p, q)]
                    if len(common) >= 2:
                        common.sort()
                        pick = rng.choice(len(common), size=2, replace=False)
                        found = (p, q, common[int(pick[0])], common[int(pick[1])])
                        break
                    if tries > attempts:
                        break
                if found or tries > attempts:
                    break
            if found is None:
                raise SearchExhausted(f"no comparator gadget for wires {i},{j}")
            p, q, oi, oj = found
            for a, b in ((cur[i], p), (cur[j], q), (p, oi), (p, oj), (q, oi), (q, oj)):
                state.add_edge(a, b)
            gadgets.append(Gadget((i, j), (p, q), (oi, oj)))
            cur[i], cur[j] = oi, oj
        for i in range(w):
            if i in busy:
                continue
            found = None
            for p in free_nbrs(cur[i]):
                outs = [o for o in adj[p] if not blocked[o] and o != p]
                if outs:
                    found = (p, outs[int(rng.integers(len(outs)))])
                    break
            if found is None:
                raise SearchExhausted(f"no bypass for idle wire {i}")
            p, o = found
            state.add_edge(cur[i], p)
            state.add_edge(p, o)
            gadgets.append(Gadget((i,), (p,), (o,)))
            cur[i] = o
        layers.append(gadgets)
    length = 2 * len(layers)
    finals = None
    if terminals_out is not None:
        finals = [connect(state, cur[i], terminals_out[i], final_length, rng=rng) for i in range(w)]
        length += final_length
        out = list(terminals_out)
    else:
        out = cur
    return SortingRouter(list(terminals_in), out, layers, finals, length)


def route(router: SortingRouter, sigma: Mapping[int, int]) -> dict[int, list[int]]:
    """Vertex-disjoint paths of length ``router.path_length``, from each ``v`` to ``sigma[v]``.

    Switch settings come from running the comparator network on destination
    indices: a comparator crosses exactly when it swaps.  Together the paths
    cover every router vertex once.
    """
    w = router.width
    out_index = {v: i for i, v in enumerate(router.terminals_out)}
    if set(sigma) != set(router.terminals_in) or sorted(out_index.get(v, -1) for v in sigma.values()) != list(range(w)):
        raise ValueError("sigma must be a bijection from terminals_in to terminals_out")
    values = [out_index[sigma[v]] for v in router.terminals_in]
    paths = [[v] for v in router.terminals_in]
    at = list(range(w))  # at[position] = index of the wire currently there
    for layer in router.layers:
        new_at = list(at)
        for gd in layer:
            if len(gd.wires) == 1:
                (i,) = gd.wires
                paths[at[i]] += [gd.ports[0], gd.outs[0]]
                continue
            i, j = gd.wires
            wi, wj = at[i], at[j]
            if values[i] > values[j]:
                paths[wi] += [gd.ports[0], gd.outs[1]]
                paths[wj] += [gd.ports[1], gd.outs[0]]
                values[i], values[j] = values[j], values[i]
                new_at[i], new_at[j] = wj, wi
            else:
                paths[wi] += [gd.ports[0], gd.outs[0]]
                paths[wj] += [gd.ports[1], gd.outs[1]]
        at = new_at
    if router.finals is not None:
        for pos in range(w):
            paths[at[pos]] += router.finals[pos][1:]
    return {router.terminals_in[k]: paths[k] for k in range(w)}


def check_path_factor(g: Graph, router: SortingRouter, sigma: Mapping[int, int],
                      paths: Mapping[int, list[int]]) -> None:
    """Assert ``paths`` is a ``P_ℓ``-factor of the router realizing ``sigma``."""
    seen: set[int] = set()
    sets = g.nbr_sets
    for v, p in paths.items():
        if p[0] != v or p[-1] != sigma[v] or len(p) - 1 != router.path_length:
            raise AssertionError(f"path from {v} has wrong ends or length")
        if any(b not in sets[a] for a, b in zip(p, p[1:])):
            raise AssertionError(f"path from {v} uses a non-edge")
        if seen & set(p) or len(set(p)) != len(p):
            raise AssertionError("paths are not vertex-disjoint")
        seen.update(p)
    if seen != router.vertices():
        raise AssertionError("paths do not cover the router")


# length plans ---------------------------------------------------------------
@dataclass(frozen=True)
class LengthPlan:
    mode: str
    n: int
    t: int
    min_length: int
    pair_lengths: dict
    loop_counts: dict = field(default_factory=dict)
    loop_blocks: dict = field(default_factory=dict)
    M: int = 0
    k: int = 0
    m_prime: int = 0
    loop_length: int = 0
    window: tuple[int, int] | None = None

    def totals(self) -> dict:
        """Balanced mode: ``q_ij + q_ji + |J|·M`` per pair."""
        return {e: qa + qb + self.loop_counts[e] * self.M for e, (qa, qb) in self.pair_lengths.items()}


def log_length(beta: Fraction, n: int, power: int = 1) -> int:
    """``ceil(beta · (ln n)^power)``, the desk-scale stand-in for ``100 log^power n``."""
    return math.ceil(float(beta) * math.log(n) ** power) if n > 1 else 1


def split_window(count: int, lo: int, hi: int, min_len: int) -> list[int]:
    """``count`` integers ``>= min_len`` whose sum lies in ``[lo, hi]``; near-equal, remainder spread one each."""
    if count == 0:
        if lo <= 0 <= hi:
            return []
        raise InfeasibleError(f"empty plan cannot sum into [{lo}, {hi}]")
    total = max(lo, count * min_len)
    if total > hi:
        raise InfeasibleError(f"need sum >= {max(lo, count * min_len)} but window ends at {hi}")
    base, extra = divmod(total, count)
    return [base + (1 if i < extra else 0) for i in range(count)]


def unbalanced_pairs(t: int) -> list[tuple[int, int]]:
    """Pairs joined by planned-length paths: all ``i < j`` except ``(0, t-1)``."""
    return [e for e in itertools.combinations(range(t), 2) if e != (0, t - 1)]


def plan_lengths_unbalanced(n: int, t: int, params: DeskScaleParams | None = None) -> LengthPlan:
    """Lengths ``ℓ_e >= ceil(β log n)`` with ``(1-p)n - 200εn <= Σℓ_e <= (1-p)n - 100εn``.

    The sum sits at the low end of the window, which leaves the most room for
    the final Hamilton path.
    """
    params = params or DeskScaleParams()
    if t < 2:
        raise ValueError("t must be at least 2")
    min_len = log_length(params.beta_log, n)
    lo = math.ceil((1 - params.p) * n - 200 * params.epsilon * n)
    hi = math.floor((1 - params.p) * n - 100 * params.epsilon * n)
    pairs = unbalanced_pairs(t)
    if not pairs:
        return LengthPlan("unbalanced", n, t, min_len, {}, window=(lo, hi))
    if lo > hi:
        raise InfeasibleError(f"length window [{lo}, {hi}] is empty")
    lengths = split_window(len(pairs), lo, hi, min_len)
    plan = LengthPlan("unbalanced", n, t, min_len, dict(zip(pairs, lengths)), window=(lo, hi))
    check_unbalanced_plan(plan)
    return plan


def check_unbalanced_plan(plan: LengthPlan) -> None:
    ls = list(plan.pair_lengths.values())
    if any(x < plan.min_length for x in ls):
        raise AssertionError("a planned length is below the minimum")
    lo, hi = plan.window
    if ls and not lo <= sum(ls) <= hi:
        raise AssertionError("planned lengths leave the window")


def near_equal_blocks(total: int, keys: Sequence) -> dict:
    """Split ``range(total)`` into consecutive blocks, one per key, sizes differing by at most one."""
    base, extra = divmod(total, len(keys))
    out, start = {}, 0
    for idx, key in enumerate(keys):
        size = base + (1 if idx < extra else 0)
        out[key] = tuple(range(start, start + size))
        start += size
    return out


def plan_lengths_balanced(n: int, t: int, k: int, ell: int, m_prime: int, sizes: Mapping[str, int],
                          params: DeskScaleParams | None = None, *, loop_length: int | None = None
                          ) -> LengthPlan:
    """Choose ``q_{i,j}, q_{j,i}`` and the loop blocks ``J_{i,j}`` of the balanced construction.

    With ``M = loop_length + ell + k + 1`` (``loop_length`` defaults to
    ``ceil(beta_log·ln n)``) the per-pair totals ``q_ij + q_ji + |J|·M`` are
    made equal up to one, and their sum is fixed by the covering identity
    ``n - |V'| - |Z| - m'(loop_length - 1) - Σ(q - 1) = fill``.
    ``sizes`` holds ``V_prime``, ``Z`` and either ``fill`` or ``m`` (then
    ``fill = k(m - ceil(εm))``).  Bounds are ``ceil(beta_log3 ln³n) <= q <= 0.99n``.
    """
    params = params or DeskScaleParams()
    if t < 2 or k < 1 or ell < 0 or m_prime < 0:
        raise ValueError("need t >= 2, k >= 1, ell >= 0, m' >= 0")
    pairs = list(itertools.combinations(range(t), 2))
    loop_len = log_length(params.beta_log, n) if loop_length is None else int(loop_length)
    M = loop_len + ell + k + 1
    if "fill" in sizes:
        fill = int(sizes["fill"])
    else:
        m = int(sizes["m"])
        fill = k * (m - math.ceil(params.epsilon * m))
    v_prime, z = int(sizes["V_prime"]), int(sizes["Z"])
    blocks = near_equal_blocks(m_prime, pairs)
    counts = {e: len(b) for e, b in blocks.items()}
    q_total = n - v_prime - z - m_prime * (loop_len - 1) - fill + 2 * len(pairs)
    grand = q_total + m_prime * M
    base, extra = divmod(grand, len(pairs))
    q_min = log_length(params.beta_log3, n, 3)
    q_max = math.floor(Fraction(99, 100) * n)
    pair_lengths = {}
    for idx, e in enumerate(pairs):
        s = base + (1 if idx < extra else 0) - counts[e] * M
        qa = s // 2
        qb = s - qa
        for name, q in ((f"q{e}", qa), (f"q{e[::-1]}", qb)):
            if q < q_min:
                raise InfeasibleError(f"{name} = {q} < ceil(beta_log3 ln^3 n) = {q_min}")
            if q > q_max:
                raise InfeasibleError(f"{name} = {q} > 0.99n = {q_max}")
        pair_lengths[e] = (qa, qb)
    plan = LengthPlan("balanced", n, t, q_min, pair_lengths, counts, blocks, M, k, m_prime, loop_len)
    check_balanced_plan(plan, sizes={"V_prime": v_prime, "Z": z, "fill": fill})
    return plan


def check_balanced_plan(plan: LengthPlan, sizes: Mapping[str, int]) -> None:
    totals = list(plan.totals().values())
    if max(totals) - min(totals) > 1:
        raise AssertionError("pair totals differ by more than one")
    used = sum(qa - 1 + qb - 1 for qa, qb in plan.pair_lengths.values())
    lhs = plan.n - sizes["V_prime"] - sizes["Z"] - plan.m_prime * (plan.loop_length - 1) - used
    if lhs != sizes["fill"]:
        raise AssertionError(f"covering identity fails: {lhs} != {sizes['fill']}")
    if sum(plan.loop_counts.values()) != plan.m_prime:
        raise AssertionError("loop blocks do not partition [m']")
    cs = list(plan.loop_counts.values())
    if cs and max(cs) - min(cs) > 1:
        raise AssertionError("loop blocks differ by more than one")


# matching chain -------------------------------------------------------------
@dataclass(frozen=True)
class ChainResult:
    matchings: tuple[dict, ...]
    ends: dict
    paths: dict


def matching_chain(g: Graph, V_in: Sequence[int], parts: Sequence[Sequence[int]], V_out: Sequence[int],
                   min_degree: int | None = None) -> ChainResult:
    """Perfect matchings ``V_in → parts[0] → ... → parts[-1] → V_out``.

    Their union is ``|V_in|`` disjoint paths of length ``len(parts) + 1``;
    ``ends`` maps each in-vertex to the out-vertex its path reaches.
    Raises :class:`MatchingFailure` with the Hall witness of the failing step.
    """
    layers = [list(V_in)] + [list(p) for p in parts] + [list(V_out)]
    size = len(layers[0])
    if any(len(layer) != size for layer in layers):
        raise ValueError("all layers must have the same size")
    matchings = []
    for left, right in zip(layers, layers[1:]):
        res = bipartite_min_degree_matching(g, left, right, min_degree)
        matchings.append(dict(res.matching))
    paths, ends = {}, {}
    for v in layers[0]:
        p = [v]
        for mt in matchings:
            p.append(mt[p[-1]])
        paths[v] = p
        ends[v] = p[-1]
    return ChainResult(tuple(matchings), ends, paths)


# sigma ----------------------------------------------------------------------
def assemble_sigma(loop_blocks: Mapping, loops: Sequence[tuple[int, int]], v_prime: Mapping,
                   chain_end: Mapping[int, int], u_out: Mapping) -> dict[int, int]:
    """The bijection ``V_{k+2} → V_{k+3}`` threading each pair's loop segments.

    For a pair ``e`` with loop indices ``l_1..l_z`` (loop ``l`` runs from
    ``a_l ∈ V_{k+1}`` to ``b_l ∈ V_{k+3}``): ``σ(v'_e) = b_{l_1}``,
    ``σ(c(b_{l_s})) = b_{l_{s+1}}`` and ``σ(c(b_{l_z})) = u_out[e]``, where
    ``c(b_l) = chain_end[a_l]``.  With no loops ``σ(v'_e) = u_out[e]``.
    """
    sigma: dict[int, int] = {}

    def put(x, y):
        if x in sigma:
            raise ValueError(f"sigma assigns {x} twice")
        sigma[x] = y

    for e, block in loop_blocks.items():
        src = v_prime[e]
        for l in block:
            a_l, b_l = loops[l]
            put(src, b_l)
            src = chain_end[a_l]
        put(src, u_out[e])
    if len(set(sigma.values())) != len(sigma):
        raise ValueError("sigma is not injective")
    return sigma
