"""Reservoirs, the robust bipartite template, triangle absorbers and absorbing paths."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Collection, Mapping, Sequence

import numpy as np

from .errors import (InfeasibleError, JoinednessFalsified, MatchingFailure, PreconditionError,
                     RetryBudgetExhausted, StageFailure)
from .extend import three_path_connect
from .graph import Graph
from .matching import hall_violator, hopcroft_karp
from .params import DeskScaleParams
from .verify import Subdivision


# reservoirs -----------------------------------------------------------------
@dataclass(frozen=True)
class ReservoirSystem:
    R1: tuple[int, ...]
    R2: tuple[int, ...]
    R3: tuple[int, ...]
    r: int
    k_res: int
    singles: int
    retries: int

    def all(self) -> set[int]:
        return set(self.R1) | set(self.R2) | set(self.R3)


def reservoir_sizes(n: int, t: int, params: DeskScaleParams) -> tuple[int, int, int, int]:
    """``(r, singles, k_res, |R3|)`` with ``r = ⌊θn⌋``, ``singles = ⌊2εn⌋``,
    ``k_res = 4·C(t,2) + 4·singles`` and ``|R3| = ⌈αn⌉``."""
    r = math.floor(params.theta * n)
    singles = math.floor(2 * params.epsilon * n)
    k_res = 4 * math.comb(t, 2) + 4 * singles
    return r, singles, k_res, math.ceil(params.alpha * n)


def pick_reservoirs(g: Graph, t: int, params: DeskScaleParams | None = None, seed=None,
                    *, check_r1: bool = False) -> ReservoirSystem:
    """Random disjoint ``R1`` (2r), ``R2`` (r + k_res), ``R3`` (αn).

    Each draw is repaired by swapping vertices with the unreserved rest until
    ``d(v, R_i) >= μ|R_i|/2`` for every vertex and checked reservoir (``R2``,
    ``R3``, and ``R1`` when ``check_r1``) and ``d(v, V \\ (R1 ∪ R2 ∪ R3)) >= μn/2``;
    draws whose repair stalls are rejected.  ``retries`` counts rejected draws.
    """
    params = params or DeskScaleParams()
    n = g.n
    mu = params.mu
    if g.min_degree() < mu * n:
        raise PreconditionError(f"minimum degree {g.min_degree()} below μn = {float(mu * n):.1f}")
    r, singles, k_res, r3 = reservoir_sizes(n, t, params)
    sizes = (2 * r, r + k_res, r3)
    if sum(sizes) > n:
        raise InfeasibleError(f"reservoirs need {sum(sizes)} > {n} vertices")
    rng = np.random.default_rng(params.rng_seed if seed is None else seed)
    checked = [1, 2] + ([0] if check_r1 else [])
    for attempt in range(params.max_retries):
        label = np.full(n, 3, dtype=np.int64)
        label[rng.permutation(n)[: sum(sizes)]] = np.repeat([0, 1, 2], sizes)
        if _repair_reservoirs(g, label, sizes, checked, mu, rng):
            R1, R2, R3 = (tuple(np.flatnonzero(label == i).tolist()) for i in range(3))
            return ReservoirSystem(R1, R2, R3, r, k_res, singles, attempt)
    raise RetryBudgetExhausted("no reservoir split met the degree conditions", params.max_retries)


def _repair_reservoirs(g: Graph, label: np.ndarray, sizes, checked, mu, rng, rounds: int = 200) -> bool:
    """Swap vertices between a reservoir and the unreserved rest until every degree condition holds."""
    n = g.n
    sets = g.nbr_sets
    for _ in range(rounds):
        bad = None
        for i in checked:
            if sizes[i] == 0:
                continue
            into = g.count_into(label == i)
            low = np.flatnonzero(2 * into * mu.denominator < mu.numerator * sizes[i])
            if len(low):
                bad = (i, int(low[int(rng.integers(len(low)))]))
                break
        if bad is None:
            rest = g.count_into(label == 3)
            return not (2 * rest * mu.denominator < mu.numerator * n).any()
        i, v = bad
        ins = [w for w in np.flatnonzero(label == 3).tolist() if w in sets[v]]
        outs = [w for w in np.flatnonzero(label == i).tolist() if w not in sets[v]]
        if not ins or not outs:
            return False
        # Greedy swap: bring in the neighbour of v that helps the most deficient
        # vertices, drop the member whose loss hurts the fewest vertices at the threshold.
        into = g.count_into(label == i)
        deficient = 2 * into * mu.denominator < mu.numerator * sizes[i]
        tight = 2 * (into - 1) * mu.denominator < mu.numerator * sizes[i]
        gain = g.count_into(deficient)[ins] + rng.random(len(ins))
        loss = g.count_into(tight)[outs] + rng.random(len(outs))
        w_in = ins[int(np.argmax(gain))]
        w_out = outs[int(np.argmin(loss))]
        label[w_in], label[w_out] = i, 3
    return False


# template -------------------------------------------------------------------
@dataclass(frozen=True)
class Template:
    """Bipartite ``H`` on ``X = [3r]`` and right side ``Y ∪ Z``.

    Right indices ``0..2r-1`` are ``Y``; ``2r..3r+k_res-1`` are ``Z``.
    """

    r: int
    k_res: int
    left: tuple[tuple[int, ...], ...]
    attempts: int = 1

    @property
    def right_size(self) -> int:
        return 3 * self.r + self.k_res

    @property
    def Y(self) -> range:
        return range(2 * self.r)

    @property
    def Z(self) -> range:
        return range(2 * self.r, self.right_size)

    def right_degrees(self) -> list[int]:
        deg = [0] * self.right_size
        for nb in self.left:
            for w in nb:
                deg[w] += 1
        return deg

    def matching(self, right: Collection[int]) -> dict[int, int]:
        """Maximum matching of ``X`` into the given right vertices."""
        rs = set(right)
        adj = {x: [w for w in self.left[x] if w in rs] for x in range(3 * self.r)}
        return hopcroft_karp(list(range(3 * self.r)), adj)

    def perfect_for(self, z_prime: Collection[int]) -> bool:
        return len(self.matching(list(self.Y) + list(z_prime))) == 3 * self.r

    def leftover_choice(self) -> list[int] | None:
        """An ``r``-set ``Z' ⊆ Z`` with a perfect matching ``X ↔ Y ∪ Z'``, or ``None``.

        Matches ``Y`` into ``X`` first, then augments from the unmatched
        ``X`` vertices; augmenting paths never unmatch a right vertex, so all
        of ``Y`` stays covered and exactly ``r`` vertices of ``Z`` are used.
        """
        nx_ = 3 * self.r
        back: dict[int, list[int]] = {w: [] for w in self.Y}
        for x, nb in enumerate(self.left):
            for w in nb:
                if w in back:
                    back[w].append(x)
        on_y = hopcroft_karp(list(self.Y), back)
        if len(on_y) < 2 * self.r:
            return None
        mate_r = dict(on_y)
        mate_l = {x: w for w, x in on_y.items()}

        def augment(x, seen):
            for w in self.left[x]:
                if w in seen:
                    continue
                seen.add(w)
                if w not in mate_r or augment(mate_r[w], seen):
                    mate_r[w] = x
                    mate_l[x] = w
                    return True
            return False

        for x in range(nx_):
            if x not in mate_l and not augment(x, set()):
                return None
        return sorted(w for w in mate_r if w >= 2 * self.r)

    def robustness(self, samples: int, rng=None) -> float:
        """Fraction of ``samples`` random ``r``-subsets ``Z'`` admitting a perfect matching."""
        if self.r == 0 or samples == 0:
            return 1.0
        rng = np.random.default_rng(rng)
        zs = list(self.Z)
        ok = sum(self.perfect_for(rng.choice(zs, size=self.r, replace=False).tolist())
                 for _ in range(samples))
        return ok / samples


def build_template(r: int, k_res: int, seed=None, *, degree: int = 40, cap: int = 100,
                   samples: int = 200, max_retries: int = 50) -> Template:
    """Random bipartite template with near-uniform right degrees, checked for robustness.

    A perfect matching of ``X`` onto ``Y`` and a random ``r``-subset of ``Z``
    is planted first; each ``x ∈ X`` then gets further neighbours up to
    ``min(degree, |Y ∪ Z|)``, chosen among the right vertices of currently
    smallest degree (random tie-break), never exceeding ``cap``.  Robustness,
    a perfect matching of ``X`` into ``Y ∪ Z'`` for ``r``-subsets ``Z' ⊆ Z``,
    is checked on ``samples`` random ``Z'`` (all of them when there are at
    most ``samples``).  A failing
    template is redrawn; ``attempts`` records how many draws were needed.
    """
    if r < 0 or k_res < 0:
        raise ValueError("r and k_res must be non-negative")
    if degree < 1 or cap < 1:
        raise ValueError("degree and cap must be positive")
    rng = np.random.default_rng(seed)
    nx_, ny = 3 * r, 3 * r + k_res
    zs = list(range(2 * r, ny))
    exhaustive = math.comb(len(zs), r) <= samples
    for attempt in range(1, max_retries + 1):
        # Plant a perfect matching of X onto Y and a random r-subset of Z.
        planted = rng.permutation(list(range(2 * r)) + rng.choice(zs, size=r, replace=False).tolist()
                                  ) if r else np.zeros(0, dtype=np.int64)
        deg = np.bincount(planted, minlength=ny).astype(np.int64)
        left = []
        for x in rng.permutation(nx_).tolist() if nx_ else []:
            first = int(planted[x])
            room = np.flatnonzero(deg < cap)
            room = room[room != first]
            want = min(degree - 1, len(room))
            keys = np.lexsort((rng.random(len(room)), deg[room]))
            chosen = room[keys[:want]]
            deg[chosen] += 1
            left.append((x, tuple(sorted([first] + chosen.tolist()))))
        left.sort()
        tpl = Template(r, k_res, tuple(nb for _, nb in left), attempt)
        if r == 0 or samples == 0:
            return tpl
        if exhaustive:
            subsets = itertools.combinations(zs, r)
        else:
            subsets = (rng.choice(zs, size=r, replace=False).tolist() for _ in range(samples))
        if all(tpl.perfect_for(zp) for zp in subsets):
            return tpl
    raise RetryBudgetExhausted("no robust template found", max_retries)


# absorbers ------------------------------------------------------------------
@dataclass
class AbsorberSet:
    """Disjoint triangles: ``edges[v]`` lists edges ``(a, b)`` inside ``N(v)``."""

    edges: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    def vertices(self) -> set[int]:
        out = set()
        for lst in self.edges.values():
            for a, b in lst:
                out.update((a, b))
        return out


def build_absorbers(g: Graph, vertices: Sequence[int], counts: Mapping[int, int],
                    forbidden: Collection[int], rng=None) -> AbsorberSet:
    """``counts[v]`` vertex-disjoint edges inside ``N(v)`` for each ``v``, avoiding ``forbidden``.

    Each ``v`` with its edge ``ab`` forms a triangle, so ``ab`` can be
    detoured through ``v``.  Failure raises :class:`StageFailure`.
    """
    rng = np.random.default_rng(rng)
    taken = set(forbidden) | set(vertices)
    sets = g.nbr_sets
    out = AbsorberSet()
    for v in vertices:
        need = counts.get(v, 0)
        found = []
        for _ in range(need):
            pool = [w for w in g.adj[v] if w not in taken]
            pset = set(pool)
            hit = None
            for idx in rng.permutation(len(pool)).tolist():
                a = pool[idx]
                common = (sets[a] & pset) - {a}
                if common:
                    hit = (a, min(common))
                    break
            if hit is None:
                raise StageFailure("absorbers", f"no free edge left inside N({v})")
            taken.update(hit)
            found.append(hit)
        out.edges[v] = found
    return out


@dataclass
class AbsorbingPath:
    """Path ``vertices`` containing, for each ``v`` in ``slots``, the edge ``slots[v] = (a, b)``
    of a triangle through ``v`` as consecutive vertices."""

    index: int
    vertices: list[int]
    slots: dict[int, tuple[int, int]]


def absorbing_path_floor(template: Template) -> int:
    """Smallest path size fitting every template vertex: ``4·Δ_X - 2``."""
    top = max((len(nb) for nb in template.left), default=0)
    return max(4 * top - 2, 1)


def assemble_absorbing_paths(g: Graph, template: Template, right_vertex: Sequence[int],
                             absorbers: AbsorberSet, available: set[int], size: int, rng=None
                             ) -> list[AbsorbingPath]:
    """One absorbing path of exactly ``size`` vertices per template vertex ``i ∈ X``.

    The triangle edges ``a_v b_v`` for ``v ∈ N_H(i)`` are chained by length-3
    connections through ``available``; the last vertex is then extended by a
    walk through ``available`` until the size is reached.  ``available`` is
    consumed in place.
    """
    rng = np.random.default_rng(rng)
    cursor = {v: 0 for v in absorbers.edges}
    paths = []
    for i, nb in enumerate(template.left):
        verts: list[int] = []
        slots: dict[int, tuple[int, int]] = {}
        for w in nb:
            v = right_vertex[w]
            a, b = absorbers.edges[v][cursor[v]]
            cursor[v] += 1
            if verts:
                try:
                    link = three_path_connect(g, verts[-1], a, available, rng=rng)
                except JoinednessFalsified as exc:
                    raise StageFailure("absorbing-paths", str(exc)) from None
                available.difference_update(link[1:3])
                verts += link[1:3]
            verts += [a, b]
            slots[v] = (a, b)
        if len(verts) > size:
            raise StageFailure("absorbing-paths", f"path {i} needs {len(verts)} > {size} vertices")
        while len(verts) < size:
            end = verts[-1] if verts else None
            if end is None:
                pool = sorted(available)
            else:
                pool = [w for w in g.adj[end] if w in available]
            if not pool:
                raise StageFailure("absorbing-paths", f"padding walk of path {i} is stuck")
            w = pool[int(rng.integers(len(pool)))]
            available.discard(w)
            verts.append(w)
        paths.append(AbsorbingPath(i, verts, slots))
    return paths


def absorber_variants(g: Graph, Q: AbsorbingPath) -> list[tuple[int, list[int], list[int]]]:
    """For each slot ``v``: the path on ``V(Q)`` and the detoured path on ``V(Q) ∪ {v}``.

    Both share the endpoints of ``Q``; each is checked to be a path in ``g``.
    """
    out = []
    sets = g.nbr_sets
    for v, (a, b) in Q.slots.items():
        pos = Q.vertices.index(a)
        if Q.vertices[pos + 1] != b:
            raise AssertionError(f"slot edge {a}-{b} not consecutive in absorbing path {Q.index}")
        with_v = Q.vertices[: pos + 1] + [v] + Q.vertices[pos + 1:]
        for p, want in ((Q.vertices, set(Q.vertices)), (with_v, set(Q.vertices) | {v})):
            if len(set(p)) != len(p) or set(p) != want:
                raise AssertionError("variant has the wrong vertex set")
            if any(y not in sets[x] for x, y in zip(p, p[1:])):
                raise AssertionError("variant uses a non-edge")
            if (p[0], p[-1]) != (Q.vertices[0], Q.vertices[-1]):
                raise AssertionError("variant changes the endpoints")
        out.append((v, list(Q.vertices), with_v))
    return out


# absorption -----------------------------------------------------------------
def absorb(g: Graph, sub: Subdivision, paths: Sequence[AbsorbingPath], template: Template,
           right_vertex: Sequence[int], leftover: Collection[int]) -> tuple[Subdivision, dict[int, int]]:
    """Detour every leftover vertex through an absorbing path lying on a branching path.

    A perfect matching of ``X`` into the template vertices of ``leftover``
    picks, for each absorbing path ``Q_i``, the vertex ``z`` it swallows; the
    edge ``a_z b_z`` of ``Q_i`` becomes ``a_z z b_z``.  Raises
    :class:`MatchingFailure` when no perfect matching exists.
    """
    index = {v: w for w, v in enumerate(right_vertex)}
    left_over = list(leftover)
    if len(left_over) != 3 * template.r:
        raise MatchingFailure(f"{len(left_over)} leftover vertices for {3 * template.r} absorbing paths",
                              sorted(left_over))
    if not left_over:
        return Subdivision(sub.t, list(sub.branch), {e: list(p) for e, p in sub.paths.items()}), {}
    rights = [index[v] for v in left_over]
    rs = set(rights)
    adj = {x: [w for w in template.left[x] if w in rs] for x in range(3 * template.r)}
    match = hopcroft_karp(list(range(3 * template.r)), adj)
    if len(match) < 3 * template.r:
        raise MatchingFailure("template has no perfect matching onto the leftover",
                              sorted(hall_violator(list(range(3 * template.r)), adj, match)))
    detours = {}
    chosen = {}
    for i, w in match.items():
        z = right_vertex[w]
        a, b = paths[i].slots[z]
        detours[frozenset((a, b))] = z
        chosen[i] = z
    new_paths = {}
    for e, p in sub.paths.items():
        out = [p[0]]
        for x, y in zip(p, p[1:]):
            z = detours.pop(frozenset((x, y)), None)
            if z is not None:
                out.append(z)
            out.append(y)
        new_paths[e] = out
    if detours:
        raise StageFailure("absorb", f"{len(detours)} absorbing paths are not on any branching path")
    return Subdivision(sub.t, list(sub.branch), new_paths), chosen
