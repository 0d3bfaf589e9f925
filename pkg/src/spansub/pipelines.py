"""End-to-end constructions of spanning K_t-subdivisions.

Each pipeline returns a :class:`TrialResult`.  Any exception raised by a
stage ends the trial as a failure tagged with that stage; a success is only
reported after :func:`spansub.verify.verify` accepts the output.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .absorption import (Template, absorb, absorber_variants, absorbing_path_floor,
                         assemble_absorbing_paths, build_absorbers, build_template, pick_reservoirs)
from .errors import PreconditionError, SpansubError, StageFailure
from .extend import ExtendableState, connect, dfs_long_path, greedy_stars, hamilton_path, three_path_connect
from .graph import Graph, gnp, partition_with_inheritance, union
from .matching import hopcroft_karp
from .params import DeskScaleParams
from .routing import (assemble_sigma, embed_router, log_length, matching_chain, plan_lengths_balanced,
                      plan_lengths_unbalanced, route)
from .spectra import falsify_joinedness, is_joined_exhaustive, spectral_joinedness_m, spectral_profile
from .verify import Subdivision, verify

log = logging.getLogger(__name__)

CSV_COLUMNS = ("pipeline", "n", "t", "seed", "outcome", "stage", "balance", "coverage", "millis")
PIPELINES = ("unbalanced", "balanced", "joined", "perturbed")


@dataclass
class TrialReport:
    pipeline: str
    seed: int
    t: int
    n: int
    outcome: str = "failure"
    stage: str = ""
    reason: str = ""
    verdict: str = ""
    balance: int | None = None
    coverage: int = 0
    millis: int = 0
    hypothesis: str = "met"

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def row(self, timing: bool = False) -> list[str]:
        """CSV cells in :data:`CSV_COLUMNS` order; ``millis`` is blank unless ``timing``."""
        return [self.pipeline, str(self.n), str(self.t), str(self.seed), self.outcome, self.stage,
                "" if self.balance is None else str(self.balance), str(self.coverage),
                str(self.millis) if timing else ""]


@dataclass
class TrialResult:
    report: TrialReport
    subdivision: Subdivision | None
    details: dict = field(default_factory=dict)


class _Trial:
    def __init__(self):
        self.stage = "setup"
        self.hypothesis = "met"


def _rng(params: DeskScaleParams, seed: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(params.rng_seed), int(seed), salt]))


def _run(name: str, g: Graph, t: int, seed: int, params: DeskScaleParams, body, mode: str) -> TrialResult:
    trial = _Trial()
    details: dict = {}
    report = TrialReport(name, seed, t, g.n)
    start = time.perf_counter()
    sub = None
    try:
        sub = body(trial, details, _rng(params, seed))
    except SpansubError as exc:
        report.stage = exc.stage if isinstance(exc, StageFailure) else trial.stage
        report.reason = exc.reason if isinstance(exc, StageFailure) else f"{type(exc).__name__}: {exc}"
    else:
        verdict = verify(g, sub, mode)
        report.verdict = str(verdict)
        report.coverage = len(sub.vertices())
        if verdict.ok:
            report.outcome = "success"
            report.balance = sub.balance()
        else:
            report.stage = "verify"
            report.reason = str(verdict)
            sub = None
    report.hypothesis = trial.hypothesis
    report.millis = int(round(1000 * (time.perf_counter() - start)))
    if not report.success:
        log.info("%s t=%d seed=%d failed at %s: %s", name, t, seed, report.stage, report.reason)
    return TrialResult(report, sub, details)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise PreconditionError(message)


# unbalanced -----------------------------------------------------------------
def _state_m(profile) -> int:
    """The ``m`` handed to extendable states: ``⌈λn/d⌉`` (minimum degree for irregular graphs)."""
    if profile.regular:
        return spectral_joinedness_m(profile)
    return math.ceil(profile.lam * profile.n / max(profile.d_min, 1))


def _leaf(stars, i: int, j: int) -> int:
    """Leaf of star ``i`` reserved for the branching path towards ``j``."""
    leaves = stars.stars[i][1]
    return leaves[j if j < i else j - 1]


def pipeline_unbalanced(g: Graph, t: int, params: DeskScaleParams | None = None, seed: int = 0
                        ) -> TrialResult:
    """Extendability construction: planned lengths for all pairs but one, a Hamilton path for the last.

    Stages: random partition ``X1, X2, X3`` with shares ``1-2p, p, p``;
    greedy stars in ``X1`` (centres are the branch vertices, leaves face the
    other branch vertices); for every pair except ``(0, t-1)`` a path of the
    planned length between the facing leaves, grown inside
    ``(X1 ∪ X2) \\ centres``; finally a Hamilton path between the two leaves
    of the pair ``(0, t-1)`` through ``X3`` and everything still unused.
    """
    params = params or DeskScaleParams()
    return _run("unbalanced", g, t, seed, params,
                lambda trial, details, rng: _unbalanced(g, t, params, rng, trial, details), "spanning")


def _unbalanced(g: Graph, t: int, params: DeskScaleParams, rng, trial: _Trial, details: dict) -> Subdivision:
    n = g.n
    trial.stage = "preconditions"
    _require(t >= 2, "t must be at least 2")
    _require(n > 0 and t <= params.c * g.min_degree(), f"t = {t} exceeds c·d")
    profile = spectral_profile(g)
    details["profile"] = profile
    if t > params.c * math.sqrt(n / math.log(n)) or profile.spectral_ratio < params.C:
        trial.hypothesis = "unmet"

    trial.stage = "plan"
    plan = plan_lengths_unbalanced(n, t, params)
    details["plan"] = plan

    trial.stage = "partition"
    part = partition_with_inheritance(g, [1 - 2 * params.p, params.p, params.p], params.gamma, params, seed=rng)
    X1, X2, X3 = (set(x) for x in part.parts)

    trial.stage = "stars"
    stars = greedy_stars(g, t, allowed=X1)
    centers = stars.centers
    leaves = stars.vertices() - set(centers)

    trial.stage = "connect"
    Z = (X1 | X2) - set(centers)
    state = ExtendableState(g, params.extend_D, _state_m(profile), allowed=Z, strict=params.strict_preconditions)
    for v in sorted(leaves):
        state.add_vertex(v)
    paths = {}
    for (i, j), length in plan.pair_lengths.items():
        inner = connect(state, _leaf(stars, i, j), _leaf(stars, j, i), length - 2, rng=rng,
                        restarts=params.connect_restarts, audit=params.audit)
        paths[(i, j)] = [centers[i]] + inner + [centers[j]]

    trial.stage = "hamilton"
    a, b = _leaf(stars, 0, t - 1), _leaf(stars, t - 1, 0)
    rest = X3 | {v for v in Z if not state.in_S[v]} | {a, b}
    ham = hamilton_path(g, rest, a, b, rng=rng, restarts=params.hamilton_restarts,
                        rotation_factor=params.hamilton_rotation_factor)
    paths[(0, t - 1)] = [centers[0]] + ham + [centers[t - 1]]
    return Subdivision(t, centers, paths)


# balanced -------------------------------------------------------------------
def pipeline_balanced(g: Graph, t: int, params: DeskScaleParams | None = None, seed: int = 0) -> TrialResult:
    """Sorting-network construction giving branching paths whose lengths differ by at most one.

    With ``m = router_width`` and ``k = chain_length``: reserved sets
    ``V_{k+1}, V_{k+2}, V_{k+3}`` of size ``m`` and ``V_1..V_k`` of size
    ``⌈εm⌉`` (taken as ``⌈εm⌉`` ready-made chains from ``V_{k+1}`` to
    ``V_{k+2}``); a router from ``V_{k+2}`` to ``V_{k+3}``; stars; ``m' = m -
    C(t,2)`` loop paths from ``V_{k+1}`` to ``V_{k+3}``; the length plan; an
    expansion reserve ``V_0``; the paths ``Q_{i,j}`` of planned length, the
    last one as a Hamilton path through everything left after the chain
    layers ``V'_1..V'_k`` are completed; then the permutation threading each
    pair's loops, routed through the router.
    """
    params = params or DeskScaleParams()
    return _run("balanced", g, t, seed, params,
                lambda trial, details, rng: _balanced(g, t, params, rng, trial, details),
                "nearly_balanced_spanning")


def _chain_seeds(g: Graph, V_in, V_mid, k: int, count: int, taken: set, rng, attempts: int = 500
                 ) -> list[list[int]]:
    """``count`` disjoint paths ``V_in → k fresh vertices → V_mid``."""
    sets = g.nbr_sets
    mids = set(V_mid)
    starts = list(V_in)
    seeds: list[list[int]] = []
    used = set(taken)
    for _ in range(attempts):
        if len(seeds) == count:
            return seeds
        x0 = starts[int(rng.integers(len(starts)))]
        if any(p[0] == x0 for p in seeds):
            continue
        walk = [x0]
        for step in range(1, k + 1):
            cands = [w for w in g.adj[walk[-1]] if w not in used and w not in walk]
            if step == k:
                cands = [w for w in cands if sets[w] & mids]
            if not cands:
                break
            walk.append(cands[int(rng.integers(len(cands)))])
        else:
            ends = sorted(sets[walk[-1]] & mids)
            y = ends[int(rng.integers(len(ends)))]
            mids.discard(y)
            used.update(walk)
            seeds.append(walk + [y])
    if len(seeds) < count:
        raise StageFailure("reserve", f"found {len(seeds)} of {count} seed chains")
    return seeds


def _grow_layers(g: Graph, left: list[int], right: list[int], k: int, pool: set, rng) -> list[list[int]]:
    """``k`` new layers from ``pool``: each perfectly matched to the previous, the last also to ``right``.

    Inner layers are maximum matchings into ``pool``; the last layer is a
    set of vertex-disjoint ``left → x → right`` paths from a unit-capacity
    maximum flow.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_flow

    layers = []
    avail = set(pool)
    adj = g.adj
    for _ in range(k - 1):
        opts = {}
        for x in left:
            nb = [w for w in adj[x] if w in avail]
            opts[x] = [nb[int(i)] for i in rng.permutation(len(nb))]
        mt = hopcroft_karp(left, opts)
        if len(mt) < len(left):
            raise StageFailure("chain", f"layer matching covers {len(mt)} of {len(left)}")
        left = [mt[x] for x in left]
        avail.difference_update(left)
        layers.append(left)
    sets = g.nbr_sets
    rset = set(right)
    lset = set(left)
    mids = [w for w in sorted(avail) if sets[w] & lset and sets[w] & rset]
    mids = [mids[int(i)] for i in rng.permutation(len(mids))]
    L, R, M = len(left), len(right), len(mids)
    # nodes: 0 source, 1 sink, left, mid-in, mid-out, right
    lo, mi, mo, ro = 2, 2 + L, 2 + L + M, 2 + L + 2 * M
    li = {x: lo + a for a, x in enumerate(left)}
    ri = {y: ro + a for a, y in enumerate(right)}
    rows, cols = [], []
    for x in left:
        rows.append(0)
        cols.append(li[x])
    for a, w in enumerate(mids):
        rows.append(mi + a)
        cols.append(mo + a)
        for x in sets[w] & lset:
            rows.append(li[x])
            cols.append(mi + a)
        for y in sets[w] & rset:
            rows.append(mo + a)
            cols.append(ri[y])
    for y in right:
        rows.append(ri[y])
        cols.append(1)
    size = ro + R
    cap = csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(size, size))
    flow = maximum_flow(cap, 0, 1, method="dinic")
    if flow.flow_value < L:
        raise StageFailure("chain", f"last layer carries {flow.flow_value} of {L} chains")
    fl = flow.flow.tocsr()
    last = []
    for x in left:
        row = fl.getrow(li[x])
        node = int(row.indices[row.data > 0][0])
        last.append(mids[node - mi])
    layers.append(last)
    return layers


def _balanced(g: Graph, t: int, params: DeskScaleParams, rng, trial: _Trial, details: dict) -> Subdivision:
    n = g.n
    trial.stage = "preconditions"
    _require(t >= 2, "t must be at least 2")
    _require(n > 0 and t <= params.c * g.min_degree(), f"t = {t} exceeds c·d")
    pairs = list(itertools.combinations(range(t), 2))
    m, k = params.router_width, params.chain_length
    _require(m >= len(pairs), f"router width {m} below C(t,2) = {len(pairs)}")
    profile = spectral_profile(g)
    details["profile"] = profile
    log3 = math.log(n) ** 3
    if t > params.c * math.sqrt(n / log3) or profile.spectral_ratio < params.C * log3:
        trial.hypothesis = "unmet"
    m_state = _state_m(profile)
    m_prime = m - len(pairs)
    n_seed = math.ceil(params.epsilon * m)

    trial.stage = "reserve"
    _require(3 * m + k * n_seed <= n, "graph too small for the reserved sets")
    perm = [int(v) for v in rng.permutation(n)]
    V_in, V_mid, V_out = perm[:m], perm[m:2 * m], perm[2 * m:3 * m]
    seeds = _chain_seeds(g, V_in, V_mid, k, n_seed, set(perm[:3 * m]), rng)
    V_small = [[p[i] for p in seeds] for i in range(1, k + 1)]
    small = {v for layer in V_small for v in layer}

    trial.stage = "router"
    blocked = small | set(V_in)
    rstate = ExtendableState(g, params.extend_D, m_state, allowed=[v for v in range(n) if v not in blocked],
                             strict=params.strict_preconditions)
    router = embed_router(rstate, V_mid, V_out, rng=rng)
    ell = router.path_length
    W = router.gadget_vertices
    details["router"] = router

    trial.stage = "stars"
    stars = greedy_stars(g, t, avoid=blocked | router.vertices())
    centers = stars.centers
    leaves = stars.vertices() - set(centers)

    trial.stage = "loops"
    v_prime_set = small | W | set(centers)
    z_set = leaves | set(V_in) | set(V_mid) | set(V_out)
    state = ExtendableState(g, params.extend_D, m_state, allowed=[v for v in range(n) if v not in v_prime_set],
                            strict=params.strict_preconditions)
    for v in sorted(z_set):
        state.add_vertex(v)
    A, B = V_in[:m_prime], V_out[:m_prime]
    u_in = dict(zip(pairs, V_in[m_prime:]))
    u_out = dict(zip(pairs, V_out[m_prime:]))
    loop_len = log_length(params.beta_log, n)
    loops = [connect(state, a, b, loop_len, rng=rng, restarts=params.connect_restarts, audit=params.audit)
             for a, b in zip(A, B)]

    trial.stage = "plan"
    plan = plan_lengths_balanced(n, t, k, ell, m_prime, {"V_prime": len(v_prime_set), "Z": len(z_set), "m": m},
                                 params, loop_length=loop_len)
    details["plan"] = plan

    trial.stage = "reserve-expansion"
    last = pairs[-1]
    q_last = plan.pair_lengths[last][1]
    free = [v for v in range(n) if state.is_free(v)]
    size0 = min(math.ceil(params.alpha * n), (3 * (q_last - 1)) // 4, len(free))
    V0 = partition_with_inheritance(g, [size0, len(free) - size0], params.reserve_gamma, params, seed=rng,
                                    subset=free, check_parts=[0]).parts[0]
    state.forbid(V0)

    trial.stage = "paths"
    Q = {}
    for e in pairs:
        i, j = e
        qa, qb = plan.pair_lengths[e]
        Q[(i, j)] = connect(state, _leaf(stars, i, j), u_in[e], qa, rng=rng, restarts=params.connect_restarts,
                            audit=params.audit)
        if e != last:
            Q[(j, i)] = connect(state, _leaf(stars, j, i), u_out[e], qb, rng=rng,
                                restarts=params.connect_restarts, audit=params.audit)

    trial.stage = "chain"
    pool = {v for v in range(n) if state.is_free(v)} | set(V0)
    starts = {p[0] for p in seeds}
    ends = {p[-1] for p in seeds}
    grown = _grow_layers(g, [v for v in V_in if v not in starts], [v for v in V_mid if v not in ends], k,
                         pool, rng)
    parts = [V_small[i] + grown[i] for i in range(k)]
    chain = matching_chain(g, V_in, parts, V_mid)
    rest = pool - {v for layer in grown for v in layer}

    trial.stage = "hamilton"
    a, b = _leaf(stars, last[1], last[0]), u_out[last]
    if len(rest) + 1 != q_last:
        raise StageFailure("hamilton", f"{len(rest)} vertices left for a path of length {q_last}")
    Q[(last[1], last[0])] = hamilton_path(g, rest | {a, b}, a, b, rng=rng, restarts=params.hamilton_restarts,
                                          rotation_factor=params.hamilton_rotation_factor)

    trial.stage = "route"
    v_start = {e: chain.ends[u_in[e]] for e in pairs}
    sigma = assemble_sigma(plan.loop_blocks, list(zip(A, B)), v_start, chain.ends, u_out)
    routed = route(router, sigma)
    paths = {}
    for e in pairs:
        i, j = e
        path = [centers[i]] + Q[(i, j)]
        cur = u_in[e]
        for l in list(plan.loop_blocks[e]) + [None]:
            path += chain.paths[cur][1:]
            path += routed[chain.paths[cur][-1]][1:]
            if l is None:
                break
            path += loops[l][::-1][1:]
            cur = A[l]
        path += Q[(j, i)][::-1][1:] + [centers[j]]
        paths[e] = path
    return Subdivision(t, centers, paths)


# joined ---------------------------------------------------------------------
class _Spare:
    """The ``R2`` vertices that are not kept for absorption, spent on short links."""

    def __init__(self, vertices):
        self.free = set(vertices)

    def take(self, v: int) -> None:
        self.free.remove(v)

    def link(self, g: Graph, a: int, b: int, rng) -> list[int]:
        """Cheapest ``(a, b)``-link: an edge, a common spare neighbour, or a 3-path through spares."""
        sets = g.nbr_sets
        if b in sets[a]:
            return [a, b]
        common = sorted(self.free & sets[a] & sets[b])
        if common:
            z = common[int(rng.integers(len(common)))]
            self.take(z)
            return [a, z, b]
        xs = sorted(self.free & sets[a])
        for i in rng.permutation(len(xs)):
            x = xs[int(i)]
            hits = sorted((self.free & sets[x] & sets[b]) - {x})
            if hits:
                y = hits[int(rng.integers(len(hits)))]
                self.take(x)
                self.take(y)
                return [a, x, y, b]
        raise StageFailure("connections", f"no link of length at most 3 from {a} to {b} through spares")


def _joinedness_tag(g: Graph, params: DeskScaleParams, details: dict) -> str:
    eps_n = max(1, math.ceil(params.epsilon * g.n))
    if math.comb(g.n, eps_n) <= 10**5:
        cert = is_joined_exhaustive(g, eps_n)
        details["joinedness"] = cert
        return "met" if cert.kind == "exhaustive" else "falsified"
    if g.regular_degree() is not None:
        m = spectral_joinedness_m(spectral_profile(g))
        details["joinedness_m"] = m
        if m <= eps_n:
            return "met"
    witness = falsify_joinedness(g, eps_n, attempts=20, seed=0)
    if witness is not None:
        details["joinedness_witness"] = witness
        return "falsified"
    return "assumed"


def pipeline_joined(g: Graph, t: int, params: DeskScaleParams | None = None, seed: int = 0) -> TrialResult:
    """Absorption construction for graphs with linear minimum degree and small bipartite holes.

    Stages: reservoirs ``R1, R2, R3``; template; triangle absorbers for the
    template's right side; one absorbing path per template vertex; a skeleton
    threading the absorbing paths onto the branching paths through ``R3``; a
    long path covering everything else except ``⌊2εn⌋`` single vertices;
    segments of it, and the singles, joined in through ``R2`` with segment
    sizes chosen so that lengths end up within one of each other; finally
    every vertex left in ``R1 ∪ R2`` is absorbed.
    """
    params = params or DeskScaleParams()
    return _run("joined", g, t, seed, params,
                lambda trial, details, rng: _joined(g, t, params, rng, trial, details),
                "nearly_balanced_spanning")


def _joined(g: Graph, t: int, params: DeskScaleParams, rng, trial: _Trial, details: dict) -> Subdivision:
    n = g.n
    trial.stage = "preconditions"
    _require(t >= 2, "t must be at least 2")
    _require(n > 0 and g.min_degree() >= params.mu * n, "minimum degree below μn")
    trial.stage = "certificate"
    trial.hypothesis = _joinedness_tag(g, params, details)
    if t > params.c * math.sqrt(n):
        trial.hypothesis = "unmet"

    trial.stage = "reservoirs"
    res = pick_reservoirs(g, t, params, seed=rng)
    reserved = res.all()
    right_vertex = list(res.R1) + list(res.R2)
    details["reservoirs"] = res

    trial.stage = "template"
    tpl = build_template(res.r, res.k_res, rng, degree=params.template_degree, cap=params.absorber_cap,
                         samples=0, max_retries=params.max_retries)
    details["template"] = tpl
    details["robustness"] = tpl.robustness(params.template_samples, rng)

    trial.stage = "branch-vertices"
    pool = [v for v in range(n) if v not in reserved]
    if len(pool) < t:
        raise StageFailure("branch-vertices", "no room outside the reservoirs")
    branch = sorted(int(v) for v in rng.choice(pool, size=t, replace=False))

    trial.stage = "absorbers"
    deg = tpl.right_degrees()
    counts = {right_vertex[w]: c for w, c in enumerate(deg) if c}
    absorbers = build_absorbers(g, sorted(counts), counts, reserved | set(branch), rng)

    trial.stage = "absorbing-paths"
    available = set(range(n)) - reserved - set(branch) - absorbers.vertices()
    size = params.absorbing_path_size or absorbing_path_floor(tpl)
    qpaths = assemble_absorbing_paths(g, tpl, right_vertex, absorbers, available, size, rng)
    details["absorbing_paths"] = qpaths
    details["variants"] = [absorber_variants(g, Q) for Q in qpaths]

    trial.stage = "skeleton"
    pairs = list(itertools.combinations(range(t), 2))
    chains: dict[tuple[int, int], list] = {e: [] for e in pairs}
    for idx, Q in enumerate(qpaths):
        chains[pairs[idx % len(pairs)]].append(Q)
    r3 = set(res.R3)
    tails = {}
    for e in pairs:
        rev = [branch[e[1]]]
        for Q in chains[e]:
            link = three_path_connect(g, rev[-1], Q.vertices[-1], r3, rng=rng)
            r3.difference_update(link[1:3])
            rev += link[1:3] + Q.vertices[::-1]
        tails[e] = rev[::-1]

    trial.stage = "long-path"
    used = set(res.R1) | set(res.R2) | set(branch)
    for tail in tails.values():
        used.update(tail)
    rest = [v for v in range(n) if v not in used]
    keep = len(rest) - res.singles
    if keep < len(pairs):
        raise StageFailure("long-path", f"only {len(rest)} vertices left for {len(pairs)} segments")
    P = dfs_long_path(g, rest) if rest else []
    if len(P) < keep:
        raise StageFailure("long-path", f"path covers {len(P)} of the {keep} required vertices")
    P = P[:keep]
    inP = set(P)
    singles = [v for v in rest if v not in inP]

    trial.stage = "balance"
    n_q = {e: len(chains[e]) for e in pairs}
    n_single = {e: 0 for e in pairs}
    assigned: dict[tuple[int, int], list[int]] = {e: [] for e in pairs}
    for u in singles:
        e = min(pairs, key=lambda f: (len(tails[f]) + 5 * n_single[f] + n_q[f], f))
        n_single[e] += 1
        assigned[e].append(u)
    # final length = |segment| + |tail| + 4 + 5·singles + absorbed
    fixed = {e: len(tails[e]) + 4 + 5 * n_single[e] + n_q[e] for e in pairs}
    base, extra = divmod(len(P) + sum(fixed.values()), len(pairs))
    by_fixed = sorted(pairs, key=lambda e: (-fixed[e], e))
    seg_len = {e: base + (1 if idx < extra else 0) - fixed[e] for idx, e in enumerate(by_fixed)}
    for e in pairs:
        if seg_len[e] < n_single[e] + 1:
            raise StageFailure("balance", f"segment for {e} would have {seg_len[e]} vertices")

    trial.stage = "connections"
    keep = tpl.leftover_choice()
    if keep is None:
        raise StageFailure("template", "no perfect matching covers Y")
    z_keep = {right_vertex[w] for w in keep}
    spares = [v for v in res.R2 if v not in z_keep]
    # Which pair takes which stretch of P, and in which direction, is free; try
    # arrangements until every link and top-up fits.
    failure = None
    for attempt in range(max(1, params.connect_restarts)):
        order = pairs if attempt == 0 else [pairs[int(i)] for i in rng.permutation(len(pairs))]
        flips = {e: attempt > 0 and bool(rng.integers(2)) for e in pairs}
        segments, pos = {}, 0
        for e in order:
            seg = P[pos: pos + seg_len[e]]
            segments[e] = seg[::-1] if flips[e] else seg
            pos += seg_len[e]
        try:
            paths = _join_segments(g, pairs, branch, segments, tails, assigned, spares, rng)
            break
        except StageFailure as exc:
            failure = exc
    else:
        raise failure
    details["arrangements_tried"] = attempt + 1
    sub = Subdivision(t, branch, paths)
    leftover = set(res.R1) | z_keep
    covered = sub.vertices()
    if covered & leftover or len(covered) + len(leftover) != n:
        raise StageFailure("connections", "pre-absorption cover does not complement the leftover")
    details["pre_absorption_balance"] = sub.balance()

    trial.stage = "absorb"
    final, chosen = absorb(g, sub, qpaths, tpl, right_vertex, leftover)
    details["absorbed"] = chosen
    return final


def _join_segments(g: Graph, pairs, branch, segments, tails, assigned, spares, rng) -> dict:
    """Branching paths ``s_i, link, segment (with its singles), link, tail`` using every spare once.

    Each pair may spend ``4 + 4·singles`` spares.  Links use as few as they
    can; the unspent allowance of each path is then filled by placing spares
    into the edges of its path, with spares matched to paths first.
    """
    sets = g.nbr_sets
    spare = _Spare(spares)
    bodies, budget = {}, {}
    for e in pairs:
        seg = segments[e]
        # A single u goes between consecutive x, y ∈ N(u) when possible, else via two links.
        detour: dict[int, list[int]] = {}
        for u in assigned[e]:
            spots = [p for p in range(len(seg) - 1) if p not in detour
                     and u in sets[seg[p]] and u in sets[seg[p + 1]]]
            if spots:
                detour[spots[int(rng.integers(len(spots)))]] = [u]
            else:
                p = min(p for p in range(len(seg) - 1) if p not in detour)
                detour[p] = spare.link(g, seg[p], u, rng)[1:-1] + [u] + spare.link(g, u, seg[p + 1], rng)[1:-1]
        body = []
        for p, v in enumerate(seg):
            body.append(v)
            body += detour.get(p, [])
        head = spare.link(g, branch[e[0]], body[0], rng)[1:-1]
        mid = spare.link(g, body[-1], tails[e][0], rng)[1:-1]
        budget[e] = 4 + 4 * len(assigned[e]) - len(head) - len(mid) - (len(body) - len(seg) - len(assigned[e]))
        bodies[e] = (head, body, mid)
    owed = [(e, idx) for e in pairs for idx in range(budget[e])]
    if len(owed) != len(spare.free) or any(budget[e] < 0 for e in pairs):
        raise StageFailure("connections", "spare accounting does not balance")

    # Spares may sit between any two consecutive vertices from the branch vertex to the tail.
    routes = {e: [branch[e[0]]] + head + body + mid + [tails[e][0]] for e, (head, body, mid) in bodies.items()}

    def spots(route, z):
        return [p for p in range(len(route) - 1) if route[p] in sets[z] and route[p + 1] in sets[z]]

    spare_list = sorted(spare.free)
    fits = {z: [slot for slot in owed if spots(routes[slot[0]], z)] for z in spare_list}
    placed = hopcroft_karp(spare_list, fits)
    if len(placed) < len(spare_list):
        raise StageFailure("connections", f"{len(spare_list) - len(placed)} spare vertices fit no segment")
    for z in spare_list:
        route = routes[placed[z][0]]
        options = spots(route, z)
        if not options:
            raise StageFailure("connections", f"path edges of {placed[z][0]} used up")
        route.insert(options[int(rng.integers(len(options)))] + 1, z)
        spare.take(z)
    return {e: route[:-1] + tails[e] for e, route in routes.items()}


def pipeline_perturbed(g_base: Graph, p: float, t: int, params: DeskScaleParams | None = None,
                       seed: int = 0) -> TrialResult:
    """Union of ``g_base`` with a fresh ``G(n, p)``, handed to :func:`pipeline_joined`."""
    params = params or DeskScaleParams()
    sprinkle = gnp(g_base.n, p, seed=np.random.SeedSequence([int(params.rng_seed), int(seed), 1]))
    g = union(g_base, sprinkle)
    result = pipeline_joined(g, t, params, seed)
    result.report.pipeline = "perturbed"
    result.details["graph"] = g
    return result
