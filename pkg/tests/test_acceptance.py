"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Run with ``pytest -v tests/test_acceptance.py``; the lines are repeated in the
"acceptance criteria" section of the terminal summary.
"""

import itertools
import math
import time

import networkx as nx
import numpy as np
import pytest

from spansub.absorption import absorber_variants, build_template
from spansub.cli import main
from spansub.errors import InfeasibleError
from spansub.extend import ExtendableState, dfs_long_path, is_extendable_exhaustive, sufficient_extendability
from spansub.graph import Graph, complete_graph, paley_graph, random_regular, two_cliques
from spansub.params import DeskScaleParams
from spansub.pipelines import pipeline_balanced, pipeline_joined, pipeline_perturbed, pipeline_unbalanced
from spansub.routing import check_path_factor, embed_router, plan_lengths_balanced, plan_lengths_unbalanced, route
from spansub.spectra import is_joined_exhaustive, lambda_lower_bound, mixing_audit, spectral_profile
from spansub.verify import Subdivision, oracle_exists, verify

from conftest import random_graph

P = DeskScaleParams()

# pinned tolerances and budgets
C1_GRAPHS, C1_PAIRS, C1_LAMBDA_TOL, C1_SECONDS = 100, 1000, 1e-6, 60.0
C2_STATES = 500
C3_RANDOM_SIGMAS = 1000
C4_INSTANCES = 1000
C5_PATH_SIZE = 1000
C6_SAMPLES, C6_SEEDS, C6_MIN_FIRST_BUILD = 200, 20, 18
C7_GRAPHS = 50
C8_GRAPHS, C8_FIXTURES = 500, 50
C9_SEEDS, C9_MIN_RATE, C9_SECONDS = 30, 0.70, 30 * 60.0
C10_SEEDS, C10_MIN_RATE = 30, 0.60


# 1 ------------------------------------------------------------------------------
def test_criterion_1_spectral_soundness(record):
    start = time.perf_counter()
    graphs = [paley_graph(q) for q in (13, 17, 29)]
    rng = np.random.default_rng(1)
    while len(graphs) < C1_GRAPHS:
        d = (3, 10, 40)[len(graphs) % 3]
        n = int(rng.integers(max(d + 2, 50), 201))
        n += (n * d) % 2
        graphs.append(random_regular(n, d, int(rng.integers(2**31))))
    worst_gap, violations = math.inf, 0
    for i, g in enumerate(graphs):
        prof = spectral_profile(g)
        worst_gap = min(worst_gap, prof.lam - lambda_lower_bound(g.n, prof.d))
        try:
            mixing_audit(g, prof, trials=C1_PAIRS, seed=i)
        except Exception:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = worst_gap >= -C1_LAMBDA_TOL and violations == 0 and elapsed < C1_SECONDS
    record(1, "spectral soundness", ok,
           f"{len(graphs)} graphs, min(λ - bound) = {worst_gap:.4g} >= -{C1_LAMBDA_TOL:g}, "
           f"{violations} mixing violations over {C1_PAIRS} pairs each, {elapsed:.1f} s < {C1_SECONDS:g} s")
    assert ok


# 2 ------------------------------------------------------------------------------
def random_small_state(rng) -> ExtendableState:
    n = int(rng.integers(8, 31))
    g = random_graph(n, float(rng.uniform(0.2, 0.95)), int(rng.integers(2**31)))
    state = ExtendableState(g, int(rng.choice([3, 4])), 1)
    edges = g.edges()
    for i in rng.permutation(len(edges))[: int(rng.integers(0, 6))]:
        state.add_edge(*edges[int(i)])
    return state


def test_criterion_2_extendability_implication(record):
    rng = np.random.default_rng(2)
    sufficient, counterexamples = 0, 0
    for _ in range(C2_STATES):
        state = random_small_state(rng)
        if sufficient_extendability(state):
            sufficient += 1
            if not is_extendable_exhaustive(state):
                counterexamples += 1
    ok = counterexamples == 0 and sufficient > 0
    record(2, "extendability implication", ok,
           f"{C2_STATES} states (n <= 30, D in {{3,4}}, m = 1), sufficient in {sufficient}, "
           f"{counterexamples} counterexamples")
    assert ok


# 3 ------------------------------------------------------------------------------
def test_criterion_3_router_totality(record):
    g = random_regular(600, 40, 3)
    rng = np.random.default_rng(3)
    checked, failures = 0, 0
    for w in (2, 3, 4, 8):
        t_in = [int(v) for v in rng.permutation(g.n)[:w]]
        router = embed_router(ExtendableState(g, 3, 1), t_in, rng=rng)
        if w <= 4:
            images = itertools.permutations(range(w))
        else:
            images = (rng.permutation(w).tolist() for _ in range(C3_RANDOM_SIGMAS))
        for image in images:
            sigma = {router.terminals_in[i]: router.terminals_out[image[i]] for i in range(w)}
            checked += 1
            try:
                check_path_factor(g, router, sigma, route(router, sigma))
            except AssertionError:
                failures += 1
    ok = failures == 0
    record(3, "router totality", ok,
           f"{checked} bijections (all for widths 2, 3, 4; {C3_RANDOM_SIGMAS} random for width 8), "
           f"{failures} failures")
    assert ok


# 4 ------------------------------------------------------------------------------
def test_criterion_4_length_plans(record):
    rng = np.random.default_rng(4)
    bad_balanced = bad_unbalanced = infeasible = 0
    for _ in range(C4_INSTANCES):
        n = int(rng.integers(2000, 20001))
        t = int(rng.integers(2, 7))
        k, ell, mp = int(rng.integers(1, 6)), int(rng.integers(10, 81)), int(rng.integers(0, 61))
        sizes = {"V_prime": int(rng.integers(0, n // 10)), "Z": int(rng.integers(0, n // 10)),
                 "m": int(rng.integers(16, 65))}
        try:
            plan = plan_lengths_balanced(n, t, k, ell, mp, sizes, P)
        except InfeasibleError:
            infeasible += 1
        else:
            totals = [qa + qb + plan.loop_counts[e] * plan.M for e, (qa, qb) in plan.pair_lengths.items()]
            fill = k * (sizes["m"] - math.ceil(P.epsilon * sizes["m"]))
            used = sum(qa - 1 + qb - 1 for qa, qb in plan.pair_lengths.values())
            identity = n - sizes["V_prime"] - sizes["Z"] - mp * (plan.loop_length - 1) - used == fill
            if max(totals) - min(totals) > 1 or not identity:
                bad_balanced += 1
        uplan = plan_lengths_unbalanced(n, t, P)
        ls = list(uplan.pair_lengths.values())
        lo = (1 - P.p) * n - 200 * P.epsilon * n
        hi = (1 - P.p) * n - 100 * P.epsilon * n
        if ls and not (lo <= sum(ls) <= hi and min(ls) >= math.ceil(float(P.beta_log) * math.log(n))):
            bad_unbalanced += 1
    ok = bad_balanced == 0 and bad_unbalanced == 0 and infeasible < C4_INSTANCES
    record(4, "length-plan exactness", ok,
           f"{C4_INSTANCES} instances: balanced {C4_INSTANCES - infeasible} planned "
           f"({infeasible} declared infeasible), {bad_balanced} violations; unbalanced {bad_unbalanced} violations")
    assert ok


# 5 ------------------------------------------------------------------------------
@pytest.fixture(scope="module")
def joined_2000():
    g = random_regular(2000, 500, 5)
    return g, pipeline_joined(g, 3, P, 5)


def test_criterion_5_absorber_variants(joined_2000, record):
    g, res = joined_2000
    assert res.report.success, res.report.reason
    paths = res.details["absorbing_paths"]
    exhibited = 0
    for Q in paths:
        for v, without, with_v in absorber_variants(g, Q):
            assert without[0] == with_v[0] and without[-1] == with_v[-1]
            assert set(with_v) == set(without) | {v} and len(with_v) == len(set(with_v))
            assert all(g.has_edge(a, b) for p in (without, with_v) for a, b in zip(p, p[1:]))
            exhibited += 1
    ok = exhibited == sum(len(Q.slots) for Q in paths) > 0
    record("5a", "absorber variants", ok,
           f"{len(paths)} absorbing paths at n = 2000, {exhibited} absorbers with both Hamiltonian variants verified")
    assert ok


def test_criterion_5_absorbing_path_size(joined_2000, record):
    g, res = joined_2000
    assert res.report.success, res.report.reason
    sizes = sorted({len(Q.vertices) for Q in res.details["absorbing_paths"]})
    count = len(res.details["absorbing_paths"])
    ok = sizes == [C5_PATH_SIZE]
    record(5, "absorbing path size", ok,
           f"|Q_i| in {sizes}, required {C5_PATH_SIZE}; {count} disjoint paths of {C5_PATH_SIZE} vertices "
           f"would need {count * C5_PATH_SIZE} > n = {g.n} vertices (3r·{C5_PATH_SIZE} > 2000 for every r >= 1)")
    assert ok


# 6 ------------------------------------------------------------------------------
def test_criterion_6_template_robustness(record):
    first = 0
    for seed in range(C6_SEEDS):
        tpl = build_template(8, 4, seed, degree=P.template_degree, cap=P.absorber_cap,
                             samples=C6_SAMPLES, max_retries=P.max_retries)
        first += tpl.attempts == 1
        assert max(tpl.right_degrees()) <= P.absorber_cap
    ok = first >= C6_MIN_FIRST_BUILD
    record(6, "template robustness", ok,
           f"r = 8, k_res = 4, degree {P.template_degree}: {first}/{C6_SEEDS} seeds pass {C6_SAMPLES} sampled Z' "
           f"on the first build (need >= {C6_MIN_FIRST_BUILD})")
    assert ok


# 7 ------------------------------------------------------------------------------
def test_criterion_7_dfs_long_path(record):
    rng = np.random.default_rng(7)
    cases, worst = 0, math.inf
    per_m = {1: 0, 2: 0, 3: 0}
    while cases < C7_GRAPHS:
        n = int(rng.integers(8, 19))
        g = random_graph(n, float(rng.uniform(0.3, 0.9)), int(rng.integers(2**31)))
        m = next((m for m in (1, 2, 3) if 2 * m <= n and is_joined_exhaustive(g, m).kind == "exhaustive"), None)
        if m is None or per_m[m] >= C7_GRAPHS // 3 + 1:
            continue
        per_m[m] += 1
        cases += 1
        path = dfs_long_path(g, m=m)
        worst = min(worst, (len(path) - 1) - (n - 2 * m))
    ok = worst >= 0
    record(7, "DFS long path", ok,
           f"{cases} graphs (n <= 18, certified m = 1/2/3: {per_m[1]}/{per_m[2]}/{per_m[3]}), "
           f"min(length - (n - 2m)) = {worst} >= 0")
    assert ok


# 8 ------------------------------------------------------------------------------
def tiny_connected_graphs(count, rng):
    atlas = [h for h in nx.graph_atlas_g() if 3 <= h.number_of_nodes() <= 7 and nx.is_connected(h)]
    out = [atlas[int(i)] for i in rng.choice(len(atlas), size=count - count // 5, replace=False)]
    while len(out) < count:
        h = nx.gnp_random_graph(8, float(rng.uniform(0.3, 0.9)), seed=int(rng.integers(2**31)))
        if nx.is_connected(h):
            out.append(h)
    return [Graph.from_edges(h.number_of_nodes(), h.edges()) for h in out]


MODE = {"unbalanced": "spanning", "balanced": "nearly_balanced_spanning",
        "joined": "nearly_balanced_spanning", "perturbed": "nearly_balanced_spanning"}


def mutations():
    """One corruption of each kind for valid nearly balanced subdivisions of K_20 .. K_32 (t = 3) and K_34 .. K_40 (t = 4)."""
    out = []
    for n, t in [(n, 3) for n in range(20, 33)] + [(n, 4) for n in range(34, 41)]:
        g = complete_graph(n)
        sub = pipeline_joined(g, t, P, n).subdivision
        assert verify(g, sub, "nearly_balanced_spanning").ok
        long = max(sub.paths, key=lambda e: len(sub.paths[e]))
        p = sub.paths[long]
        a, b = p[1], p[2]
        cut = Graph.from_edges(n, [e for e in g.edges() if e != (min(a, b), max(a, b))])
        out.append(("edge deletion", cut, sub, "any"))
        other = next(e for e in sub.paths if e != long)
        q = sub.paths[other]
        overlap = {**sub.paths, other: q[:1] + [p[1]] + q[1:]}
        out.append(("interior overlap", g, Subdivision(sub.t, sub.branch, overlap), "any"))
        out.append(("coverage gap", Graph.from_edges(n + 1, g.edges()), sub, "spanning"))
        short = min((e for e in sub.paths if e != long), key=lambda e: len(sub.paths[e]))
        moved = dict(sub.paths)
        take = moved[long][1:4]
        moved[long] = moved[long][:1] + moved[long][4:]
        moved[short] = moved[short][:-1] + take + moved[short][-1:]
        out.append(("imbalance", g, Subdivision(sub.t, sub.branch, moved), "nearly_balanced_spanning"))
    return out


def test_criterion_8_oracle_equivalence(record):
    rng = np.random.default_rng(8)
    graphs = tiny_connected_graphs(C8_GRAPHS, rng)
    runs = successes = unconfirmed = witnesses = witness_rejected = 0
    for g in graphs:
        for t in (3, 4):
            if t > g.n:
                continue
            found, wit = oracle_exists(g, t, "nearly_balanced_spanning")
            if found:
                witnesses += 1
                witness_rejected += not verify(g, wit, "nearly_balanced_spanning").ok
            for name in MODE:
                runs += 1
                if name == "perturbed":
                    res = pipeline_perturbed(g, 0.3, t, P, 0)
                    host = res.details.get("graph", g)
                else:
                    res = {"unbalanced": pipeline_unbalanced, "balanced": pipeline_balanced,
                           "joined": pipeline_joined}[name](g, t, P, 0)
                    host = g
                if res.report.success:
                    successes += 1
                    confirmed = oracle_exists(host, t, MODE[name])[0] and verify(host, res.subdivision, MODE[name]).ok
                    unconfirmed += not confirmed
    fixtures = mutations()[:C8_FIXTURES]
    kinds = {}
    accepted = 0
    for kind, h, sub, mode in fixtures:
        kinds[kind] = kinds.get(kind, 0) + 1
        accepted += verify(h, sub, mode).ok
    ok = unconfirmed == 0 and witness_rejected == 0 and accepted == 0 and len(fixtures) == C8_FIXTURES
    record(8, "oracle equivalence", ok,
           f"{len(graphs)} connected graphs (n <= 8), {runs} pipeline runs, {successes} successes "
           f"({unconfirmed} not oracle-confirmed); {witnesses} oracle witnesses, {witness_rejected} rejected by verify; "
           f"{len(fixtures)} mutated fixtures {kinds}, {accepted} accepted")
    assert ok


# 9 ------------------------------------------------------------------------------
def won(g, res, mode, balance_cap) -> int:
    """1 for a verified success within the balance cap, 0 for a failed trial."""
    if not res.report.success:
        return 0
    assert verify(g, res.subdivision, mode).ok
    assert res.subdivision.balance() <= balance_cap
    return 1


def test_criterion_9_end_to_end_rates(record):
    # Trials are scored as they finish so that only one large graph is alive at a time.
    start = time.perf_counter()
    seeds = range(C9_SEEDS)
    joined = {t: 0 for t in (3, 4, 5)}
    unbal = bal = 0
    for s in seeds:
        g = random_regular(2000, 500, 900 + s)
        for t in joined:
            joined[t] += won(g, pipeline_joined(g, t, P, s), "nearly_balanced_spanning", 2)
        g = random_regular(1000, 50, 910 + s)
        unbal += won(g, pipeline_unbalanced(g, 3, P, s), "spanning", 10**9)
        g = random_regular(4000, 200, 920 + s)
        bal += won(g, pipeline_balanced(g, 3, P, s), "nearly_balanced_spanning", 1)
        del g
    r_joined = {t: w / C9_SEEDS for t, w in joined.items()}
    r_unbal, r_bal = unbal / C9_SEEDS, bal / C9_SEEDS
    elapsed = time.perf_counter() - start
    ok = (min(r_joined.values()) >= C9_MIN_RATE and r_unbal >= C9_MIN_RATE and elapsed < C9_SECONDS)
    record(9, "end-to-end rates", ok,
           "joined rr(2000,500) " + ", ".join(f"t={t}: {r:.0%}" for t, r in r_joined.items())
           + f"; unbalanced rr(1000,50) t=3: {r_unbal:.0%}; balanced rr(4000,200) t=3: {r_bal:.0%} "
           f"(every success max-min <= 1); need >= {C9_MIN_RATE:.0%} over {C9_SEEDS} seeds; "
           f"{elapsed:.0f} s < {C9_SECONDS:.0f} s")
    assert ok


# 10 -----------------------------------------------------------------------------
def test_criterion_10_perturbed_model(record):
    base = two_cliques(2000)
    assert not nx.is_connected(nx.Graph(base.edges()))
    p = 50 / base.n
    wins = 0
    for s in range(C10_SEEDS):
        res = pipeline_perturbed(base, p, 3, P, s)
        if res.report.success:
            assert verify(res.details["graph"], res.subdivision, "nearly_balanced_spanning").ok
            wins += 1
    control = sum(pipeline_perturbed(base, 0.0, 3, P, s).report.success for s in range(C10_SEEDS))
    r = wins / C10_SEEDS
    ok = r >= C10_MIN_RATE and control == 0
    record(10, "perturbed model", ok,
           f"two K_1000 + G(n, 50/n), t=3: {r:.0%} (need >= {C10_MIN_RATE:.0%}) over {C10_SEEDS} seeds; "
           f"p = 0 control {control}/{C10_SEEDS}")
    assert ok


# 11 -----------------------------------------------------------------------------
def cli_session(root, capsys):
    root.mkdir()
    (root / "exp.txt").write_text("pipeline = joined\nfamily = random-regular\nn = 600\nd = 150\n"
                                  "t = 3-4\nseeds = 0-3\nworkers = 2\n")
    (root / "perm.txt").write_text("2 0 3 1\n")
    calls = [
        ["print-defaults"],
        ["generate", "--family", "random-regular", "--n", "600", "--d", "150", "--seed", "4", "--out", root / "g.txt"],
        ["generate", "--family", "petersen", "--out", root / "pet.txt"],
        ["analyze", "--graph", root / "g.txt", "--out", root / "profile.csv"],
        ["find-subdivision", "--pipeline", "joined", "--t", "3", "--seed", "2", "--graph", root / "g.txt",
         "--out", root / "sub.txt"],
        ["verify", "--graph", root / "g.txt", "--subdivision", root / "sub.txt"],
        ["oracle", "--graph", root / "pet.txt", "--t", "4", "--out", root / "wit.txt"],
        ["route", "--build", "--graph", root / "g.txt", "--width", "4", "--router", root / "router.json"],
        ["route", "--router", root / "router.json", "--permutation", root / "perm.txt", "--out", root / "paths.txt"],
        ["experiment", "--config", root / "exp.txt", "--out", root / "exp.csv"],
    ]
    codes = [main([str(a) for a in c]) for c in calls]
    out = capsys.readouterr().out
    files = {p.name: p.read_bytes() for p in sorted(root.iterdir())}
    return codes, out, files


def test_criterion_11_determinism(tmp_path, capsys, record):
    a = cli_session(tmp_path / "a", capsys)
    b = cli_session(tmp_path / "b", capsys)
    same_files = a[2] == b[2]
    ok = a[0] == b[0] and a[1] == b[1] and same_files and a[0][:9] == [0] * 9
    record(11, "determinism", ok,
           f"{len(a[0])} CLI invocations repeated (experiment with 2 workers), exit codes {a[0]}, "
           f"{len(a[2])} output files byte-identical: {same_files}, stdout identical: {a[1] == b[1]}")
    assert ok
