"""Subdivision container, text format, the verifier and a brute-force oracle."""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

from .errors import GraphFormatError
from .graph import Graph

MODES = ("any", "spanning", "nearly_balanced_spanning")
ORACLE_MAX_N = 12


@dataclass
class Subdivision:
    """``t`` branch vertices and one path per pair ``i < j`` running from ``branch[i]`` to ``branch[j]``."""

    t: int
    branch: list[int]
    paths: dict[tuple[int, int], list[int]] = field(default_factory=dict)

    def lengths(self) -> dict[tuple[int, int], int]:
        return {e: len(p) - 1 for e, p in self.paths.items()}

    def vertices(self) -> set[int]:
        out = set(self.branch)
        for p in self.paths.values():
            out.update(p)
        return out

    def balance(self) -> int:
        """``max - min`` of the path lengths (0 for fewer than two paths)."""
        ls = list(self.lengths().values())
        return max(ls) - min(ls) if ls else 0

    def to_text(self) -> str:
        lines = [str(self.t), " ".join(map(str, self.branch))]
        for (i, j) in sorted(self.paths):
            lines.append(f"{i} {j}: " + " ".join(map(str, self.paths[(i, j)])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Subdivision":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        try:
            t = int(lines[0])
            branch = [int(x) for x in lines[1].split()] if len(lines) > 1 else []
            paths = {}
            for ln in lines[2:]:
                head, body = ln.split(":", 1)
                i, j = (int(x) for x in head.split())
                if (i, j) in paths:
                    raise GraphFormatError(f"pair {i} {j} listed twice")
                paths[(i, j)] = [int(x) for x in body.split()]
        except (ValueError, IndexError) as exc:
            raise GraphFormatError(f"malformed subdivision text: {exc}") from None
        return cls(t, branch, paths)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path: str | os.PathLike) -> "Subdivision":
        with open(path, encoding="ascii") as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class Verdict:
    ok: bool
    mode: str
    check: str | None = None  # name of the first failed check
    detail: str = ""

    def __str__(self) -> str:
        return f"valid ({self.mode})" if self.ok else f"invalid: {self.check}: {self.detail}"


def verify(g: Graph, sub: Subdivision, mode: str = "spanning") -> Verdict:
    """Check ``sub`` against the definition of a (spanning, nearly balanced) subdivision.

    Checks run in order and the first failure is reported: structure,
    adjacency, internal disjointness, branch incidence, spanning, near-balance
    (all lengths inside ``[ℓ-1, ℓ+1]`` for some integer ``ℓ``).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")

    def bad(check, detail):
        return Verdict(False, mode, check, detail)

    t, branch = sub.t, sub.branch
    if t < 1 or len(branch) != t:
        return bad("structure", f"expected {t} branch vertices, got {len(branch)}")
    if len(set(branch)) != t:
        return bad("structure", "branch vertices repeat")
    if any(not 0 <= v < g.n for v in branch):
        return bad("structure", "branch vertex out of range")
    pairs = list(itertools.combinations(range(t), 2))
    if set(sub.paths) != set(pairs):
        missing = sorted(set(pairs) - set(sub.paths))
        extra = sorted(set(sub.paths) - set(pairs))
        return bad("structure", f"pairs missing {missing[:3]} extra {extra[:3]}")
    for (i, j) in pairs:
        p = sub.paths[(i, j)]
        if len(p) < 2 or p[0] != branch[i] or p[-1] != branch[j]:
            return bad("structure", f"path {i} {j} does not run from s_{i} to s_{j}")
        if any(not 0 <= v < g.n for v in p):
            return bad("structure", f"path {i} {j} leaves the vertex range")
        if len(set(p)) != len(p):
            return bad("structure", f"path {i} {j} repeats a vertex")
    sets = g.nbr_sets
    for (i, j) in pairs:
        p = sub.paths[(i, j)]
        for a, b in zip(p, p[1:]):
            if b not in sets[a]:
                return bad("adjacency", f"{a}-{b} on path {i} {j} is not an edge")
    owner: dict[int, tuple[int, int]] = {}
    branch_set = set(branch)
    for (i, j) in pairs:
        for v in sub.paths[(i, j)][1:-1]:
            if v in branch_set:
                return bad("disjointness", f"branch vertex {v} inside path {i} {j}")
            if v in owner:
                return bad("disjointness", f"vertex {v} inside paths {owner[v]} and {(i, j)}")
            owner[v] = (i, j)
    incidence = {v: 0 for v in branch}
    for (i, j) in pairs:
        p = sub.paths[(i, j)]
        incidence[p[0]] += 1
        incidence[p[-1]] += 1
    if any(c != t - 1 for c in incidence.values()):
        return bad("branch-degree", "a branch vertex is not the end of t-1 paths")
    if mode == "any":
        return Verdict(True, mode)
    covered = len(owner) + t
    if covered != g.n:
        missing = next(v for v in range(g.n) if v not in owner and v not in branch_set)
        return bad("spanning", f"{g.n - covered} vertices uncovered, e.g. {missing}")
    if mode == "spanning":
        return Verdict(True, mode)
    lengths = [len(p) - 1 for p in sub.paths.values()]
    if lengths and max(lengths) - min(lengths) > 2:
        return bad("near-balance", f"lengths range over [{min(lengths)}, {max(lengths)}]")
    return Verdict(True, mode)


# oracle ---------------------------------------------------------------------
def oracle_exists(g: Graph, t: int, mode: str = "spanning") -> tuple[bool, Subdivision | None]:
    """Exhaustive search for a ``K_t``-subdivision (``n <= 12``).

    Tries every branch set and backtracks over the pairs, enumerating simple
    paths through unused non-branch vertices.  Returns a witness when found.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    n = g.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    if t < 1 or t > n:
        return False, None
    if t == 1:
        ok = n == 1 or mode == "any"
        return ok, (Subdivision(1, [0], {}) if ok else None)
    adj = g.adj
    pairs = list(itertools.combinations(range(t), 2))
    spanning = mode != "any"
    balanced = mode == "nearly_balanced_spanning"

    for branch in itertools.combinations(range(n), t):
        bset = set(branch)
        used = [False] * n
        for v in branch:
            used[v] = True
        chosen: dict[tuple[int, int], list[int]] = {}

        def paths_between(s, target):
            # Simple paths s -> target through unused non-branch vertices.  While
            # a path is yielded its interior stays marked in ``used``.
            stack = [s]

            def rec():
                x = stack[-1]
                for y in adj[x]:
                    if y == target:
                        yield stack + [target]
                    elif not used[y] and y not in bset:
                        used[y] = True
                        stack.append(y)
                        yield from rec()
                        stack.pop()
                        used[y] = False
            yield from rec()

        def solve(idx, lo, hi) -> bool:
            if idx == len(pairs):
                return (not spanning) or all(used)
            i, j = pairs[idx]
            last = idx == len(pairs) - 1
            for p in paths_between(branch[i], branch[j]):
                L = len(p) - 1
                nlo, nhi = min(lo, L), max(hi, L)
                if balanced and nhi - nlo > 2:
                    continue
                if last and spanning and not all(used):
                    continue
                chosen[(i, j)] = p
                if solve(idx + 1, nlo, nhi):
                    return True
                del chosen[(i, j)]
            return False

        if solve(0, n + 1, -1):
            sub = Subdivision(t, list(branch), dict(chosen))
            return True, sub
    return False, None
