"""Command-line interface and the batch experiment harness."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import functools
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import graph as gmod
from .errors import SpansubError
from .extend import ExtendableState
from .graph import Graph, read_edge_list, write_edge_list
from .params import DeskScaleParams, as_fraction, parse_key_values
from .pipelines import (CSV_COLUMNS, PIPELINES, TrialReport, pipeline_balanced, pipeline_joined,
                        pipeline_perturbed, pipeline_unbalanced)
from .routing import SortingRouter, check_path_factor, embed_router, route
from .spectra import spectral_joinedness_m, spectral_profile
from .verify import MODES, Subdivision, oracle_exists, verify

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_SOME = 0, 1, 2, 3
GRAPH_SALT = 7


class UsageError(Exception):
    """Bad flags, unreadable files or an invalid config; exit code 1."""


# graph families ----------------------------------------------------------------
FAMILIES: dict[str, Callable[..., Graph]] = {
    "complete": lambda n, **_: gmod.complete_graph(n),
    "cycle": lambda n, **_: gmod.cycle_graph(n),
    "path": lambda n, **_: gmod.path_graph(n),
    "petersen": lambda **_: gmod.petersen_graph(),
    "paley": lambda q, **_: gmod.paley_graph(q),
    "gnp": lambda n, p, seed, **_: gmod.gnp(n, p, seed),
    "random-regular": lambda n, d, seed, **_: gmod.random_regular(n, d, seed),
    "two-cliques": lambda n, **_: gmod.two_cliques(n),
    "perturbed-two-cliques": lambda n, p, seed, **_: gmod.perturbed_two_cliques(n, p, seed),
    "clique-with-isolated": lambda n, m, **_: gmod.clique_with_isolated(n, m),
}
FAMILY_KEYS = ("n", "d", "p", "q", "m")


def make_graph(family: str, seed=None, **values) -> Graph:
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    try:
        return FAMILIES[family](seed=seed, **values)
    except TypeError as exc:
        raise UsageError(f"family {family!r}: missing parameter ({exc})") from None


def _family_values(source: dict) -> dict:
    out = {}
    for key in FAMILY_KEYS:
        value = source.get(key)
        if value is not None:
            out[key] = float(as_fraction(value)) if key == "p" else int(value)
    return out


def _read_graph(path: str) -> Graph:
    try:
        return read_edge_list(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read graph {path}: {exc}") from None


def _read_params(path: str | None) -> DeskScaleParams:
    if path is None:
        return DeskScaleParams()
    try:
        return DeskScaleParams.from_text(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read params {path}: {exc}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# experiment harness -------------------------------------------------------------
def parse_int_range(text: str) -> list[int]:
    """``"3"``, ``"3,4,5"`` or ``"0-29"`` (inclusive), and mixes such as ``"2,5-7"``."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            out.append(int(part))
    return out


@dataclass
class ExperimentConfig:
    pipeline: str
    family: str
    family_values: dict
    t_values: list[int]
    seeds: list[int]
    params: DeskScaleParams = field(default_factory=DeskScaleParams)
    sprinkle: float = 0.0
    graph_seed: int | None = None
    workers: int = 1
    timing: bool = False
    out: str | None = None

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        values = dict(values)
        try:
            pipeline = values.pop("pipeline")
            family = values.pop("family")
            t_values = parse_int_range(values.pop("t"))
            seeds = parse_int_range(values.pop("seeds"))
        except KeyError as exc:
            raise UsageError(f"config is missing {exc.args[0]!r}") from None
        except ValueError as exc:
            raise UsageError(f"config: {exc}") from None
        fam = {k: values.pop(k) for k in FAMILY_KEYS if k in values}
        try:
            cfg = cls(
                pipeline=pipeline, family=family, family_values=_family_values(fam),
                t_values=t_values, seeds=seeds,
                sprinkle=float(as_fraction(values.pop("sprinkle", "0"))),
                graph_seed=int(values["graph_seed"]) if values.get("graph_seed", "trial") != "trial" else None,
                workers=int(values.pop("workers", "1")),
                timing=str(values.pop("timing", "false")).lower() in ("1", "true", "yes", "on"),
                out=values.pop("out", None),
            )
            values.pop("graph_seed", None)
            cfg.params = DeskScaleParams.from_mapping(values)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"config: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_mapping(parse_key_values(text))
        except ValueError as exc:
            raise UsageError(f"config: {exc}") from None

    def validate(self) -> None:
        if self.pipeline not in PIPELINES:
            raise UsageError(f"pipeline must be one of {PIPELINES}")
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}")
        if not self.seeds:
            raise UsageError("seed range is empty")
        if not self.t_values:
            raise UsageError("t range is empty")
        if self.workers < 1:
            raise UsageError("workers must be positive")
        if not 0 <= self.sprinkle <= 1:
            raise UsageError("sprinkle must lie in [0, 1]")
        # The hard preconditions that depend only on t and the family parameters.
        d = self.family_values.get("d")
        for t in self.t_values:
            if t < 2:
                raise UsageError(f"t = {t} is below 2")
            if self.pipeline in ("unbalanced", "balanced") and d is not None and t > self.params.c * d:
                raise UsageError(f"t = {t} exceeds c·d = {float(self.params.c * d):g}")
            if self.pipeline == "balanced" and t * (t - 1) // 2 > self.params.router_width:
                raise UsageError(f"C({t},2) exceeds router_width = {self.params.router_width}")

    def graph_for(self, seed: int) -> Graph:
        """The trial's host graph: fresh per seed, or one shared graph when ``graph_seed`` is set."""
        gseed = self.graph_seed if self.graph_seed is not None else seed
        return _graph(self.family, tuple(sorted(self.family_values.items())), int(gseed),
                      int(self.params.rng_seed))


@functools.lru_cache(maxsize=2)
def _graph(family: str, values: tuple, gseed: int, rng_seed: int) -> Graph:
    ss = np.random.SeedSequence([rng_seed, gseed, GRAPH_SALT])
    return make_graph(family, seed=ss, **dict(values))


def run_pipeline(name: str, g: Graph, t: int, params: DeskScaleParams, seed: int, sprinkle: float = 0.0):
    if name == "unbalanced":
        return pipeline_unbalanced(g, t, params, seed)
    if name == "balanced":
        return pipeline_balanced(g, t, params, seed)
    if name == "joined":
        return pipeline_joined(g, t, params, seed)
    if name == "perturbed":
        return pipeline_perturbed(g, sprinkle, t, params, seed)
    raise UsageError(f"pipeline must be one of {PIPELINES}")


def _trial(cfg: ExperimentConfig, t: int, seed: int) -> TrialReport:
    g = cfg.graph_for(seed)
    return run_pipeline(cfg.pipeline, g, t, cfg.params, seed, cfg.sprinkle).report


def _trial_star(args) -> TrialReport:
    return _trial(*args)


def summary_row(pipeline: str, t: int, reports: Sequence[TrialReport], timing: bool) -> list[str]:
    """``outcome`` is ``summary``, ``stage`` is ``successes/trials``, ``balance`` the worst success."""
    wins = [r for r in reports if r.success]
    balances = [r.balance for r in wins if r.balance is not None]
    n = reports[0].n if reports else 0
    return [pipeline, str(n), str(t), "all", "summary", f"{len(wins)}/{len(reports)}",
            str(max(balances)) if balances else "", "",
            str(sum(r.millis for r in reports)) if timing else ""]


def run_experiment(cfg: ExperimentConfig) -> tuple[str, list[TrialReport]]:
    """CSV text (header, one row per ``(t, seed)``, one summary row per ``t``) and the reports.

    Trials are independent functions of ``(config, t, seed)``; with several
    workers the results are collected in submission order, so the output does
    not depend on scheduling.
    """
    jobs = [(cfg, t, s) for t in cfg.t_values for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(_trial_star, jobs))
    else:
        reports = [_trial(*job) for job in jobs]
    rows: list[list[str]] = [list(CSV_COLUMNS)]
    for t in cfg.t_values:
        block = [r for (_, tt, _), r in zip(jobs, reports) if tt == t]
        rows.extend(r.row(cfg.timing) for r in block)
        rows.append(summary_row(cfg.pipeline, t, block, cfg.timing))
    return _csv_text(rows), reports


# subcommands ---------------------------------------------------------------------
def cmd_generate(args) -> int:
    values = _family_values(vars(args))
    g = make_graph(args.family, seed=args.seed, **values)
    _write(args.out, gmod.format_edge_list(g))
    return EXIT_OK


def cmd_analyze(args) -> int:
    g = _read_graph(args.graph)
    prof = spectral_profile(g)
    m = spectral_joinedness_m(prof) if prof.regular else None
    rows = [["n", "d", "lambda", "residual", "spectral_m"],
            [str(prof.n), "" if prof.d is None else str(prof.d), f"{prof.lam:.10g}",
             f"{prof.residual:.3g}", "" if m is None else str(m)]]
    _write(args.out, _csv_text(rows))
    return EXIT_OK


def cmd_find(args) -> int:
    g = _read_graph(args.graph)
    params = _read_params(args.params)
    if args.pipeline == "perturbed" and args.p is None:
        raise UsageError("--p is required for the perturbed pipeline")
    result = run_pipeline(args.pipeline, g, args.t, params, args.seed, args.p or 0.0)
    rep = result.report
    sys.stderr.write(_csv_text([list(CSV_COLUMNS), rep.row()]))
    if not rep.success:
        sys.stderr.write(f"failed at stage {rep.stage}: {rep.reason}\n")
        return EXIT_FAIL
    if args.graph_out and "graph" in result.details:
        write_edge_list(result.details["graph"], args.graph_out)
    _write(args.out, result.subdivision.to_text())
    return EXIT_OK


def _read_subdivision(path: str) -> Subdivision:
    try:
        return Subdivision.read(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read subdivision {path}: {exc}") from None


def cmd_verify(args) -> int:
    g = _read_graph(args.graph)
    verdict = verify(g, _read_subdivision(args.subdivision), args.mode)
    print(verdict)
    return EXIT_OK if verdict.ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    g = _read_graph(args.graph)
    try:
        found, witness = oracle_exists(g, args.t, args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print("yes" if found else "no")
    if found and args.out:
        witness.write(args.out)
    return EXIT_OK if found else EXIT_FAIL


def _read_permutation(path: str, width: int) -> list[int]:
    try:
        image = [int(x) for x in Path(path).read_text().split()]
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read permutation {path}: {exc}") from None
    if sorted(image) != list(range(width)):
        raise UsageError(f"permutation must be an arrangement of 0..{width - 1}")
    return image


def cmd_route(args) -> int:
    if args.build:
        if args.graph is None or args.width is None:
            raise UsageError("--build needs --graph and --width")
        g = _read_graph(args.graph)
        if not 0 < args.width <= g.n:
            raise UsageError("router width must lie in 1..n")
        rng = np.random.default_rng(args.seed)
        t_in = [int(v) for v in rng.permutation(g.n)[:args.width]]
        router = embed_router(ExtendableState(g, 3, 1), t_in, rng=rng)
        _write(args.router, router.to_json())
        return EXIT_OK
    try:
        router = SortingRouter.from_json(Path(args.router).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read router {args.router}: {exc}") from None
    image = _read_permutation(args.permutation, router.width)
    sigma = {router.terminals_in[i]: router.terminals_out[image[i]] for i in range(router.width)}
    paths = route(router, sigma)
    if args.graph is not None:
        check_path_factor(_read_graph(args.graph), router, sigma, paths)
    lines = [f"{i} {image[i]}: " + " ".join(map(str, paths[v])) for i, v in enumerate(router.terminals_in)]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    cfg = ExperimentConfig.from_text(text)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
        cfg.validate()
    if args.out is not None:
        cfg.out = args.out
    csv_text, reports = run_experiment(cfg)
    _write(cfg.out, csv_text)
    return EXIT_OK if all(r.success for r in reports) else EXIT_SOME


def cmd_print_defaults(args) -> int:
    sys.stdout.write(DeskScaleParams().to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spansub", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a graph from a named family as an edge list")
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    for key, kind in (("n", int), ("d", int), ("q", int), ("m", int), ("p", str)):
        p.add_argument(f"--{key}", type=kind)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="spectral profile of a graph as one CSV row")
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("find-subdivision", help="run one pipeline trial")
    p.add_argument("--pipeline", required=True, choices=PIPELINES)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params")
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.add_argument("--p", type=lambda s: float(as_fraction(s)), help="sprinkle probability (perturbed)")
    p.add_argument("--graph-out", help="write the perturbed graph actually searched")
    p.set_defaults(func=cmd_find)

    p = sub.add_parser("verify", help="check a subdivision against a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--subdivision", required=True)
    p.add_argument("--mode", choices=MODES, default="spanning")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="exhaustive existence check for small graphs")
    p.add_argument("--graph", required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--mode", choices=MODES, default="spanning")
    p.add_argument("--out", help="write the witness subdivision")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("route", help="route a permutation through a router, or build one")
    p.add_argument("--router", required=True, help="router JSON (read, or written with --build)")
    p.add_argument("--permutation")
    p.add_argument("--out")
    p.add_argument("--graph", help="host graph (required with --build; enables a path-factor check)")
    p.add_argument("--build", action="store_true")
    p.add_argument("--width", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("experiment", help="batch trials from a key = value config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("print-defaults", help="print the default parameters")
    p.set_defaults(func=cmd_print_defaults)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "route" and not args.build and args.permutation is None:
            raise UsageError("--permutation is required unless --build is given")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SpansubError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
