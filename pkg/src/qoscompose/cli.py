"""Command-line entry point: compose, gen, verify and bench."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .data import (DocumentError, GeneratorParams, dump_json, encode_qos, generate_dataset, load_json,
                   load_registry, load_request, load_solution, params_document, solution_document)
from .graph import NoSolutionError, build_match_graph, validate_composition
from .model import MatchPolicy
from .prune import PruneReport, optimize_pipeline
from .qos import CRITERIA, algebra_for
from .search import (DEFAULT_TIMEOUT_SECS, Deadline, SearchFailed, TimedOut, global_search,
                     local_search, qos_update)

log = logging.getLogger("qoscompose")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SOLUTION = 2
EXIT_TIMEOUT = 3
EXIT_INVALID = 4


@dataclass
class PipelineResult:
    graph: object
    pruned: object
    prune_report: Optional[PruneReport]
    optimum: float
    local: object = None
    global_: object = None
    best: object = None
    # Seconds from the start of graph generation until each search finished.
    local_seconds: Optional[float] = None
    global_seconds: Optional[float] = None


def run_pipeline(ontology, services, request, criterion, policy: MatchPolicy, timeout: float,
                 strategy: str = "hybrid", prune: bool = True) -> PipelineResult:
    """Build the match graph, prune it, compute the optimum and extract a composition."""
    started = time.monotonic()
    deadline = Deadline(timeout)
    algebra = algebra_for(criterion)
    graph = build_match_graph(ontology, request, services, policy)
    report = None
    pruned = graph
    if prune:
        pruned, report = optimize_pipeline(graph, algebra)
    qos = qos_update(pruned, algebra)
    result = PipelineResult(graph, pruned, report, qos.optimum())
    if strategy == "local":
        result.local = result.best = local_search(pruned, algebra, qos)
        result.local_seconds = time.monotonic() - started
    elif strategy == "global":
        result.global_ = result.best = global_search(pruned, algebra, deadline, qos=qos)
        result.global_seconds = time.monotonic() - started
    elif strategy == "hybrid":
        result.local = local_search(pruned, algebra, qos)
        result.local_seconds = time.monotonic() - started
        result.best = result.local
        if not deadline.expired():
            glob = global_search(pruned, algebra, deadline, incumbent=result.local, qos=qos)
            if glob.completed:
                result.global_ = glob
                result.global_seconds = time.monotonic() - started
                if glob.services < result.local.services:
                    result.best = glob
    else:
        raise ValueError(f"unknown search strategy {strategy!r}")
    return result


def _load_inputs(registry_path, request_path, args):
    ontology, services = load_registry(load_json(registry_path))
    spec = load_request(load_json(request_path), ontology)
    criterion = getattr(args, "criterion", None) or spec.criterion
    policy_name = getattr(args, "match_policy", None) or spec.match_policy
    timeout = getattr(args, "timeout_secs", None) or spec.timeout_secs or DEFAULT_TIMEOUT_SECS
    return ontology, services, spec.request, criterion, MatchPolicy.from_name(policy_name), timeout


def cmd_compose(args) -> int:
    ontology, services, request, criterion, policy, timeout = _load_inputs(args.registry, args.request, args)
    try:
        result = run_pipeline(ontology, services, request, criterion, policy, timeout,
                              strategy=args.search, prune=not args.no_prune)
    except NoSolutionError as exc:
        log.error("no solution: %s", exc)
        return EXIT_NO_SOLUTION
    except SearchFailed as exc:
        log.error("no solution: %s", exc)
        return EXIT_NO_SOLUTION
    except TimedOut as exc:
        log.error("timed out without a solution after expanding %d states", exc.expanded)
        return EXIT_TIMEOUT
    algebra = algebra_for(criterion)
    doc = solution_document(result.best, result.pruned, algebra, result.prune_report,
                            local=result.local, glob=result.global_)
    if args.format == "table":
        rows = [("service", "qos", "members")]
        rows += [(s["id"], str(s["qos"]), ",".join(s["members"])) for s in doc["services"]]
        print(_table(rows))
        print(f"total {criterion}: {doc['totalQos']}  services: {doc['serviceCount']}  method: {doc['method']}")
    else:
        sys.stdout.write(dump_json(doc))
    return EXIT_OK


def cmd_gen(args) -> int:
    params = GeneratorParams(
        seed=args.seed,
        num_services=args.services,
        num_concepts=args.concepts or max(3 * args.services, 20),
        ontology_depth=args.depth,
        inputs_per_service=tuple(args.inputs),
        outputs_per_service=tuple(args.outputs),
        solvable=args.solvable,
        provided=args.provided,
        wanted=args.wanted,
        planted_length=args.planted_length,
    )
    registry, request = generate_dataset(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(registry, out / "registry.json")
    dump_json(request, out / "request.json")
    dump_json(params_document(params), out / "params.json")
    log.info("wrote %d services to %s", len(registry["services"]), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    ontology, services, request, criterion, policy, _ = _load_inputs(args.registry, args.request, args)
    document = load_json(args.solution)
    composition, claimed = load_solution(document)
    criterion = args.criterion or document.get("criterion") or criterion
    algebra = algebra_for(criterion)
    try:
        graph = build_match_graph(ontology, request, services, policy)
    except NoSolutionError as exc:
        print(f"INVALID: {exc}")
        return EXIT_INVALID
    report = validate_composition(graph, composition, algebra)
    if not report.valid:
        for v in report.violations:
            print(f"INVALID: {v}")
        return EXIT_INVALID
    if report.qos != claimed:
        print(f"INVALID: claimed totalQos {encode_qos(claimed)} but recomputed {encode_qos(report.qos)}")
        return EXIT_INVALID
    count = document.get("serviceCount")
    if count is not None and count != report.service_count:
        print(f"INVALID: claimed serviceCount {count} but composition has {report.service_count}")
        return EXIT_INVALID
    optimum = qos_update(graph, algebra).optimum()
    note = "optimal" if report.qos == optimum else f"graph optimum is {encode_qos(optimum)}"
    print(f"VALID: {report.service_count} services, {criterion} {encode_qos(report.qos)} ({note})")
    return EXIT_OK


def _dataset_dirs(root: Path) -> list:
    if (root / "registry.json").exists():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "registry.json").exists())


def bench_row(directory, criterion, timeout, policy_name="exact-plugin") -> dict:
    directory = Path(directory)
    ontology, services = load_registry(load_json(directory / "registry.json"))
    spec = load_request(load_json(directory / "request.json"), ontology)
    row = {"dataset": directory.name, "criterion": criterion, "registryServices": len(services)}
    try:
        result = run_pipeline(ontology, services, spec.request, criterion, MatchPolicy.from_name(policy_name),
                              timeout, strategy="hybrid")
    except NoSolutionError:
        row.update(optimalQos="-", graphServices="-", graphServicesOpt="-", local="-", **{"global": "-"})
        return row
    row["optimalQos"] = encode_qos(result.optimum)
    row["graphServices"] = result.graph.service_count()
    row["graphServicesOpt"] = result.pruned.service_count()
    row["local"] = {"services": result.local.services, "seconds": round(result.local_seconds, 3)}
    if result.global_ is None:
        row["global"] = "-"
    else:
        row["global"] = {"services": result.global_.services, "seconds": round(result.global_seconds, 3)}
    return row


def _table(rows) -> str:
    widths = [max(len(str(r[k])) for r in rows) for k in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def bench_table(rows) -> str:
    def cell(part, key):
        return "-" if part == "-" else str(part[key])
    lines = [("dataset", "criterion", "optimal", "#graph", "#graph(opt)", "local#", "local(s)",
              "global#", "global(s)")]
    for r in rows:
        lines.append((r["dataset"], r["criterion"], str(r["optimalQos"]), str(r["graphServices"]),
                      str(r["graphServicesOpt"]), cell(r["local"], "services"), cell(r["local"], "seconds"),
                      cell(r["global"], "services"), cell(r["global"], "seconds")))
    return _table(lines)


def cmd_bench(args) -> int:
    root = Path(args.datasets)
    dirs = _dataset_dirs(root)
    if not dirs:
        log.error("no datasets (directories holding registry.json) under %s", root)
        return EXIT_ERROR
    criteria = [c.strip() for c in args.criteria.split(",") if c.strip()]
    for c in criteria:
        algebra_for(c)
    jobs = [(d, c, args.timeout_secs, args.match_policy or "exact-plugin") for d in dirs for c in criteria]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(bench_row, *zip(*jobs)))
    else:
        rows = [bench_row(*job) for job in jobs]
    if args.format == "table":
        print(bench_table(rows))
    else:
        sys.stdout.write(dump_json({"rows": rows}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qoscompose", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, timeout_default=None):
        p.add_argument("--criterion", choices=CRITERIA, help="QoS criterion (default: from the request)")
        p.add_argument("--match-policy", choices=["exact-plugin", "paper"],
                       help="exact-plugin, or paper to also accept subsume matches")
        p.add_argument("--timeout-secs", type=float, default=timeout_default,
                       help=f"search budget in seconds (default {DEFAULT_TIMEOUT_SECS:g})")
        p.add_argument("--format", choices=["json", "table"], default="json")

    p = sub.add_parser("compose", help="compose services for a request")
    p.add_argument("registry")
    p.add_argument("request")
    common(p)
    p.add_argument("--no-prune", action="store_true", help="skip the graph reduction passes")
    p.add_argument("--search", choices=["local", "global", "hybrid"], default="hybrid")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("gen", help="generate a random dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--services", type=int, default=1000)
    p.add_argument("--concepts", type=int, default=None, help="default: 3 x services")
    p.add_argument("--depth", type=int, default=4, help="ontology depth")
    p.add_argument("--inputs", type=int, nargs=2, default=(1, 3), metavar=("MIN", "MAX"))
    p.add_argument("--outputs", type=int, nargs=2, default=(1, 3), metavar=("MIN", "MAX"))
    p.add_argument("--provided", type=int, default=3)
    p.add_argument("--wanted", type=int, default=2)
    p.add_argument("--planted-length", type=int, default=4)
    p.add_argument("--solvable", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="re-validate a solution document")
    p.add_argument("registry")
    p.add_argument("request")
    p.add_argument("solution")
    p.add_argument("--criterion", choices=CRITERIA)
    p.add_argument("--match-policy", choices=["exact-plugin", "paper"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run the pipeline over a directory of datasets")
    p.add_argument("datasets")
    p.add_argument("--criteria", default=",".join(CRITERIA))
    p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT_SECS)
    p.add_argument("--match-policy", choices=["exact-plugin", "paper"])
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)])
    try:
        return args.func(args)
    except (OSError, DocumentError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
