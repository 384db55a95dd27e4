"""Command-line interface: ``navgraph <group> <command> [options]``.

Groups:
    caps      cap and intersection volume tables
    data      synthetic datasets, fvecs/bvecs import, query sets, NN histograms
    graph     proximity graph construction and long edges
    search    query-set evaluation on a stored graph
    pipeline  two-space (transform, search, rerank) indexes
    bench     plan sweeps and theory-validation suites

Exit status: 0 on success, 1 when a ``--check`` suite fails, 2 on invalid
input or a library error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from navgraph import __version__, config
from navgraph.bench.curves import emit_curves, write_curves
from navgraph.bench.experiments import (
    expected_greedy_steps,
    llf_ablation,
    long_edge_comparison,
    step_scaling_experiment,
    table2_analog,
)
from navgraph.bench.plans import load_plan
from navgraph.bench.runner import run_plan
from navgraph.core.data import (
    Metric,
    deduplicate,
    generate_uniform,
    nn_distance_histogram,
    plant_queries,
    sample_queries_uniform,
)
from navgraph.core.errors import NavGraphError
from navgraph.core.geometry import VolumeMethod, tabulate_caps
from navgraph.core.graphs import GraphConfig, GraphKind, build_graph, graph_stats
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme, attach, sample_long_edges
from navgraph.core.rerank import TransformKind, TransformSpec, evaluate_rerank, fit_transform
from navgraph.core.search import Algorithm, SearchConfig, evaluate_query_set, results_frame
from navgraph.core.serialization import load_graph, load_transform, save_graph, save_transform
from navgraph.core.vecs_io import (
    VecsFormat,
    load_dataset,
    load_queries,
    load_vectors,
    save_dataset,
    save_queries,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _emit(frame: pd.DataFrame, output: Optional[str]) -> None:
    if output:
        frame.to_csv(output, index=False)
        logger.info("wrote %d rows to %s", len(frame), output)
    else:
        frame.to_csv(sys.stdout, index=False)


def _report_checks(failures: List[str]) -> int:
    for failure in failures:
        print(f"CHECK FAILED: {failure}", file=sys.stderr)
    return EXIT_CHECK_FAILED if failures else EXIT_OK


def _graph_config(args: argparse.Namespace) -> GraphConfig:
    kind = GraphKind(args.kind)
    if kind is GraphKind.KNN:
        return GraphConfig(kind=kind, k=args.k, symmetrize=args.symmetrize)
    return GraphConfig(kind=kind, M=args.M, cap_at_right_angle=args.cap)


def _search_config(args: argparse.Namespace) -> SearchConfig:
    return SearchConfig(algorithm=Algorithm(args.algo), beam_width=args.beam, llf=args.llf,
                        max_steps=args.max_steps, seed=args.seed)


def _pipeline_paths(prefix: str):
    base = Path(prefix)
    return (base.with_name(base.name + "_low.npy"), base.with_name(base.name + ".transform.npz"),
            base.with_name(base.name + ".graph"))


# ============================================================================
# caps
# ============================================================================

def cmd_caps_tabulate(args: argparse.Namespace) -> int:
    method = VolumeMethod(args.method)
    frame = tabulate_caps(args.dims, args.gammas, method, samples=args.samples, seed=args.seed)
    _emit(frame, args.output)
    return EXIT_OK


# ============================================================================
# data
# ============================================================================

def cmd_data_gen(args: argparse.Namespace) -> int:
    ds = generate_uniform(args.n, args.d, args.seed, Metric(args.metric))
    meta = save_dataset(ds, args.out)
    print(f"{meta.id}: n={meta.n} d={meta.d} metric={meta.metric}")
    return EXIT_OK


def cmd_data_import(args: argparse.Namespace) -> int:
    ds = load_vectors(args.input, VecsFormat(args.format), normalize=True,
                      metric=Metric(args.metric), dataset_id=args.id, limit=args.limit)
    if args.dedup:
        ds = deduplicate(ds)
    meta = save_dataset(ds, args.out)
    print(f"{meta.id}: n={meta.n} d={meta.d} metric={meta.metric}")
    return EXIT_OK


def cmd_data_queries(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    if args.radius is not None:
        qs = plant_queries(ds, args.m, args.radius, args.seed)
    else:
        qs = sample_queries_uniform(ds, args.m, args.seed)
    save_queries(qs, args.out)
    print(f"{qs.m} queries for {ds.id} written to {args.out}")
    return EXIT_OK


def cmd_data_nn_hist(args: argparse.Namespace) -> int:
    hist = nn_distance_histogram(load_dataset(args.dataset), args.bins)
    frame = pd.DataFrame({"low": hist.edges[:-1], "high": hist.edges[1:], "count": hist.counts})
    _emit(frame, args.output)
    return EXIT_OK


# ============================================================================
# graph
# ============================================================================

def cmd_graph_build(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    g = build_graph(ds, _graph_config(args))
    save_graph(g, args.out)
    stats = graph_stats(g, ds, with_components=args.stats)
    print(f"{g.config.label}: mean degree {stats.mean_degree:.2f} (f={stats.expected_f:.2f}), "
          f"{stats.edge_count} edges" + (f", {stats.components} components" if args.stats else ""))
    return EXIT_OK


def cmd_graph_add_long(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    g = load_graph(args.graph, ds)
    count = args.count if args.count is not None else math.ceil(math.log2(ds.n))
    cfg = LongEdgeConfig(scheme=LongEdgeScheme(args.scheme), edges_per_node=count,
                         presample_exponent=args.phi, seed=args.seed,
                         exclude_near=args.exclude_near, use_alias=args.alias)
    g = attach(g, sample_long_edges(ds, cfg))
    save_graph(g, args.out or args.graph)
    print(f"{cfg.label}: {g.long_indices.size} long edges")
    return EXIT_OK


# ============================================================================
# search
# ============================================================================

def cmd_search_run(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    g = load_graph(args.graph, ds)
    qs = load_queries(args.queries)
    agg = evaluate_query_set(g, ds, qs, _search_config(args), c=args.c, threads=args.threads)
    summary = pd.DataFrame([{
        "recall_at_1": agg.recall_at_1,
        "error": agg.error,
        "mean_steps": agg.mean_steps,
        "mean_distance_computations": agg.mean_distance_computations,
        "success_c_r": agg.success_c_r,
        "exhausted": agg.exhausted_count,
        "queries_per_second": agg.queries_per_second,
    }])
    _emit(summary, args.output)
    if args.per_query:
        results_frame(agg.results, qs.ground_truth).to_csv(args.per_query, index=False)
    return EXIT_OK


# ============================================================================
# pipeline
# ============================================================================

def cmd_pipeline_build(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    spec = TransformSpec(kind=TransformKind(args.transform), target_dim=args.dim, seed=args.seed)
    low, transform = fit_transform(ds, spec)
    low_path, transform_path, graph_path = _pipeline_paths(args.out)
    save_dataset(low, low_path)
    save_transform(transform, transform_path)
    save_graph(build_graph(low, _graph_config(args)), graph_path)
    print(f"{spec.label} pipeline for {ds.id} written under {args.out}")
    return EXIT_OK


def cmd_pipeline_search(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    low_path, transform_path, graph_path = _pipeline_paths(args.index)
    low = load_dataset(low_path)
    g = load_graph(graph_path, low)
    transform = load_transform(transform_path)
    qs = load_queries(args.queries)
    cfg = SearchConfig(algorithm=Algorithm.BEAM, beam_width=args.beam, llf=args.llf, seed=args.seed)
    agg = evaluate_rerank(g, low, ds, qs, transform, cfg, threads=args.threads)
    _emit(pd.DataFrame([{
        "beam_width": args.beam,
        "recall_at_1": agg.recall_at_1,
        "low_only_recall_at_1": agg.low_only_recall_at_1,
        "mean_low_distance_computations": agg.mean_low_distance_computations,
        "mean_original_distance_computations": agg.mean_original_distance_computations,
    }]), args.output)
    return EXIT_OK


# ============================================================================
# bench
# ============================================================================

def cmd_bench_run(args: argparse.Namespace) -> int:
    plan = load_plan(args.plan)
    frame = run_plan(plan, output=args.output, threads=args.threads)
    if args.curves:
        write_curves(emit_curves(frame), args.curves)
    failed = int((frame["status"] != "ok").sum())
    print(f"{plan.name}: {len(frame)} cells, {failed} failed")
    return EXIT_OK


def cmd_bench_scaling(args: argparse.Namespace) -> int:
    scheme = None if args.long_scheme is None else LongEdgeScheme(args.long_scheme)
    result = step_scaling_experiment(args.d, args.n, args.M, args.seed, queries=args.queries,
                                     long_scheme=scheme, cap_at_right_angle=args.cap,
                                     threads=args.threads)
    _emit(result.frame, args.output)
    print(f"slope {result.slope:.4f}", file=sys.stderr)
    return _report_checks(result.check(args.low, args.high)) if args.check else EXIT_OK


def cmd_bench_long_edges(args: argparse.Namespace) -> int:
    schemes = [None if s == "none" else LongEdgeScheme(s) for s in args.schemes]
    result = long_edge_comparison(args.d, args.n, schemes, args.seed, args.M,
                                  queries=args.queries, edges_per_node=args.count,
                                  threads=args.threads)
    _emit(result.frame, args.output)
    return _report_checks(result.check()) if args.check else EXIT_OK


def cmd_bench_table2(args: argparse.Namespace) -> int:
    result = table2_analog(args.scale_n, args.seed, dims=args.dims, queries=args.queries,
                           beam_width=args.beam, max_degree=args.max_degree, threads=args.threads)
    _emit(result.frame, args.output)
    if not args.check:
        return EXIT_OK
    failures = result.check(f"beam{args.beam}")
    if 2 in args.dims:
        steps = float(result.row(2, "greedy")["steps"])
        expected = expected_greedy_steps(args.scale_n)
        if not expected / 3.0 <= steps <= expected * 3.0:
            failures.append(f"d=2 greedy steps {steps:.1f} not within 3x of {expected:.1f}")
    return _report_checks(failures)


def cmd_bench_llf(args: argparse.Namespace) -> int:
    scheme = None if args.scheme == "none" else LongEdgeScheme(args.scheme)
    searches = [SearchConfig(algorithm=Algorithm.GREEDY)] + [
        SearchConfig(algorithm=Algorithm.BEAM, beam_width=w) for w in args.beam]
    result = llf_ablation(args.d, args.n, args.M, args.seed, scheme=scheme, searches=searches,
                          queries=args.queries, threads=args.threads)
    _emit(result.frame, args.output)
    return _report_checks(result.check()) if args.check else EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def _add_graph_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kind", choices=[k.value for k in GraphKind], default="knn")
    parser.add_argument("--M", type=float, default=None, help="threshold parameter")
    parser.add_argument("--k", type=int, default=None, help="kNN out-degree")
    parser.add_argument("--symmetrize", action="store_true", help="kNN: add reverse edges")
    parser.add_argument("--cap", action="store_true", help="dense: cap the angle at pi/2")


def _add_search_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algo", choices=[a.value for a in Algorithm], default="greedy")
    parser.add_argument("--beam", type=int, default=1, help="beam width")
    parser.add_argument("--llf", action="store_true", help="evaluate long edges first")
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: NAVGRAPH_THREADS or CPU count)")
    groups = parser.add_subparsers(dest="group", required=True)

    caps = groups.add_parser("caps").add_subparsers(dest="command", required=True)
    p = caps.add_parser("tabulate", help="cap volumes as CSV")
    p.add_argument("--dims", type=int, nargs="+", required=True)
    p.add_argument("--gammas", type=float, nargs="+", required=True)
    p.add_argument("--method", choices=[m.value for m in VolumeMethod], default="quadrature")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_caps_tabulate)

    data = groups.add_parser("data").add_subparsers(dest="command", required=True)
    p = data.add_parser("gen", help="uniform points on the sphere")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True, help="sphere dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="spherical")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data_gen)

    p = data.add_parser("import", help="fvecs/bvecs to a normalized dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=[f.value for f in VecsFormat], required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--id", default=None)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="angular")
    p.add_argument("--dedup", action="store_true", help="drop exact duplicates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data_import)

    p = data.add_parser("queries", help="planted (with --radius) or uniform queries")
    p.add_argument("--dataset", required=True)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data_queries)

    p = data.add_parser("nn-hist", help="nearest-neighbor distance histogram")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_data_nn_hist)

    graph = groups.add_parser("graph").add_subparsers(dest="command", required=True)
    p = graph.add_parser("build", help="threshold or kNN graph")
    p.add_argument("--dataset", required=True)
    _add_graph_options(p)
    p.add_argument("--stats", action="store_true", help="also count connected components")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph_build)

    p = graph.add_parser("add-long", help="attach long-range edges")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", choices=[s.value for s in LongEdgeScheme], required=True)
    p.add_argument("--count", type=int, default=None, help="edges per node (default ceil(log2 n))")
    p.add_argument("--phi", type=float, default=0.5, help="pre-sampling exponent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude-near", action="store_true")
    p.add_argument("--alias", action="store_true", help="kl-dist: sample with alias tables")
    p.add_argument("--out", default=None, help="defaults to overwriting --graph")
    p.set_defaults(func=cmd_graph_add_long)

    search = groups.add_parser("search").add_subparsers(dest="command", required=True)
    p = search.add_parser("run", help="evaluate a query set")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    _add_search_options(p)
    p.add_argument("--c", type=float, default=None, help="report the c,R success rate")
    p.add_argument("--per-query", default=None, help="per-query CSV path")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_search_run)

    pipeline = groups.add_parser("pipeline").add_subparsers(dest="command", required=True)
    p = pipeline.add_parser("build", help="fit a transform and index the image")
    p.add_argument("--dataset", required=True)
    p.add_argument("--transform", choices=[t.value for t in TransformKind], default="random-projection")
    p.add_argument("--dim", type=int, required=True, help="target ambient dimension")
    p.add_argument("--seed", type=int, default=0)
    _add_graph_options(p)
    p.add_argument("--out", required=True, help="path prefix of the pipeline files")
    p.set_defaults(func=cmd_pipeline_build)

    p = pipeline.add_parser("search", help="search the image, rerank in the original space")
    p.add_argument("--index", required=True, help="path prefix given to pipeline build")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--llf", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_pipeline_search)

    bench = groups.add_parser("bench").add_subparsers(dest="command", required=True)
    p = bench.add_parser("run", help="run a JSON experiment plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--output", default=None, help="CSV path (default: the plan's output)")
    p.add_argument("--curves", default=None, help="also write (error, cost) curves here")
    p.set_defaults(func=cmd_bench_run)

    p = bench.add_parser("scaling", help="greedy steps against n")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, nargs="+", default=[1000, 4000, 16000, 64000])
    p.add_argument("--M", type=float, default=6.0)
    p.add_argument("--long-scheme", choices=[s.value for s in LongEdgeScheme], default=None)
    p.add_argument("--cap", action="store_true")
    p.add_argument("--low", type=float, default=0.35)
    p.add_argument("--high", type=float, default=0.65)
    _add_bench_common(p)
    p.set_defaults(func=cmd_bench_scaling)

    p = bench.add_parser("long-edges", help="long-edge schemes at an equal edge budget")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=64000)
    p.add_argument("--M", type=float, default=6.0)
    p.add_argument("--schemes", nargs="+", default=["none", "uniform", "kl-dist", "kl-rank",
                                                    "kl-rank-presampled"])
    p.add_argument("--count", type=int, default=None)
    _add_bench_common(p)
    p.set_defaults(func=cmd_bench_long_edges)

    p = bench.add_parser("table2", help="minimal kNN degree for greedy and beam search")
    p.add_argument("--scale-n", type=int, default=100_000)
    p.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--beam", type=int, default=100)
    p.add_argument("--max-degree", type=int, default=512)
    _add_bench_common(p, queries=1000)
    p.set_defaults(func=cmd_bench_table2)

    p = bench.add_parser("llf", help="distance computations with and without llf")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=64000)
    p.add_argument("--M", type=float, default=6.0)
    p.add_argument("--scheme", default="kl-rank",
                   choices=["none"] + [s.value for s in LongEdgeScheme])
    p.add_argument("--beam", type=int, nargs="*", default=[])
    _add_bench_common(p)
    p.set_defaults(func=cmd_bench_llf)
    return parser


def _add_bench_common(parser: argparse.ArgumentParser, queries: int = 500) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--queries", type=int, default=queries)
    parser.add_argument("--check", action="store_true", help="exit 1 if an expectation fails")
    parser.add_argument("--output", default=None)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    previous = os.environ.get(config.THREADS_ENV_VAR)
    try:
        if args.threads is not None:
            os.environ[config.THREADS_ENV_VAR] = str(config.resolve_thread_count(args.threads))
        return args.func(args)
    except (NavGraphError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        # graph builders read the thread count from the environment
        if previous is None:
            os.environ.pop(config.THREADS_ENV_VAR, None)
        else:
            os.environ[config.THREADS_ENV_VAR] = previous


if __name__ == "__main__":
    sys.exit(main())
