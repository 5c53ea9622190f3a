"""Batch driver and benchmark harness mirroring the HTTP service.

Subcommands: simulate, discover, rca, effect, bench, report, serve.
Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness is
surfaced as --seed flags with fixed defaults, and outputs are byte-
deterministic given identical arguments and seeds (the wall_ms column of
bench metrics is the one run-dependent field).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import sim
from .data import load_csv
from .discovery import DiscoveryParams, direct_lingam, ges, notears_linear, pc
from .effects import backdoor_set, estimate_ate_linear
from .errors import CausalabError
from .graphs import (
    CausalGraph,
    Knowledge,
    deserialize,
    serialize,
    shd,
    to_cpdag,
    validate_dag,
)
from .rca import (
    anomaly_scores,
    fit_linear_scm,
    rank_metrics,
    rca_cholesky,
    rca_counterfactual,
    rca_traversal,
)
from .workflow.session import SessionStore, dumps_canonical
from .workflow.report import generate_report

DEFAULT_SEED = 0

METRICS_COLUMNS = [
    "case",
    "method",
    "k",
    "precision",
    "recall",
    "f1",
    "accuracy_top1",
    "ndcg",
    "mrr",
    "map",
    "wall_ms",
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causalab", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("simulate", help="emit a benchmark bundle directory")
    s.add_argument("--model", choices=["er", "sf", "erdos-renyi", "scale-free"], default="er")
    s.add_argument("--d", type=int, default=6)
    s.add_argument("--expected-degree", type=float, default=2.0)
    s.add_argument("--attachment-m", type=int, default=1)
    s.add_argument("--mechanism", choices=["linear", "nonlinear"], default="linear")
    s.add_argument("--noise", choices=["gaussian", "gumbel", "uniform"], default="gaussian")
    s.add_argument("--noise-scale", type=float, default=1.0)
    s.add_argument("--n", type=int, default=5000, help="normal sample size")
    s.add_argument("--anomalies", type=int, default=10)
    s.add_argument("--mode", choices=["soft", "hard"], default="soft")
    s.add_argument("--targets", choices=["single", "multiple"], default="single")
    s.add_argument("--k", type=int, default=1, help="targets per row for multiple")
    s.add_argument("--magnitude", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", required=True)

    d = sub.add_parser("discover", help="learn a causal graph from CSV data")
    d.add_argument("--algo", choices=["pc", "ges", "notears", "direct_lingam"], required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--truth", help="ground-truth graph JSON for SHD reporting")
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--max-cond-set", type=int, default=None)
    d.add_argument("--lambda1", type=float, default=0.1)
    d.add_argument("--w-threshold", type=float, default=0.3)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d.add_argument("--forbid", action="append", default=[], metavar="A->B")
    d.add_argument("--require", action="append", default=[], metavar="A->B")
    d.add_argument("--out", help="write the graph JSON here")

    r = sub.add_parser("rca", help="rank root causes for an anomalous sample")
    r.add_argument("--method", choices=["traversal", "counterfactual", "cholesky"], required=True)
    r.add_argument("--bundle", help="benchmark bundle directory")
    r.add_argument("--normal", help="normal-data CSV (without --bundle)")
    r.add_argument("--anomalies", help="anomalous-data CSV (without --bundle)")
    r.add_argument("--graph", help="graph JSON for graph-required methods")
    r.add_argument("--sample-index", type=int, default=0)
    r.add_argument("--target", help="anomalous node; defaults to the highest-scoring one")
    r.add_argument("--tau", type=float, default=3.0)
    r.add_argument("--k", type=int, default=3)
    r.add_argument("--search", choices=["exhaustive", "greedy"], default="exhaustive")
    r.add_argument("--m", type=int, default=1000)
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.add_argument("--out", help="write ranked causes JSON here")

    e = sub.add_parser("effect", help="estimate a linear average treatment effect")
    e.add_argument("--data", required=True)
    e.add_argument("--t", required=True)
    e.add_argument("--y", required=True)
    e.add_argument("--graph", help="graph JSON; adjustment = parents of t")
    e.add_argument("--adjust", help="comma-separated adjustment columns (overrides --graph)")
    e.add_argument("--out", help="write the estimate JSON here")

    b = sub.add_parser("bench", help="run RCA methods over benchmark bundles")
    b.add_argument("--cases", required=True, help="directory of bundle subdirectories")
    b.add_argument("--methods", required=True, help="comma-separated method list")
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--tau", type=float, default=3.0)
    b.add_argument("--search", choices=["exhaustive", "greedy"], default="exhaustive")
    b.add_argument("--m", type=int, default=1000)
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.add_argument("--out", required=True, help="metrics CSV path")

    rep = sub.add_parser("report", help="render the Markdown report of a stored session")
    rep.add_argument("--data-dir", required=True)
    rep.add_argument("--session", required=True, help="session id")
    rep.add_argument("--out", help="write the report here (default: stdout)")

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--data-dir", required=True)
    srv.add_argument("--tokens", required=True, help="tokens JSON file")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8321)
    return p


def _parse_pairs(items: list[str]) -> frozenset[tuple[str, str]]:
    pairs = set()
    for item in items:
        left, sep, right = item.partition("->")
        if not sep or not left.strip() or not right.strip():
            raise CausalabError(f"expected A->B, got {item!r}")
        pairs.add((left.strip(), right.strip()))
    return frozenset(pairs)


def _cmd_simulate(args) -> int:
    model = {"er": "erdos-renyi", "sf": "scale-free"}.get(args.model, args.model)
    gspec = sim.GraphSpec(
        model=model,
        d=args.d,
        expected_degree=args.expected_degree,
        attachment_m=args.attachment_m,
        seed=args.seed,
    )
    mspec = sim.MechanismSpec(
        form=args.mechanism, noise=args.noise, noise_scale=args.noise_scale
    )
    ispec = sim.InterventionSpec(
        mode=args.mode,
        targets=args.targets,
        k=args.k,
        magnitude=args.magnitude,
        n_anomalies=args.anomalies,
        seed=args.seed,
    )
    case = sim.make_benchmark(gspec, mspec, ispec, n_normal=args.n)
    sim.write_bundle(case, args.out)
    print(f"bundle written to {args.out}")
    return 0


def _discovery_level(algo: str) -> str:
    return "cpdag" if algo in ("pc", "ges") else "dag"


def _cmd_discover(args) -> int:
    ds = load_csv(Path(args.data).read_bytes())
    params = DiscoveryParams(
        alpha=args.alpha,
        max_cond_set=args.max_cond_set,
        lambda1=args.lambda1,
        w_threshold=args.w_threshold,
        seed=args.seed,
    )
    knowledge = Knowledge(_parse_pairs(args.forbid), _parse_pairs(args.require))
    if args.algo == "pc":
        g: CausalGraph = pc(ds, params, knowledge)
    elif args.algo == "ges":
        g = ges(ds, params, knowledge)
    elif args.algo == "notears":
        g = notears_linear(ds, params).graph
    else:
        g = direct_lingam(ds, params).graph
    text = serialize(g, "json")
    if args.out:
        Path(args.out).write_text(text)
    if args.truth:
        truth = validate_dag(deserialize(Path(args.truth).read_text()))
        reference = to_cpdag(truth) if _discovery_level(args.algo) == "cpdag" else truth
        s, norm = shd(g, reference)
        print(f"shd={s} normalized={norm:.6f}")
    else:
        print(f"edges={len(g.edges)}")
    return 0


def _auto_target(normal, sample_row) -> str:
    scores = anomaly_scores(normal, sample_row)
    return max(sorted(scores.scores), key=lambda v: scores.scores[v])


def _rank_one(method, normal, sample_row, graph, args):
    if method == "cholesky":
        return rca_cholesky(
            normal, sample_row, {"search": args.search, "seed": args.seed}
        )
    if graph is None:
        raise CausalabError(f"{method} requires a graph (--graph or bundle truth)")
    dag = validate_dag(graph)
    target = args.target or _auto_target(normal, sample_row)
    if method == "traversal":
        scores = anomaly_scores(normal, sample_row)
        return rca_traversal(dag, scores, target, args.tau)
    fit = fit_linear_scm(dag, normal)
    return rca_counterfactual(fit, sample_row, target, m=args.m, seed=args.seed)


def _cmd_rca(args) -> int:
    labels = None
    graph = None
    if args.bundle:
        case = sim.read_bundle(args.bundle)
        normal, anomalies = case.normal_data, case.anomalous_data
        labels = case.labels
        graph = CausalGraph(case.scm.dag.nodes, case.scm.dag.edges)
    else:
        if not args.normal or not args.anomalies:
            raise CausalabError("provide --bundle or both --normal and --anomalies")
        normal = load_csv(Path(args.normal).read_bytes())
        anomalies = load_csv(Path(args.anomalies).read_bytes())
    if args.graph:
        graph = deserialize(Path(args.graph).read_text())
    if args.sample_index >= anomalies.n:
        raise CausalabError(
            f"sample index {args.sample_index} out of range ({anomalies.n} rows)"
        )
    sample_row = {
        c: float(v)
        for c, v in zip(anomalies.column_names, anomalies.values[args.sample_index])
    }
    ranked = _rank_one(args.method, normal, sample_row, graph, args)
    payload = ranked.to_dict()
    payload["params"]["sample_index"] = args.sample_index
    if args.out:
        Path(args.out).write_text(dumps_canonical(payload))
    for node, score in ranked.ranking:
        print(f"{node} {score:.6g}")
    if labels is not None and args.sample_index in labels:
        m = rank_metrics(ranked, set(labels[args.sample_index]), args.k)
        print(
            f"metrics k={args.k} precision={m.precision:.4f} recall={m.recall:.4f} "
            f"f1={m.f1:.4f} accuracy_top1={m.accuracy_top1:.0f} ndcg={m.ndcg:.4f} "
            f"mrr={m.mrr:.4f} map={m.map:.4f}"
        )
    return 0


def _cmd_effect(args) -> int:
    ds = load_csv(Path(args.data).read_bytes())
    if args.adjust:
        z = {c.strip() for c in args.adjust.split(",") if c.strip()}
    elif args.graph:
        dag = validate_dag(deserialize(Path(args.graph).read_text()))
        z = backdoor_set(dag, args.t, args.y)
    else:
        z = set()
    est = estimate_ate_linear(ds, args.t, args.y, z)
    if args.out:
        Path(args.out).write_text(dumps_canonical(est.to_dict()))
    print(
        f"ate={est.ate:.6g} stderr={est.stderr:.6g} "
        f"ci95=[{est.ci95[0]:.6g}, {est.ci95[1]:.6g}] "
        f"adjustment={sorted(est.adjustment_set)}"
    )
    return 0


def _cmd_bench(args) -> int:
    cases_dir = Path(args.cases)
    case_dirs = sorted(
        p for p in cases_dir.iterdir() if p.is_dir() and (p / "meta.json").exists()
    )
    if not case_dirs:
        raise CausalabError(f"no benchmark bundles under {cases_dir}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("traversal", "counterfactual", "cholesky"):
            raise CausalabError(f"unknown method {m!r}")
    rows = []
    for case_dir in case_dirs:
        case = sim.read_bundle(case_dir)
        graph = CausalGraph(case.scm.dag.nodes, case.scm.dag.edges)
        for method in methods:
            started = time.perf_counter()
            agg = {k: 0.0 for k in ("precision", "recall", "f1", "accuracy_top1", "ndcg", "mrr", "map")}
            count = 0
            for idx in sorted(case.labels):
                sample_row = {
                    c: float(v)
                    for c, v in zip(
                        case.anomalous_data.column_names, case.anomalous_data.values[idx]
                    )
                }
                args.target = None  # per-row auto target
                ranked = _rank_one(method, case.normal_data, sample_row, graph, args)
                m = rank_metrics(ranked, set(case.labels[idx]), args.k)
                for key in agg:
                    agg[key] += getattr(m, key)
                count += 1
            wall_ms = (time.perf_counter() - started) * 1000.0
            row = {
                "case": case_dir.name,
                "method": method,
                "k": args.k,
                **{key: agg[key] / count for key in agg},
                "wall_ms": wall_ms,
            }
            rows.append(row)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: (f"{v:.6f}" if isinstance(v, float) and k != "wall_ms" else v)
                    for k, v in row.items()
                }
            )
    print(f"metrics written to {out} ({len(rows)} rows)")
    return 0


def _cmd_report(args) -> int:
    store = SessionStore(args.data_dir)
    session = store.load(args.session)
    text = generate_report(session)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app, load_tokens

    app = create_app(args.data_dir, tokens=load_tokens(args.tokens))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "discover": _cmd_discover,
    "rca": _cmd_rca,
    "effect": _cmd_effect,
    "bench": _cmd_bench,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _HANDLERS[args.subcommand](args)
    except CausalabError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except FileNotFoundError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
