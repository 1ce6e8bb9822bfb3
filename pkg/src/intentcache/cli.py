"""Command-line entry point: ``intentcache <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any

import yaml

from .config import Config, load_config, profile
from .errors import DataError, SchemaError, StorageError
from .signature import canonical_serialize
from .store import CacheStore

log = logging.getLogger("intentcache")


class CliError(Exception):
    """Reported on stderr with exit status 2."""


# -- helpers --------------------------------------------------------------------


def _config(args: argparse.Namespace) -> Config:
    cfg = load_config(args.config)
    overrides: dict[str, Any] = {}
    if getattr(args, "profile", None):
        cfg.policy = profile(args.profile)
    if getattr(args, "no_derivations", False):
        overrides["derivations_enabled"] = False
    if getattr(args, "threshold", None) is not None:
        overrides["confidence_threshold"] = args.threshold
    if overrides:
        cfg.policy = cfg.policy.with_overrides(**overrides)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "fact_rows", None) is not None:
        cfg.fact_rows = args.fact_rows
    if getattr(args, "schema", None):
        cfg.schema = args.schema
    return cfg


def _env(cfg: Config):
    from .harness.env import build_env

    return build_env(cfg)


def _schema(cfg: Config):
    from .harness.env import resolve_schema

    return resolve_schema(cfg)


def _request(args: argparse.Namespace):
    from .pipeline import Request

    if args.sql is not None:
        return Request.sql(args.sql)
    if args.sql_file is not None:
        return Request.sql(Path(args.sql_file).read_text(encoding="utf-8"))
    if args.nl is not None:
        return Request.nl(args.nl, args.anchor_date)
    raise CliError("give --sql, --sql-file or --nl")


def _write_report(cfg: Config, name: str, doc: Any, out: str | None) -> Path:
    path = Path(out) if out else cfg.path(cfg.report_dir) / f"{name}-{time.strftime('%Y%m%d-%H%M%S')}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _add_request_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sql", help="SQL text")
    g.add_argument("--sql-file", help="file holding one SQL query")
    g.add_argument("--nl", help="natural-language question")
    p.add_argument("--anchor-date", help="ISO date that relative time in --nl resolves against")


# -- subcommands --------------------------------------------------------------------


def cmd_canonicalize(args: argparse.Namespace) -> int:
    from .harness.env import make_nl_client
    from .nl.canonicalizer import NlCanonicalizer
    from .pipeline import Pipeline

    cfg = _config(args)
    schema = _schema(cfg)
    req = _request(args)
    nl = NlCanonicalizer(schema, make_nl_client(cfg)) if req.kind == "NL" else None
    # canonicalization needs the schema only; no data, no backend
    trace = Pipeline(schema, None, CacheStore(), cfg.policy, nl).explain(req)
    if "key" not in trace:
        reason = trace.get("reason", {})
        print(f"bypass: {reason.get('code')}: {reason.get('detail')}")
        return 1
    print(yaml.safe_dump(trace["signature"], sort_keys=False).rstrip())
    print(f"serialization: {trace['serialization']}")
    print(f"key: {trace['key']}")
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _config(args)
    env = _env(cfg)
    store = env.store(persistent=True)
    trace = env.pipeline(store).explain(_request(args))
    print(json.dumps(trace, indent=2, sort_keys=True, default=str))
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    env = _env(cfg)
    store = env.store(persistent=True)
    pipe = env.pipeline(store, nl=env.canonicalizer(persistent_memo=True))
    resp = pipe.handle(_request(args))
    prov = resp.provenance
    line = f"{prov.kind}"
    if prov.reason is not None:
        line += f" ({prov.reason})"
    if prov.cross_surface:
        line += f" [populated by {prov.origin}]"
    if prov.derivation:
        line += f" [{prov.derivation['kind']} from {prov.source_key[:12]}]"
    print(line)
    if resp.key:
        print(f"key: {resp.key}")
    if resp.result is not None:
        print(resp.result.pretty(args.max_rows))
    print(f"total {resp.timings.get('total', 0.0):.2f} ms")
    store.close()
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from .harness.baselines import METHODS
    from .harness.experiments import run_bench
    from .harness.workload import Workload

    cfg = _config(args)
    env = _env(cfg)
    methods = METHODS if args.method == "all" else tuple(m.strip() for m in args.method.split(","))
    workload = Workload.load(args.workload) if args.workload else None
    report = run_bench(
        env,
        ordering=args.ordering,
        methods=methods,
        capacity=args.capacity,
        policy=cfg.policy,
        workload=workload,
        repetitions=args.repetitions,
    )
    print(report.table())
    path = report.save(args.out or cfg.path(cfg.report_dir) / f"bench-{args.ordering}-{cfg.seed}.json", timings=not args.no_timings)
    print(f"report: {path}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from .harness.experiments import CAPACITIES, run_capacity_sweep

    cfg = _config(args)
    env = _env(cfg)
    orderings = [o.strip() for o in args.ordering.split(",")] if args.ordering != "all" else ["sequential", "random", "interleaved", "zipf"]
    caps = [int(c) for c in args.capacity.split(",")] if args.capacity else list(CAPACITIES)
    sweep = run_capacity_sweep(env, orderings, caps, repetitions=args.repetitions)
    print(sweep.table())
    print(f"report: {_write_report(cfg, 'sweep', sweep.as_dict(), args.out)}")
    return 0


def cmd_derive_bench(args: argparse.Namespace) -> int:
    from dataclasses import asdict

    from .harness.experiments import ADDITIVE, AVERAGES, run_derivation_experiment

    cfg = _config(args)
    env = _env(cfg)
    rep = run_derivation_experiment(env, AVERAGES if args.measures == "avg" else ADDITIVE)
    print(f"requests            {rep.requests}")
    print(f"exact-only hit %    {rep.exact_only_hit_rate:.1f}")
    print(f"with derivations %  {rep.with_derivations_hit_rate:.1f}  ({rep.derived_hits} derived)")
    print(f"oracle checks       {rep.oracle_checked}, false hits {rep.false_hits}")
    print(f"report: {_write_report(cfg, 'derive', {**asdict(rep), 'uplift': rep.uplift}, args.out)}")
    return 0 if rep.false_hits == 0 else 1


def cmd_gating(args: argparse.Namespace) -> int:
    from .harness.experiments import label_corpus, gating_table, profile_table

    cfg = _config(args)
    env = _env(cfg)
    labeled = label_corpus(env)
    rows = gating_table(labeled)
    print(f"{'threshold':>9} {'coverage %':>10} {'precision %':>11} {'wrong':>5}")
    for r in rows:
        print(f"{r['threshold']:9.1f} {r['coverage']:10.1f} {r['precision']:11.1f} {r['wrong']:5d}")
    profiles = profile_table(env)
    print()
    print(f"{'profile':<13} {'correct':>7} {'wrong':>5} {'bypassed':>8}")
    for name, c in profiles.items():
        print(f"{name:<13} {c['correct']:7d} {c['wrong']:5d} {c['bypassed']:8d}")
    print(f"report: {_write_report(cfg, 'gating', {'thresholds': rows, 'profiles': profiles}, args.out)}")
    return 0


def cmd_cache(args: argparse.Namespace) -> int:
    cfg = _config(args)
    root = cfg.path(cfg.cache_dir)
    with CacheStore(root, schema_version=_schema(cfg).schema_version, result_format=cfg.result_format) as store:
        if args.action == "stats":
            for k, v in store.stats().items():
                print(f"{k:<13} {v}")
        elif args.action == "purge":
            print(f"purged {len(store.purge())} entries")
        elif args.action == "invalidate":
            if not args.snapshot:
                raise CliError("cache invalidate needs a snapshot file")
            gone = store.invalidate(args.snapshot)
            print(f"invalidated {len(gone)} entries")
            for k in gone:
                print(f"  {k}")
        elif args.action == "list":
            for e in store.entries():
                print(f"{e.key[:16]}  {e.origin:<3} rows={e.n_rows:<6} {canonical_serialize(e.signature)}")
    return 0


def cmd_gen_workload(args: argparse.Namespace) -> int:
    from .harness.workload import build_workload

    cfg = _config(args)
    env = _env(cfg)
    wl = build_workload(
        env.intents,
        env.schema,
        env.paraphrases,
        ordering=args.ordering,
        seed=cfg.seed,
        n_variants=cfg.variants,
        repetitions=args.repetitions or cfg.repetitions,
        backend=env.reference,
    )
    wl.save(args.out)
    print(f"wrote {len(wl)} requests ({args.ordering}, seed {cfg.seed}) to {args.out}")
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    from .executor.star import write_star_data

    cfg = _config(args)
    env = _env(cfg)
    write_star_data(env.data, args.out)
    print(f"wrote {', '.join(sorted(env.data.tables))} to {args.out} (snapshot {env.data.fingerprint()})")
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (default: packaged defaults)")
    common.add_argument("--seed", type=int, help="override harness.seed")
    common.add_argument("--profile", choices=["conservative", "balanced", "aggressive"])
    common.add_argument("--no-derivations", action="store_true", help="disable roll-up and filter-down")
    common.add_argument("--schema", help="schema YAML, or a packaged name: retail, fig2")
    common.add_argument("--fact-rows", type=int, help="override harness.fact_rows for generated data")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="intentcache", description="Semantic result cache for star-schema OLAP.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("canonicalize", parents=[common], help="print a request's signature and key")
    _add_request_args(s)
    s.set_defaults(func=cmd_canonicalize)

    s = sub.add_parser("explain", parents=[common], help="trace lookup and derivation decisions without executing")
    _add_request_args(s)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("run", parents=[common], help="serve one request through the persistent cache")
    _add_request_args(s)
    s.add_argument("--max-rows", type=int, default=20)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", parents=[common], help="compare cache methods on a workload")
    s.add_argument("--method", default="all", help="all, or comma-separated TextCache,ASTCache,NlToSqlAst,SigCache")
    s.add_argument("--ordering", default="sequential", choices=["sequential", "random", "interleaved", "zipf"])
    s.add_argument("--capacity", type=int, help="entry budget per method (default unbounded)")
    s.add_argument("--repetitions", type=int)
    s.add_argument("--workload", help="JSONL workload from gen-workload (overrides --ordering)")
    s.add_argument("--no-timings", action="store_true", help="omit latencies so reports compare byte for byte")
    s.add_argument("--out", help="report path")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", parents=[common], help="SigCache hit rate against LRU capacity")
    s.add_argument("--ordering", default="all", help="all, or comma-separated orderings")
    s.add_argument("--capacity", help="comma-separated percentages of distinct keys (default 10,25,50,75,100)")
    s.add_argument("--repetitions", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("derive-bench", parents=[common], help="drill workload with and without derivations")
    s.add_argument("--measures", choices=["additive", "avg"], default="additive")
    s.add_argument("--out")
    s.set_defaults(func=cmd_derive_bench)

    s = sub.add_parser("gating", parents=[common], help="threshold and profile tables on the labeled NL corpus")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gating)

    s = sub.add_parser("cache", parents=[common], help="inspect or maintain the persistent cache")
    s.add_argument("action", choices=["stats", "purge", "invalidate", "list"])
    s.add_argument("snapshot", nargs="?", help="snapshot descriptor JSON (invalidate)")
    s.set_defaults(func=cmd_cache)

    s = sub.add_parser("gen-workload", parents=[common], help="write a workload as JSONL")
    s.add_argument("--ordering", default="sequential", choices=["sequential", "random", "interleaved", "zipf"])
    s.add_argument("--repetitions", type=int)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_gen_workload)

    s = sub.add_parser("gen-data", parents=[common], help="write the synthetic data set as CSV")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_gen_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, SchemaError, DataError, StorageError, FileNotFoundError) as exc:
        print(f"intentcache: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
