"""Command-line entry point: ``subsetbart {fit,predict,bench,graph,prior-partitions,coclust}``.

Every output file is a deterministic function of the arguments and input
files; manifests record configuration and input digests but never times or
output locations.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BALANCED, DGP_IDS, IMBALANCED, DgpSpec, run_comparison
from .data import ColumnSpec, Dataset, OutcomeScaling, PredictorSchema, load_dataset, load_schema
from .graph import STRATEGIES, Network, connected_components, laplacian, load_network, spanning_tree_count
from .prior import PriorConfig, co_clustering_matrix, prior_partitions
from .sampler import ChainConfig, predict, run_chain


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_networks(specs: list[str] | None, schema: PredictorSchema | None) -> tuple[dict[str, Network], dict]:
    """``ID=PATH`` or ``PATH`` (id = file stem); vertex order follows the schema when it names the id."""
    levels_for = {}
    if schema is not None:
        levels_for = {c.network: c.levels for c in schema.categorical if c.network}
    nets, meta = {}, {}
    for spec in specs or []:
        key, sep, path = spec.partition("=")
        if not sep:
            key, path = Path(spec).stem, spec
        nets[key] = load_network(path, levels_for.get(key))
        meta[key] = {"path": path, "sha256": _digest(path)}
    return nets, meta


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prior_json(prior: PriorConfig) -> dict:
    d = asdict(prior)
    if not isinstance(d["split_strategy"], str):
        d["split_strategy"] = dict(d["split_strategy"])
    return d


# ---------------------------------------------------------------------------
# fit / predict


def cmd_fit(args) -> int:
    schema = load_schema(args.schema)
    ds = load_dataset(args.data, schema)
    networks, net_meta = _parse_networks(args.network, schema)
    prior = PriorConfig(n_trees=args.trees, split_strategy=args.strategy, alpha=args.alpha, beta=args.beta)
    chain = ChainConfig(
        n_iterations=args.iters, n_burnin=args.burnin, thin=args.thin, min_leaf_size=args.min_leaf,
        seed=args.seed, probit=args.probit, keep_trees=not args.no_trees,
    )
    samples = run_chain(ds, chain, prior, networks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "sigma", "mean_leaves"] + [f"fit_{i}" for i in range(ds.n)])
        for d in range(samples.n_draws):
            w.writerow(
                [d, repr(float(samples.sigma[d])), repr(float(samples.leaf_counts[d].mean()))]
                + [repr(float(v)) for v in samples.train_fits[d]]
            )
    if samples.trees is not None:
        with open(out / "trees.ndjson", "w", encoding="utf-8") as fh:
            for d, ensemble in enumerate(samples.trees):
                fh.write(json.dumps({"draw": d, "trees": ensemble}, separators=(",", ":")) + "\n")
    manifest = {
        "command": "fit",
        "version": __version__,
        "data": {"path": args.data, "sha256": _digest(args.data), "n": ds.n},
        "schema": schema.to_json(),
        "networks": net_meta,
        "chain": asdict(chain),
        "prior": _prior_json(prior.resolved(chain.probit)),
        "scaling": asdict(samples.scaling),
        "probit": chain.probit,
        "continuous_ranges": {
            "min": [float(v) for v in ds.cont_min],
            "max": [float(v) for v in ds.cont_max],
            "degenerate": [bool(v) for v in ds.degenerate],
        },
        "move_stats": samples.move_stats,
        "n_draws": samples.n_draws,
    }
    _write_json(out / "manifest.json", manifest)
    return 0


def cmd_predict(args) -> int:
    tree_path = Path(args.trees)
    manifest_path = Path(args.manifest) if args.manifest else tree_path.with_name("manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    schema = PredictorSchema.from_json(manifest["schema"])
    rng_meta = manifest["continuous_ranges"]
    reference = Dataset(
        np.zeros((0, schema.p_cont)), np.zeros((0, schema.p_cat), dtype=np.int64), None, schema,
        np.array(rng_meta["min"], dtype=float), np.array(rng_meta["max"], dtype=float),
        np.array(rng_meta["degenerate"], dtype=bool),
    )
    ds = load_dataset(args.data, schema, reference=reference, require_outcome=False)
    with open(tree_path, encoding="utf-8") as fh:
        ensembles = [json.loads(line)["trees"] for line in fh if line.strip()]
    scaling = OutcomeScaling(**manifest["scaling"])
    per_draw, mean = predict(ensembles, ds, scaling=scaling, probit=manifest["probit"])
    lo, hi = np.quantile(per_draw, [0.025, 0.975], axis=0)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "mean", "lower", "upper"])
        for i in range(ds.n):
            w.writerow([i, repr(float(mean[i])), repr(float(lo[i])), repr(float(hi[i]))])
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    spec = DgpSpec(args.dgp, args.n, seed=args.seed, level_probs=IMBALANCED if args.imbalanced else BALANCED)
    chain = ChainConfig(n_iterations=args.iters, n_burnin=args.burnin, seed=args.seed)
    prior = PriorConfig(n_trees=args.trees)
    result = run_comparison(spec, methods, args.reps, args.out, chain=chain, prior=prior, n_test=args.n_test)
    for m, stats in result.summary()["methods"].items():
        print(f"{m}\tmean_rmse={stats['mean_rmse']:.4f}\trelative_mse={stats['mean_relative_mse']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# graph


def cmd_graph_check(args) -> int:
    g = load_network(args.network)
    comps = connected_components(g)
    report = {
        "vertices": g.n_vertices,
        "edges": g.n_edges,
        "connected": len(comps) == 1,
        "components": len(comps),
        "component_sizes": sorted((len(c) for c in comps), reverse=True),
    }
    if len(comps) == 1 and g.n_vertices > 1:
        sign, logdet = np.linalg.slogdet(laplacian(g)[1:, 1:])
        report["log_spanning_trees"] = float(logdet)
        if logdet < 30:
            report["spanning_trees"] = spanning_tree_count(g)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["connected"] else 1


# ---------------------------------------------------------------------------
# prior analyses


def _analysis_inputs(args):
    if args.schema:
        schema = load_schema(args.schema)
        networks, _ = _parse_networks(args.network, schema)
        column = args.column or schema.categorical[0].name
    else:
        networks, _ = _parse_networks(args.network, None)
        if len(networks) != 1:
            raise ValueError("without --schema give exactly one --network")
        key, g = next(iter(networks.items()))
        schema = PredictorSchema((ColumnSpec("vertex", "network", levels=tuple(g.vertices), network=key),))
        column = "vertex"
    levels = next(c.levels for c in schema.categorical if c.name == column)
    prior = PriorConfig(alpha=args.alpha, beta=args.beta, split_strategy={column: args.strategy})
    return schema, networks, column, levels, prior


def cmd_prior_partitions(args) -> int:
    schema, networks, column, levels, prior = _analysis_inputs(args)
    parts = prior_partitions(prior, schema, networks, column, args.draws, np.random.default_rng(args.seed))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "n_blocks", "partition"])
        for d, p in enumerate(parts):
            w.writerow([d, len(p.blocks), ";".join("|".join(levels[k] for k in sorted(b)) for b in p.blocks)])
    return 0


def cmd_coclust(args) -> int:
    schema, networks, column, levels, prior = _analysis_inputs(args)
    mat = co_clustering_matrix(prior, schema, networks, column, args.draws, np.random.default_rng(args.seed))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level"] + list(levels))
        for k, row in enumerate(mat):
            w.writerow([levels[k]] + [repr(float(v)) for v in row])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subsetbart", description="Sum-of-trees regression with level-subset splits.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="run the sampler on a CSV dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--schema", required=True)
    f.add_argument("--network", action="append", help="ID=PATH or PATH (repeatable)")
    f.add_argument("--iters", type=int, default=2000)
    f.add_argument("--burnin", type=int, default=1000)
    f.add_argument("--thin", type=int, default=1)
    f.add_argument("--trees", type=int, default=200)
    f.add_argument("--strategy", choices=sorted(STRATEGIES), default="gs2")
    f.add_argument("--alpha", type=float, default=0.95)
    f.add_argument("--beta", type=float, default=2.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--probit", action="store_true")
    f.add_argument("--min-leaf", type=int, default=0)
    f.add_argument("--no-trees", action="store_true", help="skip writing trees.ndjson")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict from a fitted trees.ndjson")
    pr.add_argument("--trees", required=True)
    pr.add_argument("--manifest", help="defaults to manifest.json next to the trees file")
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    b = sub.add_parser("bench", help="compare methods on a synthetic DGP")
    b.add_argument("--dgp", required=True, choices=DGP_IDS)
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--methods", default="flex_unif,onehot")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--iters", type=int, default=2000)
    b.add_argument("--burnin", type=int, default=1000)
    b.add_argument("--trees", type=int, default=200)
    b.add_argument("--n-test", type=int, default=500)
    b.add_argument("--imbalanced", action="store_true")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("graph", help="network utilities")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    gc = gsub.add_parser("check", help="report size, connectivity and spanning-tree count")
    gc.add_argument("--network", required=True)
    gc.set_defaults(func=cmd_graph_check)

    for name, func, default_draws, helptext in (
        ("prior-partitions", cmd_prior_partitions, 1000, "level partitions induced by prior trees"),
        ("coclust", cmd_coclust, 10000, "prior co-clustering matrix of a categorical column"),
    ):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("--schema")
        a.add_argument("--network", action="append")
        a.add_argument("--column")
        a.add_argument("--strategy", choices=sorted(STRATEGIES) + ["onehot"], default="gs2")
        a.add_argument("--draws", type=int, default=default_draws)
        a.add_argument("--alpha", type=float, default=0.95)
        a.add_argument("--beta", type=float, default=2.0)
        a.add_argument("--seed", type=int, default=0)
        a.add_argument("--out", required=True)
        a.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
