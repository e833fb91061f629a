"""Command-line pipelines: selection, training, export, and evaluation.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
``MSHINE_LOG=debug|info|warn`` controls verbosity. Every run writes a JSON
manifest (config snapshot, input digests, seed, version, per-phase timings);
manifests are written atomically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .hin import (GraphFormatError, load_graph, read_edge_list, read_labels,
                  schema_of)
from .metapaths import MetaPath, decompose, default_half_len, select_initial, \
    triple_types_of
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingDiverged, train
from .evaluation import (EvalError, classify, export_embeddings, map_score,
                         mrr_score, precision_at_k, rank_candidates,
                         recall_at_k, link_prediction_queries, ALLOWED_RATIOS)

logger = logging.getLogger("mshine")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Timings:
    def __init__(self):
        self.phases: dict[str, float] = {}

    def measure(self, name):
        timings = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                timings.phases[name] = timings.phases.get(name, 0.0) \
                    + time.perf_counter() - self.start

        return _Ctx()


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command, args_ns, inputs, timings, extra=None):
    manifest = {
        "tool": "mshine",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args_ns).items())
                   if k not in ("func", "manifest")},
        "input_digests": {str(p): _sha256(p) for p in inputs if p},
        "seed": getattr(args_ns, "seed", None),
        "timings_sec": {k: round(v, 6) for k, v in timings.phases.items()},
    }
    if extra:
        manifest.update(extra)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _setup_logging():
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warn": logging.WARNING}.get(os.environ.get("MSHINE_LOG", "info"),
                                          logging.INFO)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _add_graph_args(p):
    p.add_argument("--nodes", required=True, help="node file (label<TAB>type)")
    p.add_argument("--edges", required=True, help="edge file (src<TAB>dst<TAB>type)")


def _load_paths(graph, schema, metapath_file, max_half_len):
    if metapath_file:
        paths = []
        with open(metapath_file, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    paths.append(MetaPath.parse(line, schema))
                except ValueError as exc:
                    raise GraphFormatError(f"{metapath_file}:{lineno}: {exc}") from None
        if not paths:
            raise GraphFormatError(f"{metapath_file}: no meta-paths")
        return paths
    return select_initial(schema, max_half_len)


def _load_model(path, graph):
    """Load a checkpoint and rebuild the triple index against the graph."""
    params, labels, metapath_ids = load_checkpoint(path)
    if labels != graph.labels:
        raise CheckpointError(
            f"{path}: node labels do not match the supplied graph files")
    schema = schema_of(graph)
    paths = [MetaPath.parse(mid, schema) for mid in metapath_ids]
    index = triple_types_of(paths)
    if index.n_triples != params.n_triple_types:
        raise CheckpointError(f"{path}: relation table size mismatch")
    return params, index


# -- subcommands -------------------------------------------------------------

def _cmd_select(args):
    timings = _Timings()
    with timings.measure("load"):
        graph = load_graph(args.nodes, args.edges)
        schema = schema_of(graph)
    with timings.measure("select"):
        paths = select_initial(schema, args.max_half_len)
    for mp in paths:
        triples = ",".join(sorted(t.id for t in decompose(mp)))
        print(f"{mp.id}\t{triples}")
    _write_manifest(args.manifest, "select-metapaths", args,
                    [args.nodes, args.edges], timings,
                    {"n_metapaths": len(paths),
                     "max_half_len": args.max_half_len or default_half_len(schema)})
    return EXIT_OK


def _cmd_train(args):
    timings = _Timings()
    with timings.measure("load"):
        graph = load_graph(args.nodes, args.edges)
        schema = schema_of(graph)
    with timings.measure("select"):
        paths = _load_paths(graph, schema, args.metapaths, args.max_half_len)
    if not paths:
        raise GraphFormatError("empty selected meta-path set")
    index = triple_types_of(paths)
    metapath_ids = [p.id for p in paths]
    config = TrainConfig(
        dim=args.dim, negative_k=args.neg, batch_size=args.batch,
        epochs=args.epochs, learning_rate=args.lr,
        min_learning_rate=args.min_lr, seed=args.seed,
        neg_distribution=args.neg_distribution,
        samples_per_type=args.samples_per_type,
        checkpoint_every=args.checkpoint_every,
        scale_negatives=not args.no_scale_negatives, workers=args.workers)

    log_fh = open(args.log_file, "a", encoding="utf-8")

    def report_cb(rep):
        log_fh.write(f"{rep.epoch}\t{rep.loss_pre:.6f}\t{rep.loss_state:.6f}\n")
        log_fh.flush()
        logger.info("epoch %d loss_pre=%.6f loss_state=%.6f",
                    rep.epoch, rep.loss_pre, rep.loss_state)

    def checkpoint_cb(params, epoch):
        save_checkpoint(args.out, params, graph.labels, metapath_ids)
        logger.info("checkpoint written at epoch %d", epoch)

    try:
        with timings.measure("train"):
            params, _ = train(graph, index, config,
                              checkpoint_cb=checkpoint_cb, report_cb=report_cb)
    except TrainingDiverged as exc:
        if exc.last_good is not None:
            save_checkpoint(args.out, exc.last_good, graph.labels, metapath_ids)
            logger.error("training diverged at epoch %s; last good parameters "
                         "written to %s", exc.epoch, args.out)
        _write_manifest(args.manifest or f"{args.out}.manifest.json", "train",
                        args, [args.nodes, args.edges, args.metapaths], timings,
                        {"diverged_at_epoch": exc.epoch,
                         "deterministic": config.workers == 1})
        raise
    finally:
        log_fh.close()

    with timings.measure("checkpoint"):
        save_checkpoint(args.out, params, graph.labels, metapath_ids)
    _write_manifest(args.manifest or f"{args.out}.manifest.json", "train", args,
                    [args.nodes, args.edges, args.metapaths], timings,
                    {"n_metapaths": len(paths),
                     "metapath_ids": metapath_ids,
                     "deterministic": config.workers == 1,
                     "checkpoint": str(args.out)})
    return EXIT_OK


def _cmd_export(args):
    timings = _Timings()
    with timings.measure("load"):
        graph = load_graph(args.nodes, args.edges)
        params, index = _load_model(args.model, graph)
    with timings.measure("export"):
        written = export_embeddings(params, index, graph.labels, args.out_dir)
    for path in written:
        print(path)
    _write_manifest(args.manifest, "export", args,
                    [args.nodes, args.edges, args.model], timings,
                    {"files": [str(p) for p in written]})
    return EXIT_OK


def _parse_k_list(text):
    try:
        ks = sorted({int(k) for k in text.split(",") if k.strip()})
    except ValueError:
        raise GraphFormatError(f"bad --k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise GraphFormatError("--k values must be positive integers")
    return ks


def _cmd_eval_link(args):
    timings = _Timings()
    ks = _parse_k_list(args.k)
    with timings.measure("load"):
        graph = load_graph(args.nodes, args.edges)
        params, index = _load_model(args.model, graph)
        held_out = read_edge_list(args.held_out, graph)
    if args.edge_type not in graph.edge_name_to_id:
        raise GraphFormatError(f"unknown edge type {args.edge_type!r}")
    with timings.measure("rank"):
        qt, ct, relevant = link_prediction_queries(
            graph, held_out, args.edge_type, args.query_type)
        if not relevant:
            raise GraphFormatError(
                f"no held-out edges of type {args.edge_type!r} with query type {qt!r}")
        results = [rank_candidates(params, graph, index, q, ct, args.edge_type,
                                   relevant=rel)
                   for q, rel in sorted(relevant.items())]
    rows = [("queries", "", f"{len(results)}")]
    for k in ks:
        pre = np.mean([precision_at_k(r, k) for r in results])
        rec = np.mean([recall_at_k(r, k) for r in results if r.relevant])
        rows.append(("Pre", str(k), f"{pre:.6f}"))
        rows.append(("Rec", str(k), f"{rec:.6f}"))
        rows.append(("MAP", str(k), f"{map_score(results, k):.6f}"))
    rows.append(("MRR", "", f"{mrr_score(results):.6f}"))
    print("metric\tk\tvalue")
    for name, k, value in rows:
        print(f"{name}\t{k}\t{value}")
    _write_manifest(args.manifest, "eval-link", args,
                    [args.nodes, args.edges, args.model, args.held_out],
                    timings, {"query_type": qt, "candidate_type": ct})
    return EXIT_OK


def _cmd_eval_classify(args):
    timings = _Timings()
    try:
        ratios = [float(r) for r in args.ratio.split(",") if r.strip()]
    except ValueError:
        raise GraphFormatError(f"bad --ratio list {args.ratio!r}") from None
    for r in ratios:
        if not any(abs(r - a) < 1e-9 for a in ALLOWED_RATIOS):
            raise GraphFormatError(f"ratio {r} not in {ALLOWED_RATIOS}")
    with timings.measure("load"):
        graph = load_graph(args.nodes, args.edges)
        params, index = _load_model(args.model, graph)
        labels = read_labels(args.labels, graph)
    if args.metapath == "all":
        pids = list(range(index.n_paths))
    else:
        pids = [index.path_id(args.metapath)]
    print("metapath\tratio\tf1_macro\tf1_micro")
    with timings.measure("classify"):
        for pid in pids:
            emb_matrix = params.X * params.V_x[pid]
            embeddings = {v: emb_matrix[v] for v in labels}
            for ratio in ratios:
                rng = np.random.default_rng(args.seed + 3)
                macro, micro = classify(embeddings, labels, ratio,
                                        repetitions=args.reps, rng=rng)
                print(f"{index.paths[pid].id}\t{ratio:g}\t{macro:.6f}\t{micro:.6f}")
    _write_manifest(args.manifest, "eval-classify", args,
                    [args.nodes, args.edges, args.model, args.labels], timings)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mshine",
                     description="Heterogeneous network embedding pipelines")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("select-metapaths", parents=[], help="print the selected "
                       "initial meta-paths and their triple sets")
    _add_graph_args(p)
    p.add_argument("--max-half-len", type=int, default=None)
    p.add_argument("--manifest", default="select-metapaths.manifest.json")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train", help="select meta-paths and train a model")
    _add_graph_args(p)
    p.add_argument("--metapaths", default=None,
                   help="file with one meta-path per line (skips selection)")
    p.add_argument("--max-half-len", type=int, default=None)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--neg", type=int, default=5)
    p.add_argument("--batch", type=int, default=30)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--min-lr", type=float, default=0.0001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--samples-per-type", type=int, default=None)
    p.add_argument("--neg-distribution", choices=("uniform", "degree75"),
                   default="uniform")
    p.add_argument("--no-scale-negatives", action="store_true",
                   help="drop the 1/K factor on the negative term")
    p.add_argument("--log-file", default="train.log")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--manifest", default=None,
                   help="manifest path (default: <out>.manifest.json)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("export", help="write per-meta-path embedding text files")
    _add_graph_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest", default="export.manifest.json")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("eval-link", help="link prediction over held-out edges")
    _add_graph_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--held-out", required=True,
                   help="held-out edge file (same format as --edges)")
    p.add_argument("--edge-type", required=True)
    p.add_argument("--query-type", default=None,
                   help="endpoint type to query from (default: the "
                        "lexicographically larger endpoint type)")
    p.add_argument("--k", default="1,3,10")
    p.add_argument("--manifest", default="eval-link.manifest.json")
    p.set_defaults(func=_cmd_eval_link)

    p = sub.add_parser("eval-classify", help="node classification on embeddings")
    _add_graph_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True,
                   help="labels file: label<TAB>class[,class...]")
    p.add_argument("--ratio", default="0.2,0.4,0.6,0.8")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--metapath", default="all",
                   help="meta-path id, index, or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default="eval-classify.manifest.json")
    p.set_defaults(func=_cmd_eval_classify)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        logger.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except (GraphFormatError, CheckpointError, EvalError, FileNotFoundError,
            KeyError, ValueError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
