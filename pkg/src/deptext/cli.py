"""Command line entry point: ``deptext <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import corpus, synth
from .embeddings import (
    EmbeddingSpec,
    FeatureCache,
    EmptyFeatureError,
    StubProvider,
    embed_static,
    fetch_contextual,
    load_pretrained_table,
    save_table,
    skipgram_config,
    train_static_embeddings,
)
from .experiments import (
    ExperimentSpec,
    ResultStore,
    RunResources,
    best_average,
    best_single,
    experiment_ids,
    fold_mean,
    global_mean,
    report,
    run_matrix,
)
from .model import POOLING_METHODS
from .objective import LossConfig
from .training import TrainRunConfig

log = logging.getLogger("deptext")


def cmd_synth(args) -> int:
    if args.sessions < 4:
        raise SystemExit("--sessions must be at least 4")
    # default proportions mirror the 107/35 split with 30 and 12 positives
    n_train = args.train if args.train is not None else round(args.sessions * 107 / 142)
    n_dev = args.sessions - n_train
    if n_train < 1 or n_dev < 1:
        raise SystemExit("--train must leave at least one session on each side")
    paths = synth.generate(args.out, n_train=n_train, n_dev=n_dev, train_pos=round(n_train * 30 / 107),
                           dev_pos=round(n_dev * 12 / 35), seed=args.seed)
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


def cmd_prepare(args) -> int:
    split = corpus.prepare_split(args.transcripts, args.labels, args.split)
    corpus.write_corpus(split.sessions, args.out)
    print(f"wrote {len(split)} sessions to {args.out}")
    return 0


def cmd_stats(args) -> int:
    sessions = corpus.read_corpus(args.corpus)
    out = corpus.corpus_stats(sessions).as_dict()
    if args.ngrams:
        out["ngrams"] = {
            f"{n}-gram/class{c}": corpus.ngram_counts(sessions, n, c)[:args.top]
            for n in range(1, args.ngrams + 1) for c in (0, 1)
        }
    print(json.dumps(out, indent=1))
    return 0


def cmd_embed(args) -> int:
    try:
        spec = EmbeddingSpec(args.frontend, args.level, pretrained=not args.scratch)
    except ValueError as e:
        raise SystemExit(str(e)) from None
    sessions = [s for path in args.corpus for s in corpus.read_corpus(path)]
    cache = FeatureCache(args.out, frontend=spec.frontend, pretrained=spec.pretrained)
    settings: dict = {"seed": args.seed}

    if spec.frontend in ("word2vec", "fasttext"):
        if args.scratch:
            source = corpus.read_corpus(args.train_on) if args.train_on else corpus.read_corpus(args.corpus[0])
            table = train_static_embeddings([x for s in source for x in s.sentences], spec, seed=args.seed)
            Path(args.out).mkdir(parents=True, exist_ok=True)
            save_table(table, Path(args.out) / "vectors.txt")
            settings["skipgram"] = skipgram_config(spec).as_dict()
        elif args.pretrained:
            table = load_pretrained_table(args.pretrained)
            settings["table"] = str(args.pretrained)
        else:
            raise SystemExit("static frontends need --pretrained PATH or --scratch")
        for s in sessions:
            try:
                cache.write(embed_static(s.session_id, s.sentences, spec, table))
            except EmptyFeatureError as e:
                log.warning("%s; session dropped", e)
    else:
        if args.provider != "stub":
            raise SystemExit("only the built-in 'stub' provider is available from the CLI; "
                             "use the Python API to plug in a real encoder")
        provider = StubProvider(spec.frontend)
        settings["provider"] = "stub"
        for s in sessions:
            try:
                fetch_contextual(s.session_id, s.sentences, provider, cache)
            except EmptyFeatureError as e:
                log.warning("%s; session dropped", e)
    cache.write_spec(spec, settings)
    print(f"cached {len(cache.session_ids())} feature sequences in {args.out}")
    return 0


def _run_cfg(args) -> TrainRunConfig:
    return TrainRunConfig(max_epochs=args.max_epochs, initial_lr=args.lr, batch_size=args.batch_size)


def cmd_train(args) -> int:
    emb, _ = FeatureCache(args.features).read_spec()
    spec = ExperimentSpec(emb, args.pooling, LossConfig(w=args.loss_w), args.runs, args.folds, args.fold_seed)
    res = RunResources(Path(args.features), Path(args.corpus), Path(args.dev_corpus) if args.dev_corpus else None,
                       Path(args.checkpoints) if args.checkpoints else None, args.hidden, args.layers,
                       args.dropout, _run_cfg(args))
    run_matrix([(spec, res)], ResultStore(args.out), workers=args.workers)
    print(f"experiment {spec.experiment_id}: results in {args.out}")
    return 0


def load_matrix(path: str | Path) -> list[tuple[ExperimentSpec, RunResources]]:
    """Expand a TOML matrix file into (spec, resources) pairs.

    ``[defaults]`` supplies shared keys; each ``[[experiment]]`` table needs
    ``features`` and may list several ``pooling`` values.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    base = path.parent
    defaults = cfg.get("defaults", {})
    out = []
    for exp in cfg.get("experiment", []):
        c = {**defaults, **exp}
        pooling = c.get("pooling", "mean")
        poolings = POOLING_METHODS if pooling == "all" else ([pooling] if isinstance(pooling, str) else pooling)
        features = base / c["features"]
        emb, _ = FeatureCache(features).read_spec()
        run_cfg = TrainRunConfig(max_epochs=c.get("max_epochs", 200), initial_lr=c.get("lr", 0.004),
                                 batch_size=c.get("batch_size", 32))
        for p in poolings:
            spec = ExperimentSpec(emb, p, LossConfig(w=c.get("loss_w", 0.1)), c.get("runs", 100),
                                  c.get("folds", 5), c.get("fold_seed", 0))
            res = RunResources(
                features, base / c["corpus"], base / c["dev_corpus"] if c.get("dev_corpus") else None,
                base / c["checkpoints"] if c.get("checkpoints") else None,
                c.get("hidden", 128), c.get("layers", 3), c.get("dropout", 0.2), run_cfg,
            )
            out.append((spec, res))
    if not out:
        raise SystemExit(f"{path} defines no [[experiment]] tables")
    return out


def cmd_run(args) -> int:
    specs = load_matrix(args.matrix)
    run_matrix(specs, ResultStore(args.out), workers=args.workers)
    print(f"{len(specs)} experiments: results in {args.out}")
    return 0


def cmd_aggregate(args) -> int:
    records = ResultStore(args.results).load()
    exps = [args.experiment] if args.experiment else experiment_ids(records)
    out = []
    for e in exps:
        for split in ("cv", "dev"):
            if not any(r["experiment_id"] == e and r["split"] == split and r["status"] == "ok" for r in records):
                continue
            row = {"experiment_id": e, "split": split}
            if args.stat == "fold-mean":
                folds = sorted({r["fold"] for r in records if r["experiment_id"] == e and r["split"] == split})
                row["folds"] = {f: {m: fold_mean(records, e, f, split, m) for m in ("f1", "mae", "accuracy")}
                                for f in folds}
            elif args.stat == "global-mean":
                row.update({m: global_mean(records, e, split, m) for m in ("f1", "mae", "accuracy")})
            elif args.stat == "best-avg":
                has_cv = any(r["experiment_id"] == e and r["split"] == "cv" for r in records)
                row.update(asdict(best_average(records, e, split, select_split="cv" if has_cv else None)))
            else:
                row.update(asdict(best_single(records, e, split)))
            out.append(row)
    print(json.dumps(out, indent=1))
    return 0


def cmd_report(args) -> int:
    paths = report(ResultStore(args.results).load(), args.out, args.format)
    for p in paths:
        print(p)
    return 0


def _add_training_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.004)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deptext", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus in DAIC-WOZ layout")
    p.add_argument("--sessions", type=int, default=142, help="total sessions (train + dev)")
    p.add_argument("--train", type=int, help="how many of them form the train split (default: 107/142 of them)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="parse transcripts and labels into a JSONL corpus")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", choices=("train", "dev"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ngrams", type=int, default=0, help="also list top n-grams up to this order")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("embed", help="compute and cache feature sequences")
    p.add_argument("--corpus", action="append", required=True, help="JSONL corpus; repeatable")
    p.add_argument("--frontend", choices=("word2vec", "fasttext", "elmo", "bert"), required=True)
    p.add_argument("--level", choices=("word", "sentence"), default="sentence")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pretrained", help="word-vector text file")
    g.add_argument("--scratch", action="store_true", help="train skip-gram vectors on the corpus")
    p.add_argument("--train-on", help="corpus to train scratch vectors on (default: first --corpus)")
    p.add_argument("--provider", default="stub", help="contextual encoder (elmo/bert)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="cross-validated training of one experiment")
    p.add_argument("--features", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dev-corpus")
    p.add_argument("--pooling", choices=POOLING_METHODS, default="mean")
    p.add_argument("--loss-w", type=float, default=0.1)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--fold-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoints")
    _add_training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run an experiment matrix from a TOML file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="aggregate statistics from a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--stat", choices=("fold-mean", "global-mean", "best-avg", "best-single"), required=True)
    p.add_argument("--experiment")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("report", help="write tables and boxplots")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "svg", "png"), default="svg")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
