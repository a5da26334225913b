"""Command-line pipeline: convert, index, retrieve, score, train, eval,
ablate, sweep, export-ranked, rerun.

Every command that writes outputs also writes a manifest beside its primary
output (<out>.manifest.json) recording the resolved arguments, package
version, seeds, and SHA-256 digests of all inputs.  `qa rerun --manifest`
re-executes a command from its manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .data import (
    convert_arc_csv,
    load_dataset,
    save_questions,
    validate_dataset,
)
from .errors import ConfigError, QaError
from .evaluate import (
    ablation_run,
    accuracy,
    doc_count_sweep,
    emit_report,
    ir_baseline,
)
from .index import InvertedIndex, load_corpus, load_index, save_index
from .pipeline import (
    build_instances,
    copy_rows_from_store,
    load_retrievals,
    remote_rows_from_retrievals,
    require_discriminators,
    run_retrieval,
    save_retrievals,
    tfd_rows_from_retrievals,
)
from .ranker import (
    RankerConfig,
    check_compatible,
    export_rankings,
    load_params,
    save_params,
    train,
)
from .scores import PrecomputedScoreStore, RemoteScorer, RemoteScorerConfig
from .synth import project_rows

RANKER_FIELD_NAMES = tuple(f.name for f in fields(RankerConfig))


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(command: str, resolved: dict, out_path: str | Path,
                    input_paths) -> None:
    manifest = {
        "command": command,
        "resolved": resolved,
        "version": __version__,
        "inputs": {
            str(p): _sha256(p) for p in sorted(str(x) for x in input_paths)
        },
    }
    manifest["config_hash"] = hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _resolve(args, keys) -> dict:
    """Merge --config JSON with CLI flags; flags win when set."""
    resolved = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(keys) - set(RANKER_FIELD_NAMES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for key in keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            resolved[key] = value
    for key in RANKER_FIELD_NAMES:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _ranker_config(resolved: dict) -> RankerConfig:
    kwargs = {k: resolved[k] for k in RANKER_FIELD_NAMES if k in resolved}
    return RankerConfig(**kwargs)


def _require(resolved: dict, *keys):
    missing = [k for k in keys if k not in resolved]
    if missing:
        raise ConfigError(f"missing required settings: {missing}")
    return [resolved[k] for k in keys]


def _add_ranker_flags(parser) -> None:
    for f in fields(RankerConfig):
        kind = float if f.type == "float" else int
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name,
                            type=kind, default=None)


def _load_split_instances(resolved, split, disc_ids):
    dataset = load_dataset(resolved["dataset"])
    questions = dataset.split(split)
    if not questions:
        raise ConfigError(f"dataset has no {split!r} split")
    records = load_retrievals(resolved["retrievals"])
    store = PrecomputedScoreStore.load(resolved["scores"])
    n_max = resolved.get("n_max")
    return build_instances(questions, records, store, disc_ids, n_max=n_max), store


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_convert_arc(args) -> int:
    questions = convert_arc_csv(args.in_path)
    save_questions(questions, args.out)
    _write_manifest("convert-arc", {"in": args.in_path, "out": args.out},
                    args.out, [args.in_path])
    print(f"wrote {len(questions)} questions to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    report = validate_dataset(load_dataset(args.dataset))
    print(json.dumps({
        "split_counts": report.split_counts,
        "candidate_histogram": {
            split: {str(k): v for k, v in sorted(hist.items())}
            for split, hist in report.candidate_histogram.items()
        },
        "labeled_fraction": report.labeled_fraction,
    }, sort_keys=True, indent=2))
    return 0


def _cmd_index(args) -> int:
    index = InvertedIndex.build(
        load_corpus(args.corpus, corpus_id=args.corpus_id),
        corpus_id=args.corpus_id or Path(args.corpus).stem,
    )
    save_index(index, args.out)
    _write_manifest("index", {"corpus": args.corpus, "out": args.out,
                              "corpus-id": index.corpus_id},
                    args.out, [args.corpus])
    print(f"indexed {index.num_docs} documents into {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    index_paths = args.index.split(",")
    quotas = [int(q) for q in args.quota.split(",")]
    if len(quotas) != len(index_paths):
        raise ConfigError(
            f"{len(index_paths)} indexes but {len(quotas)} quotas"
        )
    indices = [(load_index(p), q) for p, q in zip(index_paths, quotas)]
    dataset = load_dataset(args.dataset)
    questions = [q for split in ("train", "dev", "test")
                 for q in dataset.split(split)]
    records = run_retrieval(questions, indices, scorer=args.scorer)
    save_retrievals(records, args.out)
    _write_manifest("retrieve", {
        "index": args.index, "quota": args.quota, "dataset": args.dataset,
        "out": args.out, "scorer": args.scorer,
    }, args.out, index_paths + _dataset_inputs(args.dataset))
    print(f"wrote {len(records)} retrieval records to {args.out}")
    return 0


def _parse_bindings(binds, disc_ids) -> dict[str, str]:
    bindings = {"tfd": "native"}
    for bind in binds or []:
        if "=" not in bind:
            raise ConfigError(f"binding must look like disc=source: {bind!r}")
        disc_id, source = bind.split("=", 1)
        bindings[disc_id] = source
    for disc_id in disc_ids:
        if disc_id not in bindings:
            raise ConfigError(f"no score source bound for {disc_id!r}")
    return bindings


def _cmd_score(args) -> int:
    disc_ids = args.discriminators.split(",")
    bindings = _parse_bindings(args.bind, disc_ids)
    records = load_retrievals(args.retrievals)
    store = PrecomputedScoreStore()
    inputs = [args.retrievals]
    questions_by_id = None
    for disc_id in disc_ids:
        source = bindings[disc_id]
        if source == "native":
            if disc_id != "tfd":
                raise ConfigError("only tfd supports the native source")
            tfd_rows_from_retrievals(records, store)
        elif source.startswith("file:"):
            path = source[len("file:"):]
            inputs.append(path)
            copy_rows_from_store(records, PrecomputedScoreStore.load(path),
                                 disc_id, store)
        elif source.startswith("remote:"):
            if questions_by_id is None:
                if not args.dataset:
                    raise ConfigError("--dataset is required for remote scoring")
                dataset = load_dataset(args.dataset)
                questions_by_id = {
                    q.id: q for split in ("train", "dev", "test")
                    for q in dataset.split(split)
                }
            scorer = RemoteScorer(RemoteScorerConfig(
                base_url=source[len("remote:"):],
                cache_path=args.cache,
            ))
            remote_rows_from_retrievals(records, questions_by_id, scorer,
                                        disc_id, store)
        else:
            raise ConfigError(f"unknown score source {source!r} for {disc_id!r}")
    store.save(args.scores_out)
    resolved = {
        "retrievals": args.retrievals, "discriminators": args.discriminators,
        "bind": [f"{d}={s}" for d, s in sorted(bindings.items())],
        "scores-out": args.scores_out,
    }
    if args.dataset:
        resolved["dataset"] = args.dataset
        inputs += _dataset_inputs(args.dataset)
    _write_manifest("score", resolved, args.scores_out, inputs)
    print(f"wrote {len(store)} scores to {args.scores_out}")
    return 0


def _cmd_train(args) -> int:
    resolved = _resolve(args, ("dataset", "retrievals", "scores",
                               "discriminators", "out", "train-split",
                               "dev-split"))
    dataset, retrievals, scores, out = _require(
        resolved, "dataset", "retrievals", "scores", "out")
    disc_ids = _split_discs(resolved)
    config = _ranker_config({**resolved, "k_disc": len(disc_ids)})
    train_set, store = _load_split_instances(
        resolved, resolved.get("train-split", "train"), disc_ids)
    require_discriminators(store, [d for d in disc_ids if d != "tfd"])
    dev_set, _ = _load_split_instances(
        resolved, resolved.get("dev-split", "dev"), disc_ids)
    result = train(train_set, dev_set, config)
    save_params(result.params, out, row_order=disc_ids)
    log_path = Path(str(out) + ".log.json")
    log_path.write_text(json.dumps({
        "best_restart": result.best_restart,
        "best_dev_loss": result.best_dev_loss,
        "failed_restarts": result.failed_restarts,
        "epochs": [asdict(r) for r in result.log],
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest("train", resolved, out,
                    [retrievals, scores] + _dataset_inputs(dataset))
    print(f"saved checkpoint to {out} "
          f"(best restart {result.best_restart}, "
          f"dev loss {result.best_dev_loss:.4f})")
    return 0


def _dataset_inputs(dataset_path) -> list[str]:
    path = Path(dataset_path)
    if path.is_dir():
        return [str(p) for p in sorted(path.glob("*.jsonl"))]
    return [str(path)]


def _split_discs(resolved) -> list[str]:
    discs = resolved.get("discriminators", "tfd,drd,avd")
    if isinstance(discs, str):
        discs = discs.split(",")
    return list(discs)


def _cmd_eval(args) -> int:
    resolved = _resolve(args, ("dataset", "retrievals", "scores", "checkpoint",
                               "split", "format", "out"))
    checkpoint, out = _require(resolved, "checkpoint", "out")
    _require(resolved, "dataset", "retrievals", "scores")
    params, config, row_order = load_params(checkpoint)
    split = resolved.get("split", "test")
    instances, _ = _load_split_instances(
        {**resolved, "n_max": config.n_max}, split, row_order)
    check_compatible(params, instances, row_order)
    report = accuracy(params, instances, split=split)
    emit_report(report, resolved.get("format", "json"), out)
    _write_manifest("eval", resolved, out,
                    [checkpoint, resolved["retrievals"], resolved["scores"]]
                    + _dataset_inputs(resolved["dataset"]))
    print(f"{split} accuracy: {report.accuracy:.4f} "
          f"({report.correct}/{report.total})")
    return 0


def _cmd_ir_baseline(args) -> int:
    index_paths = args.index.split(",")
    quotas = [int(q) for q in args.quota.split(",")]
    indices = [(load_index(p), q) for p, q in zip(index_paths, quotas)]
    dataset = load_dataset(args.dataset)
    questions = dataset.split(args.split)
    report = ir_baseline(indices, questions, scorer=args.scorer,
                         split=args.split)
    emit_report(report, args.format, args.out)
    _write_manifest("ir-baseline", {
        "index": args.index, "quota": args.quota, "dataset": args.dataset,
        "split": args.split, "out": args.out,
    }, args.out, index_paths + _dataset_inputs(args.dataset))
    print(f"IR baseline {args.split} accuracy: {report.accuracy:.4f}")
    return 0


def _cmd_ablate(args) -> int:
    resolved = _resolve(args, ("dataset", "retrievals", "scores", "subsets",
                               "eval-split", "format", "out"))
    out, = _require(resolved, "out")
    _require(resolved, "dataset", "retrievals", "scores")
    subset_ids = resolved.get("subsets", "tfd,drd,avd")
    if isinstance(subset_ids, str):
        subset_ids = subset_ids.split(",")
    cumulative = [tuple(subset_ids[: i + 1]) for i in range(len(subset_ids))]
    config = _ranker_config(resolved)
    all_disc = list(subset_ids)
    eval_split = resolved.get("eval-split", "test")
    full = {}
    store = None
    for split in ("train", "dev", eval_split):
        full[split], store = _load_split_instances(resolved, split, all_disc)
    require_discriminators(store, [d for d in all_disc if d != "tfd"])

    def make_instances(subset):
        return tuple(project_rows(full[s], subset)
                     for s in ("train", "dev", eval_split))

    table = ablation_run(cumulative, make_instances, config,
                         dataset_name=Path(resolved["dataset"]).name)
    emit_report(table, resolved.get("format", "json"), out)
    _write_manifest("ablate", resolved, out,
                    [resolved["retrievals"], resolved["scores"]]
                    + _dataset_inputs(resolved["dataset"]))
    for column, acc in zip(table.columns, table.accuracies):
        print(f"{column}: {acc:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    resolved = _resolve(args, ("dataset", "retrievals", "scores", "n",
                               "discriminators", "format", "out"))
    out, = _require(resolved, "out")
    _require(resolved, "dataset", "retrievals", "scores")
    n_values = resolved.get("n", "1,5,10,20,40")
    if isinstance(n_values, str):
        n_values = [int(x) for x in n_values.split(",")]
    disc_ids = _split_discs(resolved)
    config = _ranker_config({**resolved, "k_disc": len(disc_ids)})
    train_set, _ = _load_split_instances(resolved, "train", disc_ids)
    dev_set, _ = _load_split_instances(resolved, "dev", disc_ids)
    sweep = doc_count_sweep(train_set, dev_set, n_values, config)
    emit_report(sweep, resolved.get("format", "json"), out)
    _write_manifest("sweep", resolved, out,
                    [resolved["retrievals"], resolved["scores"]]
                    + _dataset_inputs(resolved["dataset"]))
    for n, acc in sweep.points:
        print(f"n={n}: {acc:.4f}")
    return 0


def _cmd_export_ranked(args) -> int:
    resolved = _resolve(args, ("dataset", "retrievals", "scores", "checkpoint",
                               "split", "top-k", "out"))
    checkpoint, out = _require(resolved, "checkpoint", "out")
    _require(resolved, "dataset", "retrievals", "scores")
    params, config, row_order = load_params(checkpoint)
    split = resolved.get("split", "test")
    instances, _ = _load_split_instances(
        {**resolved, "n_max": config.n_max}, split, row_order)
    check_compatible(params, instances, row_order)
    rankings = export_rankings(params, instances,
                               top_k=int(resolved.get("top-k", 10)))
    with open(out, "w", encoding="utf-8") as fh:
        for entry in rankings:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    _write_manifest("export-ranked", resolved, out,
                    [checkpoint, resolved["retrievals"], resolved["scores"]]
                    + _dataset_inputs(resolved["dataset"]))
    print(f"wrote {len(rankings)} rankings to {out}")
    return 0


def _cmd_rerun(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest["command"]
    resolved = manifest["resolved"]
    argv = [command]
    for key, value in resolved.items():
        flag = f"--{key.replace('_', '-')}"
        if key == "bind":
            for item in value:
                argv += ["--bind", str(item)]
        elif isinstance(value, list):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return run(argv)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qa",
        description="Retrieval and attention-based ranking for multiple-choice QA",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert-arc", help="convert an ARC CSV to JSONL")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convert_arc)

    p = sub.add_parser("validate", help="report dataset statistics")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("index", help="build an inverted index from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus-id", default=None)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("retrieve", help="retrieve docs per (question, candidate)")
    p.add_argument("--index", required=True, help="comma-separated index files")
    p.add_argument("--quota", required=True, help="comma-separated per-index quotas")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scorer", default="bm25", choices=("bm25", "classic-tfidf"))
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("score", help="assemble discriminator scores")
    p.add_argument("--retrievals", required=True)
    p.add_argument("--discriminators", default="tfd,drd,avd")
    p.add_argument("--scores-out", required=True)
    p.add_argument("--bind", action="append",
                   help="disc=native|file:<path>|remote:<url>")
    p.add_argument("--dataset", default=None)
    p.add_argument("--cache", default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("train", help="train the ranker")
    p.add_argument("--config", default=None)
    for key in ("dataset", "retrievals", "scores", "discriminators", "out",
                "train-split", "dev-split"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None)
    _add_ranker_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config", default=None)
    for key in ("dataset", "retrievals", "scores", "checkpoint", "split",
                "format", "out"):
        p.add_argument(f"--{key}", default=None)
    _add_ranker_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ir-baseline", help="lexical argmax baseline")
    p.add_argument("--index", required=True)
    p.add_argument("--quota", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--scorer", default="bm25", choices=("bm25", "classic-tfidf"))
    p.add_argument("--format", default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ir_baseline)

    p = sub.add_parser("ablate", help="cumulative discriminator ablation")
    p.add_argument("--config", default=None)
    for key in ("dataset", "retrievals", "scores", "subsets", "eval-split",
                "format", "out"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None)
    _add_ranker_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="document-count sweep")
    p.add_argument("--config", default=None)
    for key in ("dataset", "retrievals", "scores", "n", "discriminators",
                "format", "out"):
        p.add_argument(f"--{key}", default=None)
    _add_ranker_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("export-ranked", help="export attention-weight rankings")
    p.add_argument("--config", default=None)
    for key in ("dataset", "retrievals", "scores", "checkpoint", "split",
                "out"):
        p.add_argument(f"--{key}", default=None)
    p.add_argument("--top-k", dest="top_k", type=int, default=None)
    _add_ranker_flags(p)
    p.set_defaults(func=_cmd_export_ranked)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_rerun)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (QaError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
