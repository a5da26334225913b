"""Accuracy evaluation, IR baseline, ablations, and document-count sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import QaError
from .pipeline import truncate_instance
from .ranker import RankerConfig, RankerParams, predict, train

REPORT_FORMATS = ("json", "csv", "markdown")


def config_fingerprint(config: RankerConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class EvalReport:
    split: str
    accuracy: float
    correct: int
    total: int
    predictions: list[dict]
    fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": "eval",
            "split": self.split,
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "fingerprint": self.fingerprint,
            "predictions": self.predictions,
        }


@dataclass
class AblationTable:
    dataset: str
    columns: list[str]          # "+"-joined cumulative subsets
    accuracies: list[float]
    dev_accuracies: list[float]
    reference: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "ablation",
            "dataset": self.dataset,
            "columns": self.columns,
            "accuracies": self.accuracies,
            "dev_accuracies": self.dev_accuracies,
            "reference": self.reference,
        }


@dataclass
class SweepResult:
    points: list[tuple[int, float]]
    seeds: list[int]
    flagged: list[int] = field(default_factory=list)  # n values over doc count

    def __post_init__(self):
        ns = [n for n, _ in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise QaError(f"sweep n values must be strictly increasing: {ns}")

    def to_dict(self) -> dict:
        return {
            "kind": "sweep",
            "points": [[n, acc] for n, acc in self.points],
            "seeds": self.seeds,
            "flagged": self.flagged,
        }


def accuracy(params: RankerParams, instances, split: str = "eval") -> EvalReport:
    """Exact-match accuracy of the model over labeled instances."""
    predictions = []
    correct = 0
    for inst in instances:
        if inst.answer_index is None:
            raise QaError(f"unlabeled question {inst.question_id!r} in evaluation")
        pred = predict(inst, params)
        hit = pred.predicted_index == inst.answer_index
        correct += hit
        predictions.append({
            "question_id": inst.question_id,
            "predicted": pred.predicted_index,
            "gold": inst.answer_index,
            "correct": bool(hit),
        })
    total = len(predictions)
    return EvalReport(
        split=split,
        accuracy=correct / total if total else 0.0,
        correct=correct,
        total=total,
        predictions=predictions,
        fingerprint=config_fingerprint(params.config),
    )


def ir_baseline(indices_with_quotas, questions, scorer: str = "bm25",
                split: str = "eval") -> EvalReport:
    """Predict the candidate whose best retrieved document scores highest.

    Candidates retrieving nothing score 0; ties go to the lowest index.
    """
    predictions = []
    correct = 0
    for q in questions:
        if q.answer_index is None:
            raise QaError(f"unlabeled question {q.id!r} in evaluation")
        best_scores = []
        for answer in q.candidates:
            best = 0.0
            for index, quota in indices_with_quotas:
                result = index.retrieve(q.text, answer, top_k=1, scorer=scorer)
                if result.docs:
                    best = max(best, result.docs[0].score)
            best_scores.append(best)
        predicted = int(np.argmax(best_scores))
        hit = predicted == q.answer_index
        correct += hit
        predictions.append({
            "question_id": q.id,
            "predicted": predicted,
            "gold": q.answer_index,
            "correct": bool(hit),
        })
    total = len(predictions)
    return EvalReport(
        split=split,
        accuracy=correct / total if total else 0.0,
        correct=correct,
        total=total,
        predictions=predictions,
    )


def ablation_run(subsets, make_instances, config: RankerConfig,
                 dataset_name: str = "dataset",
                 reference: dict | None = None) -> AblationTable:
    """Train and evaluate one model per cumulative discriminator subset.

    make_instances(subset) must return (train, dev, eval) instance lists
    whose matrices carry exactly the subset's rows; it is called for every
    subset before any training starts, so a missing score source fails fast.
    """
    prepared = [(tuple(s), make_instances(tuple(s))) for s in subsets]
    accuracies = []
    dev_accuracies = []
    columns = []
    for subset, (train_set, dev_set, eval_set) in prepared:
        sub_config = RankerConfig(**{**asdict(config), "k_disc": len(subset)})
        result = train(train_set, dev_set, sub_config)
        accuracies.append(accuracy(result.params, eval_set).accuracy)
        dev_accuracies.append(accuracy(result.params, dev_set).accuracy)
        columns.append("+".join(subset))
    return AblationTable(
        dataset=dataset_name,
        columns=columns,
        accuracies=accuracies,
        dev_accuracies=dev_accuracies,
        reference=dict(reference or {}),
    )


def doc_count_sweep(train_set, dev_set, n_values, config: RankerConfig) -> SweepResult:
    """Retrain at each document-count cap and record dev accuracy.

    Each candidate's document list is truncated to its first n columns
    (lists are stored best-lexical-first, so caps nest: the n=a list is a
    prefix of the n=b list for a < b).  An n exceeding the available
    document count uses what is there and is flagged.
    """
    n_values = list(n_values)
    max_docs = max(
        (m.n_docs for inst in list(train_set) + list(dev_set)
         for m in inst.matrices),
        default=0,
    )
    points = []
    flagged = []
    for n in n_values:
        if n < 1:
            raise QaError(f"document count must be >= 1, got {n}")
        if n > max_docs:
            flagged.append(n)
        truncated_train = [truncate_instance(inst, n) for inst in train_set]
        truncated_dev = [truncate_instance(inst, n) for inst in dev_set]
        result = train(truncated_train, truncated_dev, config)
        points.append((n, accuracy(result.params, truncated_dev).accuracy))
    return SweepResult(
        points=points,
        seeds=[config.seed + r for r in range(config.restarts)],
        flagged=flagged,
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _percent(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def _markdown(obj) -> str:
    d = obj.to_dict()
    if d["kind"] == "eval":
        lines = [
            "| split | accuracy | correct | total |",
            "| --- | --- | --- | --- |",
            f"| {d['split']} | {_percent(d['accuracy'])} | "
            f"{d['correct']} | {d['total']} |",
        ]
    elif d["kind"] == "ablation":
        header = "| dataset | " + " | ".join(d["columns"]) + " |"
        sep = "| --- |" + " --- |" * len(d["columns"])
        row = (
            f"| {d['dataset']} | "
            + " | ".join(_percent(a) for a in d["accuracies"])
            + " |"
        )
        lines = [header, sep, row]
        for name, value in sorted(d["reference"].items()):
            lines.append(f"| {name} (reference) | {value} |")
    else:
        lines = ["| n_docs | dev accuracy |", "| --- | --- |"]
        lines += [f"| {n} | {_percent(acc)} |" for n, acc in d["points"]]
    return "\n".join(lines) + "\n"


def _csv_rows(obj):
    d = obj.to_dict()
    if d["kind"] == "eval":
        yield ["question_id", "predicted", "gold", "correct"]
        for p in d["predictions"]:
            yield [p["question_id"], p["predicted"], p["gold"], p["correct"]]
    elif d["kind"] == "ablation":
        yield ["dataset"] + d["columns"]
        yield [d["dataset"]] + [repr(a) for a in d["accuracies"]]
    else:
        yield ["n_docs", "dev_accuracy"]
        for n, acc in d["points"]:
            yield [n, repr(acc)]


def emit_report(obj, fmt: str, path: str | Path) -> None:
    """Serialize a report deterministically as json, csv, or markdown."""
    if fmt not in REPORT_FORMATS:
        raise QaError(f"unknown report format {fmt!r}; expected {REPORT_FORMATS}")
    path = Path(path)
    if fmt == "json":
        path.write_text(
            json.dumps(obj.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerows(_csv_rows(obj))
    else:
        path.write_text(_markdown(obj), encoding="utf-8")
