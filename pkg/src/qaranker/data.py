"""Multiple-choice QA dataset loading, validation, and conversion.

Canonical on-disk format is JSON lines, one question per line:

    {"id": str, "question": str, "candidates": [str], "answer_index": int?}

Datasets are immutable after loading and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class Question:
    """One multiple-choice question: the unit of prediction."""

    id: str
    text: str
    candidates: tuple[str, ...]
    answer_index: int | None = None

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise DataError(f"question {self.id!r}: needs >= 2 candidates")
        if any(not c for c in self.candidates):
            raise DataError(f"question {self.id!r}: empty candidate text")
        if len(set(self.candidates)) != len(self.candidates):
            raise DataError(f"question {self.id!r}: duplicate candidate texts")
        if self.answer_index is not None and not (
            0 <= self.answer_index < len(self.candidates)
        ):
            raise DataError(
                f"question {self.id!r}: answer_index {self.answer_index} out of "
                f"range for {len(self.candidates)} candidates"
            )

    @property
    def labeled(self) -> bool:
        return self.answer_index is not None


@dataclass(frozen=True)
class QaDataset:
    name: str
    splits: dict[str, tuple[Question, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for split, questions in self.splits.items():
            if split not in SPLIT_NAMES:
                raise DataError(f"unknown split name {split!r}")
            seen = set()
            for q in questions:
                if q.id in seen:
                    raise DataError(f"duplicate question id {q.id!r} in split {split!r}")
                seen.add(q.id)

    def split(self, name: str) -> tuple[Question, ...]:
        return self.splits.get(name, ())


@dataclass(frozen=True)
class ValidationReport:
    """Per-split statistics; construction never fails."""

    split_counts: dict[str, int]
    candidate_histogram: dict[str, dict[int, int]]
    labeled_fraction: dict[str, float]


def _parse_question(obj: dict, lineno: int) -> Question:
    for key in ("id", "question", "candidates"):
        if key not in obj:
            raise DataError(f"line {lineno}: missing key {key!r}")
    answer_index = obj.get("answer_index")
    if answer_index is not None and not isinstance(answer_index, int):
        raise DataError(f"line {lineno}: answer_index must be an integer")
    try:
        return Question(
            id=str(obj["id"]),
            text=str(obj["question"]),
            candidates=tuple(str(c) for c in obj["candidates"]),
            answer_index=answer_index,
        )
    except DataError as exc:
        raise DataError(f"line {lineno}: {exc}") from exc


def load_questions(path: str | Path) -> tuple[Question, ...]:
    """Load one JSONL split file, preserving record order."""
    questions = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            q = _parse_question(obj, lineno)
            if q.id in seen:
                raise DataError(f"{path}: line {lineno}: duplicate id {q.id!r}")
            seen.add(q.id)
            questions.append(q)
    return tuple(questions)


def load_dataset(path: str | Path, name: str | None = None) -> QaDataset:
    """Load a dataset from a directory of <split>.jsonl files or one file.

    A single file is loaded as the "train" split.
    """
    path = Path(path)
    if path.is_dir():
        splits = {}
        for split in SPLIT_NAMES:
            split_path = path / f"{split}.jsonl"
            if split_path.exists():
                splits[split] = load_questions(split_path)
        if not splits:
            raise DataError(f"{path}: no train/dev/test .jsonl files found")
        return QaDataset(name=name or path.name, splits=splits)
    return QaDataset(name=name or path.stem, splits={"train": load_questions(path)})


def save_questions(questions, path: str | Path) -> None:
    """Write questions as JSONL; inverse of load_questions."""
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            obj = {"id": q.id, "question": q.text, "candidates": list(q.candidates)}
            if q.answer_index is not None:
                obj["answer_index"] = q.answer_index
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def save_dataset(ds: QaDataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for split, questions in ds.splits.items():
        save_questions(questions, path / f"{split}.jsonl")


def validate_dataset(ds: QaDataset) -> ValidationReport:
    split_counts = {}
    histograms = {}
    labeled_fraction = {}
    for split, questions in ds.splits.items():
        split_counts[split] = len(questions)
        histograms[split] = dict(Counter(len(q.candidates) for q in questions))
        n_labeled = sum(1 for q in questions if q.labeled)
        labeled_fraction[split] = n_labeled / len(questions) if questions else 0.0
    return ValidationReport(
        split_counts=split_counts,
        candidate_histogram=histograms,
        labeled_fraction=labeled_fraction,
    )


# ---------------------------------------------------------------------------
# ARC CSV conversion
# ---------------------------------------------------------------------------

# Candidate markers in the embedded question text: (A) ... (B) ... or (1) ... (2) ...
_CHOICE_RE = re.compile(r"\(([A-H1-8])\)")

_LETTER_KEYS = "ABCDEFGH"


def _split_arc_question(text: str) -> tuple[str, list[str], list[str]]:
    """Split "stem (A) c1 (B) c2 ..." into stem, candidate texts, and keys."""
    matches = list(_CHOICE_RE.finditer(text))
    if len(matches) < 2:
        raise DataError(f"cannot find candidate markers in question: {text[:80]!r}")
    stem = text[: matches[0].start()].strip()
    keys = [m.group(1) for m in matches]
    candidates = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        candidates.append(text[m.end() : end].strip())
    return stem, candidates, keys


def convert_arc_csv(csv_path: str | Path) -> tuple[Question, ...]:
    """Convert one ARC-native CSV file into canonical questions.

    Rows whose embedded question text cannot be split into candidates are
    rejected with an error naming the question id.
    """
    questions = []
    with open(csv_path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "question" not in reader.fieldnames:
            raise DataError(f"{csv_path}: not an ARC CSV (no 'question' column)")
        for row in reader:
            qid = row.get("questionID") or row.get("id") or ""
            try:
                stem, candidates, keys = _split_arc_question(row["question"])
            except DataError as exc:
                raise DataError(f"{csv_path}: question {qid!r}: {exc}") from exc
            answer_index = None
            answer_key = (row.get("AnswerKey") or "").strip()
            if answer_key:
                if answer_key in keys:
                    answer_index = keys.index(answer_key)
                elif answer_key in _LETTER_KEYS and answer_key.isalpha():
                    answer_index = _LETTER_KEYS.index(answer_key)
                elif answer_key.isdigit():
                    answer_index = int(answer_key) - 1
                if answer_index is None or not (0 <= answer_index < len(candidates)):
                    raise DataError(
                        f"{csv_path}: question {qid!r}: answer key {answer_key!r} "
                        f"does not match any candidate"
                    )
            questions.append(
                Question(
                    id=qid,
                    text=stem,
                    candidates=tuple(candidates),
                    answer_index=answer_index,
                )
            )
    return tuple(questions)
