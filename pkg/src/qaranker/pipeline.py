"""Glue between retrieval, scoring, and the ranker's instance format.

A "retrieval record" is one (question, candidate) pair with its ordered
retrieved documents, stored as JSONL:

    {"question_id": str, "candidate_index": int, "degenerate": bool,
     "docs": [{"doc_id": str, "corpus_id": str, "score": float, "text": str}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScoreError
from .index import retrieve_multi
from .ranker import RankingInstance
from .scores import (
    PrecomputedScoreStore,
    RemoteScorer,
    assemble_score_matrix,
    discriminator_sort_key,
)


@dataclass
class RetrievalRecord:
    question_id: str
    candidate_index: int
    docs: list[dict]
    degenerate: bool = False

    @property
    def doc_ids(self) -> list[str]:
        return [d["doc_id"] for d in self.docs]


def run_retrieval(questions, indices_with_quotas, scorer: str = "bm25"):
    """Retrieve documents for every (question, candidate) pair."""
    records = []
    for q in questions:
        for cand_idx, answer in enumerate(q.candidates):
            result = retrieve_multi(indices_with_quotas, q.text, answer, scorer=scorer)
            records.append(RetrievalRecord(
                question_id=q.id,
                candidate_index=cand_idx,
                docs=[
                    {"doc_id": d.doc_id, "corpus_id": d.corpus_id,
                     "score": d.score, "text": d.text}
                    for d in result.docs
                ],
                degenerate=result.degenerate,
            ))
    return records


def save_retrievals(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "question_id": rec.question_id,
                "candidate_index": rec.candidate_index,
                "degenerate": rec.degenerate,
                "docs": rec.docs,
            }, ensure_ascii=False) + "\n")


def load_retrievals(path: str | Path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(RetrievalRecord(
                    question_id=obj["question_id"],
                    candidate_index=int(obj["candidate_index"]),
                    docs=obj["docs"],
                    degenerate=bool(obj.get("degenerate", False)),
                ))
    return records


def retrievals_by_question(records) -> dict[str, dict[int, RetrievalRecord]]:
    by_q: dict[str, dict[int, RetrievalRecord]] = {}
    for rec in records:
        by_q.setdefault(rec.question_id, {})[rec.candidate_index] = rec
    return by_q


# ---------------------------------------------------------------------------
# Scoring retrievals into a PrecomputedScoreStore
# ---------------------------------------------------------------------------


def tfd_rows_from_retrievals(records, store: PrecomputedScoreStore) -> None:
    """Max-normalize the stored lexical scores into tfd rows of the store."""
    for rec in records:
        raw = np.array([d["score"] for d in rec.docs], dtype=np.float64)
        peak = raw.max(initial=0.0)
        row = raw / peak if peak > 0.0 else raw
        for doc, score in zip(rec.docs, row):
            store.put(rec.question_id, rec.candidate_index, doc["doc_id"],
                      "tfd", float(score))


def remote_rows_from_retrievals(records, questions_by_id, scorer: RemoteScorer,
                                disc_id: str, store: PrecomputedScoreStore) -> None:
    """Score every retrieved document through the remote service.

    drd items carry (question, document); avd items also carry the answer.
    """
    items = []
    keys = []
    for rec in records:
        question = questions_by_id[rec.question_id]
        for doc in rec.docs:
            item = {"question": question.text, "document": doc["text"]}
            if disc_id == "avd":
                item["answer"] = question.candidates[rec.candidate_index]
            items.append(item)
            keys.append((rec.question_id, rec.candidate_index, doc["doc_id"]))
    scores = scorer.score(disc_id, items)
    for (qid, cand, doc_id), score in zip(keys, scores):
        store.put(qid, cand, doc_id, disc_id, score)


def copy_rows_from_store(records, source: PrecomputedScoreStore, disc_id: str,
                         store: PrecomputedScoreStore,
                         missing_score: float = 0.0) -> int:
    """Copy one discriminator's scores for the retrieved docs; returns #missing."""
    missing = 0
    for rec in records:
        for doc_id in rec.doc_ids:
            score = source.get(rec.question_id, rec.candidate_index, doc_id, disc_id)
            if score is None:
                score = missing_score
                missing += 1
            store.put(rec.question_id, rec.candidate_index, doc_id, disc_id, score)
    return missing


# ---------------------------------------------------------------------------
# Instance assembly
# ---------------------------------------------------------------------------


def build_instances(questions, records, store: PrecomputedScoreStore,
                    disc_ids, n_max: int | None = None,
                    missing_score: float = 0.0) -> list[RankingInstance]:
    """Assemble one RankingInstance per question from retrievals and scores."""
    disc_ids = sorted(set(disc_ids), key=discriminator_sort_key)
    by_q = retrievals_by_question(records)
    instances = []
    for q in questions:
        matrices = []
        for cand_idx in range(len(q.candidates)):
            rec = by_q.get(q.id, {}).get(cand_idx)
            doc_ids = rec.doc_ids if rec is not None else []
            if n_max is not None:
                doc_ids = doc_ids[:n_max]
            rows = {}
            for disc_id in disc_ids:
                row, _ = store.lookup_row(q.id, cand_idx, doc_ids, disc_id,
                                          missing_score=missing_score)
                rows[disc_id] = row
            matrices.append(assemble_score_matrix(q.id, cand_idx, doc_ids, rows))
        instances.append(RankingInstance(
            question_id=q.id, matrices=matrices, answer_index=q.answer_index,
        ))
    return instances


def require_discriminators(store: PrecomputedScoreStore, disc_ids) -> None:
    """Fail before training if a discriminator has no scores at all."""
    present = store.discriminator_ids()
    missing = [d for d in disc_ids if d not in present]
    if missing:
        raise ScoreError(f"no scores available for discriminators: {missing}")


def truncate_instance(inst: RankingInstance, n: int) -> RankingInstance:
    """Keep only the first n document columns of every candidate matrix."""
    matrices = []
    for m in inst.matrices:
        matrices.append(assemble_score_matrix(
            m.question_id, m.candidate_index, m.doc_ids[:n],
            {disc_id: m.values[i, :n] for i, disc_id in enumerate(m.row_ids)},
        ))
    return RankingInstance(inst.question_id, matrices, inst.answer_index)
