"""Discriminator score acquisition and score-matrix assembly.

Three score sources feed the ranker: the native lexical discriminator
(max-normalized BM25/TF-IDF), precomputed score files (TSV), and a remote
HTTP scoring service.  Each (question, candidate) pair yields one
K_disc x N matrix of scores in [0, 1], rows in a fixed discriminator order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import RemoteScoreError, ScoreError

# Fixed row order for the three standard discriminators; extensions sort after.
STANDARD_ORDER = ("tfd", "drd", "avd")


def discriminator_sort_key(disc_id: str):
    try:
        return (STANDARD_ORDER.index(disc_id), disc_id)
    except ValueError:
        return (len(STANDARD_ORDER), disc_id)


@dataclass
class ScoreMatrix:
    """Discriminator scores for one (question, candidate) pair.

    values[i, j] is the score of discriminator row_ids[i] on doc_ids[j].
    """

    question_id: str
    candidate_index: int
    doc_ids: tuple[str, ...]
    row_ids: tuple[str, ...]
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.doc_ids)):
            raise ScoreError(
                f"score matrix shape {self.values.shape} does not match "
                f"{len(self.row_ids)} discriminators x {len(self.doc_ids)} docs"
            )
        if self.values.size and (
            np.any(self.values < 0.0) or np.any(self.values > 1.0)
        ):
            raise ScoreError(
                f"question {self.question_id!r} candidate {self.candidate_index}: "
                f"score outside [0, 1]"
            )

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)


def tfd_score(index, question: str, answer: str, docs, scorer: str = "bm25"):
    """Max-normalized lexical score row for an ordered list of doc_ids.

    Raw scores are divided by the row maximum; an all-zero row stays zero.
    """
    from .index import query_tokens

    terms = query_tokens(question) | query_tokens(answer)
    raw = np.array(
        [index.lexical_score(terms, doc_id, scorer=scorer) for doc_id in docs],
        dtype=np.float64,
    )
    peak = raw.max(initial=0.0)
    return raw / peak if peak > 0.0 else raw


# ---------------------------------------------------------------------------
# Precomputed score files
# ---------------------------------------------------------------------------


class PrecomputedScoreStore:
    """Exact-key (question_id, candidate_index, doc_id, disc_id) -> score map.

    Backed by a TSV file: question_id, candidate_index, doc_id,
    discriminator_id, score.
    """

    def __init__(self, records=None):
        self._scores: dict[tuple[str, int, str, str], float] = {}
        for key, score in (records or {}).items():
            self.put(*key, score)

    def put(self, question_id, candidate_index, doc_id, disc_id, score) -> None:
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ScoreError(
                f"score {score} outside [0, 1] for "
                f"({question_id}, {candidate_index}, {doc_id}, {disc_id})"
            )
        self._scores[(question_id, int(candidate_index), doc_id, disc_id)] = score

    def get(self, question_id, candidate_index, doc_id, disc_id):
        return self._scores.get((question_id, int(candidate_index), doc_id, disc_id))

    def __len__(self) -> int:
        return len(self._scores)

    def discriminator_ids(self) -> set[str]:
        return {key[3] for key in self._scores}

    @classmethod
    def load(cls, path: str | Path) -> "PrecomputedScoreStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 5:
                    raise ScoreError(
                        f"{path}: line {lineno}: expected 5 tab-separated fields, "
                        f"got {len(parts)}"
                    )
                qid, cand, doc_id, disc_id, score = parts
                try:
                    store.put(qid, int(cand), doc_id, disc_id, float(score))
                except (ValueError, ScoreError) as exc:
                    raise ScoreError(f"{path}: line {lineno}: {exc}") from exc
        return store

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (qid, cand, doc_id, disc_id), score in sorted(self._scores.items()):
                fh.write(f"{qid}\t{cand}\t{doc_id}\t{disc_id}\t{score!r}\n")

    def lookup_row(self, question_id, candidate_index, doc_ids, disc_id,
                   missing_score: float = 0.0):
        """Per-doc lookup; missing keys take missing_score.

        Returns (row, missing_count).
        """
        row = np.empty(len(doc_ids), dtype=np.float64)
        missing = 0
        for j, doc_id in enumerate(doc_ids):
            score = self.get(question_id, candidate_index, doc_id, disc_id)
            if score is None:
                row[j] = missing_score
                missing += 1
            else:
                row[j] = score
        return row, missing


# ---------------------------------------------------------------------------
# Remote scoring
# ---------------------------------------------------------------------------


@dataclass
class RemoteScorerConfig:
    base_url: str
    timeout_ms: int = 30_000
    max_batch: int = 100
    retry_count: int = 2
    cache_path: str | None = None

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ScoreError("timeout_ms must be positive")
        if self.max_batch < 1:
            raise ScoreError("max_batch must be >= 1")


def _item_cache_key(disc_id: str, item: dict) -> str:
    payload = json.dumps(
        {
            "discriminator": disc_id,
            "question": item["question"],
            "answer": item.get("answer"),
            "document": item["document"],
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class RemoteScorer:
    """Client for the POST /v1/score protocol, with batching and caching.

    Items are dicts {"question": str, "answer": str?, "document": str}.
    DRD items must omit "answer"; AVD items must include it.
    """

    def __init__(self, config: RemoteScorerConfig, session=None):
        self.config = config
        self.session = session or requests.Session()
        self.request_count = 0
        self._cache: dict[str, float] = {}
        if config.cache_path and Path(config.cache_path).exists():
            with open(config.cache_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self._cache[obj["key"]] = float(obj["score"])

    def _append_cache(self, entries) -> None:
        if not self.config.cache_path or not entries:
            return
        with open(self.config.cache_path, "a", encoding="utf-8") as fh:
            for key, score in entries:
                fh.write(json.dumps({"key": key, "score": score}) + "\n")

    def health(self) -> bool:
        try:
            resp = self.session.get(
                f"{self.config.base_url}/v1/health",
                timeout=self.config.timeout_ms / 1000.0,
            )
            return resp.status_code == 200 and resp.json().get("status") == "ok"
        except requests.RequestException:
            return False

    def score(self, disc_id: str, items) -> list[float]:
        items = list(items)
        for item in items:
            if disc_id == "drd" and "answer" in item and item["answer"] is not None:
                raise ScoreError("drd items must not carry an answer field")
            if disc_id == "avd" and item.get("answer") is None:
                raise ScoreError("avd items must carry an answer field")

        keys = [_item_cache_key(disc_id, item) for item in items]
        scores: list[float | None] = [self._cache.get(k) for k in keys]
        pending = [i for i, s in enumerate(scores) if s is None]

        new_entries = []
        for start in range(0, len(pending), self.config.max_batch):
            batch_idx = pending[start : start + self.config.max_batch]
            batch_scores = self._post_batch(disc_id, [items[i] for i in batch_idx],
                                            batch_idx[0], batch_idx[-1])
            for i, score in zip(batch_idx, batch_scores):
                scores[i] = score
                self._cache[keys[i]] = score
                new_entries.append((keys[i], score))
        self._append_cache(new_entries)
        return [float(s) for s in scores]

    def _post_batch(self, disc_id, batch, first, last) -> list[float]:
        payload = {"discriminator": disc_id, "items": batch}
        last_exc = None
        for _ in range(self.config.retry_count + 1):
            try:
                resp = self.session.post(
                    f"{self.config.base_url}/v1/score",
                    json=payload,
                    timeout=self.config.timeout_ms / 1000.0,
                )
                resp.raise_for_status()
                self.request_count += 1
                body = resp.json()
                scores = body.get("scores")
                if not isinstance(scores, list) or len(scores) != len(batch):
                    raise RemoteScoreError(
                        f"response scores length {len(scores) if isinstance(scores, list) else 'missing'} "
                        f"!= batch size {len(batch)}",
                        first, last,
                    )
                out = [float(s) for s in scores]
                for s in out:
                    if not 0.0 <= s <= 1.0:
                        raise RemoteScoreError(
                            f"score {s} outside [0, 1]", first, last
                        )
                return out
            except (requests.RequestException, ValueError) as exc:
                last_exc = exc
        raise RemoteScoreError(
            f"remote scoring failed for items {first}..{last}: {last_exc}",
            first, last,
        )


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble_score_matrix(
    question_id: str,
    candidate_index: int,
    doc_ids,
    rows: dict[str, np.ndarray],
    metadata: dict | None = None,
) -> ScoreMatrix:
    """Stack per-discriminator rows into a ScoreMatrix in fixed row order."""
    doc_ids = tuple(doc_ids)
    row_ids = tuple(sorted(rows, key=discriminator_sort_key))
    stacked = np.empty((len(row_ids), len(doc_ids)), dtype=np.float64)
    for i, disc_id in enumerate(row_ids):
        row = np.asarray(rows[disc_id], dtype=np.float64)
        if row.shape != (len(doc_ids),):
            raise ScoreError(
                f"discriminator {disc_id!r}: row length {row.shape} does not "
                f"match {len(doc_ids)} docs"
            )
        stacked[i] = row
    return ScoreMatrix(
        question_id=question_id,
        candidate_index=candidate_index,
        doc_ids=doc_ids,
        row_ids=row_ids,
        values=stacked,
        metadata=dict(metadata or {}),
    )
