"""Tokenization, inverted indexing, lexical scoring, and retrieval.

Documents are scored with Okapi BM25 by default; a classic TF-IDF variant
is selectable.  Queries follow an AND-of-groups scheme: a document is a
retrieval candidate only if it shares at least one token with the question
AND at least one token with the candidate answer (stopwords excluded).

Indexes are read-only after construction and safe for concurrent retrieval.
"""

from __future__ import annotations

import json
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusIndexError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Applied to queries only, never to indexed documents.
STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can cannot could did do does
    doing down during each few for from further had has have having he her here
    hers herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves""".split()
)

BM25_K1 = 1.2
BM25_B = 0.75

SCORERS = ("bm25", "classic-tfidf")


def tokenize(text: str) -> list[str]:
    """Lowercased maximal runs of alphanumeric code points, in order."""
    return _TOKEN_RE.findall(text.lower())


def query_tokens(text: str) -> set[str]:
    """Token set for query matching: tokenized, stopwords removed."""
    return set(tokenize(text)) - STOPWORDS


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    corpus_id: str
    text: str
    token_count: int


@dataclass
class RetrievedDoc:
    doc_id: str
    corpus_id: str
    score: float
    text: str


@dataclass
class RetrievalResult:
    docs: list[RetrievedDoc]
    degenerate: bool = False


class InvertedIndex:
    """Term -> postings map over one corpus, with BM25/TF-IDF scoring.

    Construction is order-independent: documents are canonicalized by
    ascending doc_id before postings are laid out, so any ingestion order
    yields bit-identical scores.
    """

    def __init__(self, corpus_id: str = "corpus"):
        self.corpus_id = corpus_id
        self.docs: list[DocumentRecord] = []  # sorted by doc_id after freeze
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self.avg_doc_len: float = 0.0
        self._doc_index: dict[str, int] = {}
        self._frozen = False

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, records, corpus_id: str = "corpus") -> "InvertedIndex":
        """Build from an iterable of DocumentRecord or (doc_id, text) pairs.

        Documents empty after tokenization are dropped.
        """
        staged: dict[str, DocumentRecord] = {}
        for rec in records:
            if not isinstance(rec, DocumentRecord):
                doc_id, text = rec
                rec = DocumentRecord(doc_id, corpus_id, text, len(tokenize(text)))
            if rec.doc_id in staged:
                raise CorpusIndexError(f"duplicate doc_id {rec.doc_id!r}")
            if rec.token_count == 0:
                continue
            staged[rec.doc_id] = rec
        index = cls(corpus_id=corpus_id)
        for doc_id in sorted(staged):
            index._add(staged[doc_id])
        index._freeze()
        return index

    def _add(self, rec: DocumentRecord) -> None:
        doc_ref = len(self.docs)
        self.docs.append(rec)
        self._doc_index[rec.doc_id] = doc_ref
        for term, tf in sorted(Counter(tokenize(rec.text)).items()):
            self.postings.setdefault(term, []).append((doc_ref, tf))

    def _freeze(self) -> None:
        n = len(self.docs)
        self.avg_doc_len = (
            sum(d.token_count for d in self.docs) / n if n else 0.0
        )
        self._frozen = True

    # -- stats --------------------------------------------------------------

    @property
    def num_docs(self) -> int:
        return len(self.docs)

    def doc_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def term_frequency(self, term: str, doc_id: str) -> int:
        doc_ref = self._require_doc(doc_id)
        for ref, tf in self.postings.get(term, ()):
            if ref == doc_ref:
                return tf
        return 0

    def get_document(self, doc_id: str) -> DocumentRecord:
        return self.docs[self._require_doc(doc_id)]

    def _require_doc(self, doc_id: str) -> int:
        try:
            return self._doc_index[doc_id]
        except KeyError:
            raise CorpusIndexError(f"unknown doc_id {doc_id!r}") from None

    # -- scoring ------------------------------------------------------------

    def _idf_bm25(self, term: str) -> float:
        df = self.doc_frequency(term)
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))

    def _idf_classic(self, term: str) -> float:
        df = self.doc_frequency(term)
        if df == 0:
            return 0.0
        return math.log(1.0 + self.num_docs / df)

    def _term_maps(self, terms, scorer: str):
        """Per-term (idf, {doc_ref: tf}) lookup tables, in sorted term order."""
        idf = self._idf_bm25 if scorer == "bm25" else self._idf_classic
        return [
            (term, idf(term), dict(self.postings.get(term, ())))
            for term in sorted(set(terms))
        ]

    def _score_ref(self, doc_ref: int, term_maps, scorer: str) -> float:
        doc = self.docs[doc_ref]
        score = 0.0
        for term, idf, tf_map in term_maps:
            tf = tf_map.get(doc_ref, 0)
            if tf == 0:
                continue
            if scorer == "bm25":
                norm = BM25_K1 * (
                    1.0 - BM25_B + BM25_B * doc.token_count / self.avg_doc_len
                )
                score += idf * tf * (BM25_K1 + 1.0) / (tf + norm)
            else:
                score += tf * idf
        return score

    def lexical_score(self, terms, doc_id: str, scorer: str = "bm25") -> float:
        """Score one document against a set of query terms.

        bm25: sum over terms of idf(t) * tf*(k1+1) / (tf + k1*(1-b+b*dl/avgdl))
        with idf(t) = ln(1 + (N-df+0.5)/(df+0.5)).
        classic-tfidf: sum over terms of tf * ln(1 + N/df).
        Terms absent from the document (or the index) contribute 0.
        """
        if scorer not in SCORERS:
            raise CorpusIndexError(f"unknown scorer {scorer!r}")
        doc_ref = self._require_doc(doc_id)
        return self._score_ref(doc_ref, self._term_maps(terms, scorer), scorer)

    # -- retrieval ----------------------------------------------------------

    def retrieve(
        self,
        question: str,
        answer: str,
        top_k: int,
        scorer: str = "bm25",
    ) -> RetrievalResult:
        """Top-k documents matching >=1 question token AND >=1 answer token.

        If either token group is empty after stopword removal, only the
        non-empty group is required and the result is flagged degenerate.
        Ranked by lexical score over the union of both groups, descending;
        ties broken by ascending doc_id.
        """
        if top_k < 1:
            raise CorpusIndexError(f"top_k must be >= 1, got {top_k}")
        q_tokens = query_tokens(question)
        a_tokens = query_tokens(answer)
        degenerate = not q_tokens or not a_tokens
        groups = [g for g in (q_tokens, a_tokens) if g]
        if not groups:
            return RetrievalResult(docs=[], degenerate=True)

        candidate_refs = None
        for group in groups:
            refs = set()
            for term in group:
                refs.update(ref for ref, _ in self.postings.get(term, ()))
            candidate_refs = refs if candidate_refs is None else candidate_refs & refs

        if scorer not in SCORERS:
            raise CorpusIndexError(f"unknown scorer {scorer!r}")
        term_maps = self._term_maps(q_tokens | a_tokens, scorer)
        scored = []
        for ref in candidate_refs:
            doc = self.docs[ref]
            scored.append((-self._score_ref(ref, term_maps, scorer), doc.doc_id, doc))
        scored.sort(key=lambda item: (item[0], item[1]))
        docs = [
            RetrievedDoc(doc.doc_id, doc.corpus_id, -neg, doc.text)
            for neg, _, doc in scored[:top_k]
        ]
        return RetrievalResult(docs=docs, degenerate=degenerate)


def retrieve_multi(
    indices_with_quotas, question: str, answer: str, scorer: str = "bm25"
) -> RetrievalResult:
    """Concatenate per-index retrievals, each capped at its quota.

    Per-index order is preserved; no global re-sort.  A shortfall in one
    corpus is not backfilled from another.
    """
    docs = []
    degenerate = False
    for index, quota in indices_with_quotas:
        if quota < 1:
            raise CorpusIndexError(f"quota must be positive, got {quota}")
        result = index.retrieve(question, answer, top_k=quota, scorer=scorer)
        degenerate = degenerate or result.degenerate
        docs.extend(result.docs)
    return RetrievalResult(docs=docs, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Persistence: single file, versioned header, little-endian fixed-width ints
# ---------------------------------------------------------------------------

_MAGIC = b"QAIX"
_VERSION = 1


def _write_bytes(fh, data: bytes) -> None:
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorpusIndexError("truncated index file")
    return data


def _read_bytes(fh) -> bytes:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        _write_bytes(fh, index.corpus_id.encode("utf-8"))
        fh.write(struct.pack("<I", len(index.docs)))
        for doc in index.docs:
            _write_bytes(fh, doc.doc_id.encode("utf-8"))
            _write_bytes(fh, doc.corpus_id.encode("utf-8"))
            _write_bytes(fh, doc.text.encode("utf-8"))
            fh.write(struct.pack("<I", doc.token_count))
        fh.write(struct.pack("<I", len(index.postings)))
        for term in sorted(index.postings):
            postings = index.postings[term]
            _write_bytes(fh, term.encode("utf-8"))
            fh.write(struct.pack("<I", len(postings)))
            for doc_ref, tf in postings:
                fh.write(struct.pack("<II", doc_ref, tf))


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise CorpusIndexError(f"{path}: not an index file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != _VERSION:
            raise CorpusIndexError(
                f"{path}: unsupported index version {version} (expected {_VERSION})"
            )
        corpus_id = _read_bytes(fh).decode("utf-8")
        index = InvertedIndex(corpus_id=corpus_id)
        (n_docs,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(n_docs):
            doc_id = _read_bytes(fh).decode("utf-8")
            doc_corpus = _read_bytes(fh).decode("utf-8")
            text = _read_bytes(fh).decode("utf-8")
            (token_count,) = struct.unpack("<I", _read_exact(fh, 4))
            rec = DocumentRecord(doc_id, doc_corpus, text, token_count)
            index._doc_index[rec.doc_id] = len(index.docs)
            index.docs.append(rec)
        (n_terms,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(n_terms):
            term = _read_bytes(fh).decode("utf-8")
            (n_post,) = struct.unpack("<I", _read_exact(fh, 4))
            postings = []
            for _ in range(n_post):
                doc_ref, tf = struct.unpack("<II", _read_exact(fh, 8))
                postings.append((doc_ref, tf))
            index.postings[term] = postings
        index._freeze()
        return index


# ---------------------------------------------------------------------------
# Corpus ingestion
# ---------------------------------------------------------------------------


def load_corpus(path: str | Path, corpus_id: str | None = None):
    """Yield DocumentRecords from a JSONL corpus or plain text (one doc/line).

    JSONL lines look like {"doc_id": str, "corpus_id": str, "text": str};
    plain-text lines get auto-assigned ids <corpus_id>-NNNNNN.
    """
    path = Path(path)
    default_corpus = corpus_id or path.stem
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                obj = json.loads(line)
                text = obj["text"]
                yield DocumentRecord(
                    doc_id=str(obj["doc_id"]),
                    corpus_id=str(obj.get("corpus_id", default_corpus)),
                    text=text,
                    token_count=len(tokenize(text)),
                )
            else:
                yield DocumentRecord(
                    doc_id=f"{default_corpus}-{lineno:06d}",
                    corpus_id=default_corpus,
                    text=line,
                    token_count=len(tokenize(line)),
                )
