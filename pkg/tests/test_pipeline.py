import pytest

from conftest import TOY_SENTENCES
from qaranker.data import Question
from qaranker.errors import ScoreError
from qaranker.index import InvertedIndex
from qaranker.pipeline import (
    build_instances,
    copy_rows_from_store,
    load_retrievals,
    require_discriminators,
    retrievals_by_question,
    run_retrieval,
    save_retrievals,
    tfd_rows_from_retrievals,
)
from qaranker.scores import PrecomputedScoreStore


@pytest.fixture
def questions():
    return [
        Question("q1", "what is a physical change",
                 ("breaking a glass", "burning gasoline"), 0),
        Question("q2", "what orbits the hydrogen nucleus",
                 ("a single electron", "sunlight energy"), 0),
    ]


@pytest.fixture
def records(toy_index, questions):
    return run_retrieval(questions, [(toy_index, 3)])


class TestRetrievalRecords:
    def test_one_record_per_candidate(self, records, questions):
        want = sum(len(q.candidates) for q in questions)
        assert len(records) == want

    def test_docs_carry_text_and_corpus(self, records, toy_index):
        for rec in records:
            for doc in rec.docs:
                assert doc["text"] == toy_index.get_document(doc["doc_id"]).text
                assert doc["corpus_id"] == toy_index.corpus_id

    def test_jsonl_round_trip(self, records, tmp_path):
        path = tmp_path / "r.jsonl"
        save_retrievals(records, path)
        loaded = load_retrievals(path)
        assert len(loaded) == len(records)
        for a, b in zip(loaded, records):
            assert a.question_id == b.question_id
            assert a.candidate_index == b.candidate_index
            assert a.degenerate == b.degenerate
            assert a.docs == b.docs

    def test_grouping(self, records):
        by_q = retrievals_by_question(records)
        assert set(by_q) == {"q1", "q2"}
        assert set(by_q["q1"]) == {0, 1}


class TestStoreFilling:
    def test_tfd_rows_normalized(self, records):
        store = PrecomputedScoreStore()
        tfd_rows_from_retrievals(records, store)
        for rec in records:
            row, missing = store.lookup_row(
                rec.question_id, rec.candidate_index, rec.doc_ids, "tfd")
            assert missing == 0
            if rec.docs:
                assert row.max() == 1.0
                raw = [d["score"] for d in rec.docs]
                peak = max(raw)
                for got, want in zip(row, raw):
                    assert got == pytest.approx(want / peak, rel=1e-12)

    def test_copy_counts_missing(self, records):
        source = PrecomputedScoreStore()
        first = records[0]
        source.put(first.question_id, first.candidate_index,
                   first.doc_ids[0], "drd", 0.5)
        dest = PrecomputedScoreStore()
        missing = copy_rows_from_store(records, source, "drd", dest)
        total_docs = sum(len(r.docs) for r in records)
        assert missing == total_docs - 1
        assert dest.get(first.question_id, first.candidate_index,
                        first.doc_ids[0], "drd") == 0.5

    def test_require_discriminators(self, records):
        store = PrecomputedScoreStore()
        tfd_rows_from_retrievals(records, store)
        require_discriminators(store, ["tfd"])
        with pytest.raises(ScoreError, match="drd"):
            require_discriminators(store, ["tfd", "drd"])


class TestBuildInstances:
    def test_shapes_and_rows(self, questions, records):
        store = PrecomputedScoreStore()
        tfd_rows_from_retrievals(records, store)
        copy_rows_from_store(records, PrecomputedScoreStore(), "drd", store,
                             missing_score=0.25)
        instances = build_instances(questions, records, store, ["drd", "tfd"])
        assert len(instances) == 2
        for inst, q in zip(instances, questions):
            assert inst.answer_index == q.answer_index
            for m in inst.matrices:
                assert m.row_ids == ("tfd", "drd")
                assert m.values.shape[0] == 2

    def test_n_max_truncates(self, questions, records):
        store = PrecomputedScoreStore()
        tfd_rows_from_retrievals(records, store)
        instances = build_instances(questions, records, store, ["tfd"], n_max=1)
        for inst in instances:
            for m in inst.matrices:
                assert m.n_docs <= 1

    def test_candidate_without_retrievals_gets_empty_matrix(self, toy_index):
        q = Question("q9", "qqq zzz", ("xxx yyy", "vvv www"), 0)
        records = run_retrieval([q], [(toy_index, 3)])
        assert all(rec.degenerate or not rec.docs for rec in records)
        store = PrecomputedScoreStore()
        tfd_rows_from_retrievals(records, store)
        store.put("other", 0, "d1", "tfd", 1.0)
        instances = build_instances([q], records, store, ["tfd"])
        assert all(m.n_docs == 0 for m in instances[0].matrices)
