import dataclasses
import json

import numpy as np
import pytest

from conftest import random_params
from qaranker.data import Question
from qaranker.errors import QaError
from qaranker.evaluate import (
    AblationTable,
    EvalReport,
    SweepResult,
    ablation_run,
    accuracy,
    doc_count_sweep,
    emit_report,
    ir_baseline,
)
from qaranker.index import InvertedIndex
from qaranker.pipeline import truncate_instance
from qaranker.ranker import RankerConfig, predict, train
from qaranker.synth import project_rows, rank_displaced_task, separable_task


class TestAccuracy:
    def test_exact_fraction(self, small_config):
        train_set = separable_task(60, seed=1)
        config = dataclasses.replace(small_config, epochs=15, hidden_dim=8)
        result = train(train_set, separable_task(20, seed=2), config)
        eval_set = separable_task(8, seed=3)
        report = accuracy(result.params, eval_set)
        correct = sum(
            predict(i, result.params).predicted_index == i.answer_index
            for i in eval_set)
        assert report.correct == correct
        assert report.total == 8
        assert report.accuracy == correct / 8

    def test_unlabeled_rejected(self, small_config):
        params = random_params(small_config)
        inst = separable_task(1, seed=4)[0]
        inst.answer_index = None
        with pytest.raises(QaError, match="unlabeled"):
            accuracy(params, [inst])

    def test_all_correct(self, small_config):
        params = random_params(small_config, seed=5)
        insts = separable_task(5, seed=5)
        for inst in insts:
            inst.answer_index = predict(inst, params).predicted_index
        assert accuracy(params, insts).accuracy == 1.0


class TestIrBaseline:
    CORPUS = [
        ("d1", "breaking a glass is a physical change"),
        ("d2", "burning gasoline is a chemical change reaction"),
        ("d3", "the electron orbits the hydrogen nucleus"),
        ("d4", "iron rusting is oxidation a chemical reaction"),
        ("d5", "melting ice is another physical change of state"),
    ]

    def _questions(self):
        return [
            Question("q1", "example of a physical change",
                     ("breaking a glass", "burning gasoline"), 0),
            Question("q2", "what does a hydrogen atom contain",
                     ("an electron", "gasoline"), 0),
            Question("q3", "which is a chemical reaction",
                     ("melting ice", "burning gasoline"), 1),
        ]

    def test_matches_hand_computed_argmax(self):
        idx = InvertedIndex.build(self.CORPUS)
        questions = self._questions()
        report = ir_baseline([(idx, 3)], questions)
        # brute-force expectation
        for pred, q in zip(report.predictions, questions):
            best_scores = []
            for answer in q.candidates:
                result = idx.retrieve(q.text, answer, top_k=1)
                best_scores.append(result.docs[0].score if result.docs else 0.0)
            assert pred["predicted"] == int(np.argmax(best_scores))
        assert report.total == 3
        assert report.accuracy == report.correct / 3

    def test_only_retrieving_candidate_wins(self):
        idx = InvertedIndex.build(self.CORPUS)
        q = Question("q", "hydrogen nucleus electron",
                     ("electron orbits", "xylophone zebra"), 0)
        report = ir_baseline([(idx, 3)], [q])
        assert report.predictions[0]["predicted"] == 0
        assert report.accuracy == 1.0


class TestAblation:
    def _config(self):
        return RankerConfig(k_disc=3, proj_dim=8, key_dim=4, value_dim=4,
                            hidden_dim=8, epochs=12, batch_size=16,
                            restarts=1, seed=0)

    def test_single_subset_one_column(self):
        full = {
            "train": separable_task(30, seed=1),
            "dev": separable_task(10, seed=2),
            "test": separable_task(10, seed=3),
        }

        def make(subset):
            return tuple(project_rows(full[s], subset)
                         for s in ("train", "dev", "test"))

        table = ablation_run([("tfd",)], make, self._config())
        assert table.columns == ["tfd"]
        assert len(table.accuracies) == 1

    def test_informative_row_gap(self):
        # avd carries the only signal: the cumulative table must improve
        accs = {"tfd": [], "full": []}
        for seed in range(3):
            full = {
                "train": separable_task(60, seed=100 + seed),
                "dev": separable_task(20, seed=200 + seed),
                "test": separable_task(30, seed=300 + seed),
            }

            def make(subset):
                return tuple(project_rows(full[s], subset)
                             for s in ("train", "dev", "test"))

            config = dataclasses.replace(self._config(), seed=seed)
            table = ablation_run([("tfd",), ("tfd", "drd", "avd")], make, config)
            accs["tfd"].append(table.accuracies[0])
            accs["full"].append(table.accuracies[1])
        gap = np.mean(accs["full"]) - np.mean(accs["tfd"])
        assert gap >= 0.2

    def test_missing_source_fails_before_training(self):
        calls = []

        def make(subset):
            calls.append(subset)
            raise QaError(f"no scores for {subset}")

        with pytest.raises(QaError, match="no scores"):
            ablation_run([("tfd",), ("tfd", "drd")], make, self._config())
        assert calls == [("tfd",)]


class TestSweep:
    def test_single_point(self, small_config):
        train_set = separable_task(10, seed=1, n_docs=4)
        sweep = doc_count_sweep(train_set, train_set, [1], small_config)
        assert len(sweep.points) == 1
        assert sweep.points[0][0] == 1

    def test_truncation_is_prefix(self):
        insts = rank_displaced_task(5, seed=2)
        for inst in insts:
            small = truncate_instance(inst, 2)
            large = truncate_instance(inst, 4)
            for a, b in zip(small.matrices, large.matrices):
                assert a.doc_ids == b.doc_ids[:2]
                np.testing.assert_array_equal(a.values, b.values[:, :2])

    def test_n_exceeding_docs_flagged(self, small_config):
        train_set = separable_task(8, seed=3, n_docs=4)
        sweep = doc_count_sweep(train_set, train_set, [2, 99], small_config)
        assert sweep.flagged == [99]

    def test_non_increasing_rejected(self):
        with pytest.raises(QaError, match="increasing"):
            SweepResult(points=[(5, 0.5), (1, 0.4)], seeds=[0])

    def test_displaced_signal_improves_with_docs(self):
        config = RankerConfig(k_disc=3, proj_dim=8, key_dim=4, value_dim=4,
                              hidden_dim=8, epochs=12, batch_size=16,
                              restarts=1, seed=0)
        gains = []
        for seed in range(3):
            train_set = rank_displaced_task(60, seed=400 + seed)
            dev_set = rank_displaced_task(30, seed=500 + seed)
            cfg = dataclasses.replace(config, seed=seed)
            sweep = doc_count_sweep(train_set, dev_set, [1, 5], cfg)
            gains.append(sweep.points[1][1] - sweep.points[0][1])
        assert np.mean(gains) > 0.0


class TestEmitReport:
    def _report(self):
        return EvalReport(split="dev", accuracy=0.723, correct=723, total=1000,
                          predictions=[{"question_id": "q1", "predicted": 0,
                                        "gold": 0, "correct": True}])

    def test_markdown_percent_formatting(self, tmp_path):
        path = tmp_path / "r.md"
        emit_report(self._report(), "markdown", path)
        assert "72.30%" in path.read_text()

    def test_json_round_trip_byte_identical(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        emit_report(self._report(), "json", a)
        loaded = json.loads(a.read_text())
        report = EvalReport(
            split=loaded["split"], accuracy=loaded["accuracy"],
            correct=loaded["correct"], total=loaded["total"],
            predictions=loaded["predictions"],
            fingerprint=loaded["fingerprint"])
        emit_report(report, "json", b)
        assert a.read_bytes() == b.read_bytes()

    def test_csv_round_trips_values(self, tmp_path):
        table = AblationTable(dataset="d", columns=["tfd", "tfd+drd"],
                              accuracies=[1 / 3, 2 / 3], dev_accuracies=[0, 0])
        path = tmp_path / "t.csv"
        emit_report(table, "csv", path)
        import csv as csv_mod
        with open(path) as fh:
            rows = list(csv_mod.reader(fh))
        assert [float(eval(x)) for x in rows[1][1:]] == table.accuracies

    def test_empty_sweep_header_only(self, tmp_path):
        path = tmp_path / "s.csv"
        emit_report(SweepResult(points=[], seeds=[]), "csv", path)
        assert path.read_text().strip() == "n_docs,dev_accuracy"

    def test_unknown_format(self, tmp_path):
        with pytest.raises(QaError, match="format"):
            emit_report(self._report(), "xml", tmp_path / "x")
