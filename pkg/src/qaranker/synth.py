"""Synthetic score-matrix generators for controlled experiments and tests.

Both generators produce RankingInstance lists directly, so they exercise the
model and harness without any text corpus.
"""

from __future__ import annotations

import numpy as np

from .ranker import RankingInstance
from .scores import assemble_score_matrix

ROW_IDS = ("tfd", "drd", "avd")


def _instance(qid, correct, per_candidate_rows, doc_prefix="doc"):
    matrices = []
    for cand_idx, rows in enumerate(per_candidate_rows):
        n_docs = len(next(iter(rows.values())))
        doc_ids = [f"{doc_prefix}-{qid}-{cand_idx}-{j:03d}" for j in range(n_docs)]
        matrices.append(assemble_score_matrix(qid, cand_idx, doc_ids, rows))
    return RankingInstance(question_id=qid, matrices=matrices, answer_index=correct)


def separable_task(n_questions: int, seed: int, n_candidates: int = 4,
                   n_docs: int = 10) -> list[RankingInstance]:
    """Task solvable by reading the avd row alone.

    The correct candidate's documents all carry avd score 0.9, wrong
    candidates 0.1; tfd and drd rows are uniform noise.
    """
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n_questions):
        correct = int(rng.integers(n_candidates))
        per_candidate = []
        for cand_idx in range(n_candidates):
            avd = 0.9 if cand_idx == correct else 0.1
            per_candidate.append({
                "tfd": rng.uniform(0.0, 1.0, size=n_docs),
                "drd": rng.uniform(0.0, 1.0, size=n_docs),
                "avd": np.full(n_docs, avd),
            })
        instances.append(_instance(f"sep-{seed}-{i:04d}", correct, per_candidate))
    return instances


def rank_displaced_task(n_questions: int, seed: int, n_candidates: int = 4,
                        n_docs: int = 5) -> list[RankingInstance]:
    """Task whose informative document is displaced down the lexical order.

    Document columns are in lexical-rank order.  The correct candidate has
    exactly one informative document (avd 0.9) at a rank drawn uniformly
    from 1..n_docs, so with n_docs=5 the signal sits beyond rank 1 with
    probability 0.8.  All other documents carry avd 0.1.  Truncating to the
    first column therefore hides the signal for most questions.
    """
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n_questions):
        correct = int(rng.integers(n_candidates))
        signal_rank = int(rng.integers(n_docs))
        per_candidate = []
        for cand_idx in range(n_candidates):
            avd = np.full(n_docs, 0.1)
            if cand_idx == correct:
                avd[signal_rank] = 0.9
            per_candidate.append({
                "tfd": rng.uniform(0.0, 1.0, size=n_docs),
                "drd": rng.uniform(0.0, 1.0, size=n_docs),
                "avd": avd,
            })
        instances.append(_instance(f"disp-{seed}-{i:04d}", correct, per_candidate))
    return instances


def project_rows(instances, disc_ids) -> list[RankingInstance]:
    """Restrict every matrix to a subset of discriminator rows."""
    out = []
    for inst in instances:
        matrices = []
        for m in inst.matrices:
            rows = {
                disc_id: m.values[list(m.row_ids).index(disc_id)]
                for disc_id in disc_ids
            }
            matrices.append(assemble_score_matrix(
                m.question_id, m.candidate_index, m.doc_ids, rows,
            ))
        out.append(RankingInstance(inst.question_id, matrices, inst.answer_index))
    return out
