import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qaranker.index import InvertedIndex
from qaranker.ranker import RankerConfig, RankerParams, RankingInstance
from qaranker.scores import assemble_score_matrix

TOY_SENTENCES = [
    ("d1", "Breaking a glass spreads small sharp glass pieces around the room."),
    ("d2", "Lighting a match starts a chemical reaction that produces heat."),
    ("d3", "A physical change like breaking or melting does not create a new substance."),
    ("d4", "The hydrogen atom has a single electron orbiting its nucleus."),
    ("d5", "Hydrogen is the lightest chemical element in the periodic table."),
]


@pytest.fixture
def toy_index():
    return InvertedIndex.build(TOY_SENTENCES, corpus_id="toy")


@pytest.fixture
def small_config():
    return RankerConfig(
        k_disc=3, proj_dim=8, key_dim=4, value_dim=4, hidden_dim=4,
        n_max=10, epochs=2, batch_size=8, restarts=1, seed=0,
    )


def random_params(config, seed=0):
    return RankerParams(config, rng=np.random.default_rng(seed))


def random_instance(rng, config, n_candidates=4, n_docs=None, question_id="q"):
    """Random RankingInstance matching a config's discriminator count."""
    matrices = []
    for cand in range(n_candidates):
        n = n_docs if n_docs is not None else int(rng.integers(1, 9))
        doc_ids = [f"{question_id}-{cand}-{j:03d}" for j in range(n)]
        rows = {
            f"disc{i}": rng.uniform(0.0, 1.0, size=n)
            for i in range(config.k_disc)
        }
        matrices.append(assemble_score_matrix(question_id, cand, doc_ids, rows))
    return RankingInstance(
        question_id=question_id,
        matrices=matrices,
        answer_index=int(rng.integers(n_candidates)),
    )
