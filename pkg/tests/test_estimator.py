import numpy as np
import pytest
from sklearn.base import clone

from qaranker.errors import QaError
from qaranker.estimator import AttentiveRankerClassifier
from qaranker.synth import separable_task


@pytest.fixture(scope="module")
def fitted():
    clf = AttentiveRankerClassifier(
        proj_dim=8, key_dim=4, value_dim=4, hidden_dim=8,
        epochs=15, batch_size=16, restarts=1, seed=0,
    )
    return clf.fit(separable_task(80, seed=1))


def test_get_set_params_roundtrip():
    clf = AttentiveRankerClassifier(epochs=7)
    assert clf.get_params()["epochs"] == 7
    clf.set_params(epochs=3, seed=9)
    assert clf.epochs == 3 and clf.seed == 9


def test_clone_keeps_hyperparameters():
    clf = AttentiveRankerClassifier(proj_dim=8, restarts=2)
    cloned = clone(clf)
    assert cloned.get_params() == clf.get_params()


def test_fit_predict_score(fitted):
    held_out = separable_task(40, seed=2)
    assert fitted.score(held_out) >= 0.9
    probs = fitted.predict_proba(held_out[:3])
    for p in probs:
        assert abs(p.sum() - 1.0) < 1e-12


def test_predict_before_fit_rejected():
    clf = AttentiveRankerClassifier()
    with pytest.raises(QaError, match="fit"):
        clf.predict(separable_task(2, seed=3))


def test_labels_via_y(fitted):
    held_out = separable_task(10, seed=4)
    y = [inst.answer_index for inst in held_out]
    stripped = separable_task(10, seed=4)
    for inst in stripped:
        inst.answer_index = None
    assert fitted.score(stripped, y=y) == fitted.score(held_out)


def test_bad_input_type():
    clf = AttentiveRankerClassifier()
    with pytest.raises(QaError, match="RankingInstance"):
        clf.fit([np.zeros(3)])
