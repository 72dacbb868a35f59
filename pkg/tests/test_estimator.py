import numpy as np
import pytest
from sklearn.base import clone

from disorder_unet.estimator import DisorderUnetClassifier, DisorderUnetEnsemble
from disorder_unet.errors import ShapeError
from disorder_unet.synthetic import planted_records

SMALL = dict(filters_per_level=(8, 16, 16), dropout_rate=0.0, max_len=128, max_epochs=4)
QUICK = {**SMALL, "max_epochs": 1}


@pytest.fixture(scope="module")
def data():
    records, emb = planted_records(30, length=32, dim=16, seed=4)
    return [emb[r.id] for r in records], [r.labels for r in records]


def test_get_params_and_clone():
    est = DisorderUnetClassifier(**SMALL, random_state=3)
    params = est.get_params()
    assert params["random_state"] == 3 and params["filters_per_level"] == (8, 16, 16)
    assert clone(est).get_params() == params
    ens = DisorderUnetEnsemble(n_folds=3, **SMALL)
    assert ens.get_params()["n_folds"] == 3
    assert clone(ens).get_params() == ens.get_params()


def test_fit_predict_score(data):
    X, y = data
    est = DisorderUnetClassifier(**SMALL).fit(X, y)
    proba = est.predict_proba(X[:2])
    assert proba[0].shape == (X[0].shape[0], 2)
    np.testing.assert_allclose(proba[0].sum(axis=1), 1.0)
    pred = est.predict(X[:2])
    assert set(np.unique(np.concatenate(pred))) <= {0, 1}
    assert est.score(X, y) > 0.5


def test_fit_is_deterministic(data):
    X, y = data
    a = DisorderUnetClassifier(**SMALL).fit(X, y)
    b = DisorderUnetClassifier(**SMALL).fit(X, y)
    assert all(a.params_[k].tobytes() == b.params_[k].tobytes() for k in a.params_)


def test_save_and_reload(tmp_path, data):
    X, y = data
    est = DisorderUnetClassifier(**QUICK).fit(X, y)
    est.save(tmp_path / "m.dunl")
    back = DisorderUnetClassifier.from_checkpoint(tmp_path / "m.dunl")
    assert back.predict_proba(X[:3])[2].tobytes() == est.predict_proba(X[:3])[2].tobytes()


def test_feature_mismatch(data):
    X, y = data
    est = DisorderUnetClassifier(**QUICK).fit(X, y)
    with pytest.raises(ShapeError):
        est.predict_proba([np.zeros((8, 15))])


def test_ensemble(data):
    X, y = data
    ens = DisorderUnetEnsemble(n_folds=3, **QUICK).fit(X, y)
    assert len(ens.members_) == 3
    assert np.bincount(ens.folds_).tolist() == [10, 10, 10]
    p = ens.predict_proba(X[:1])[0]
    assert p.shape == (X[0].shape[0], 2)
    assert np.all((p >= 0) & (p <= 1))
