import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vqcbench.estimators import VQCClassifier, VQCRegressor
from vqcbench.exceptions import ConfigurationError


def toy_regression(rng, n=40):
    X = rng.normal(size=(n, 4))
    return X, np.sin(X[:, 0]) + 0.5 * X[:, 1]


def test_get_set_params_and_clone():
    est = VQCRegressor(architecture="fqt", epochs=3)
    assert est.get_params()["architecture"] == "fqt"
    est.set_params(depth=2)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est


def test_not_fitted():
    with pytest.raises(NotFittedError):
        VQCRegressor().predict(np.zeros((1, 3)))


def test_regressor_fit_predict(rng):
    X, y = toy_regression(rng)
    est = VQCRegressor(architecture="fc_vqc", stages=1, epochs=30, random_state=0).fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (40,) and np.all(np.isfinite(pred))
    assert est.fit_result_.train_loss[-1] < est.fit_result_.train_loss[0]
    assert est.n_features_in_ == 4


def test_regressor_reproducible(rng):
    X, y = toy_regression(rng)
    a = VQCRegressor(architecture="qt", epochs=3, random_state=5).fit(X, y).predict(X)
    b = VQCRegressor(architecture="qt", epochs=3, random_state=5).fit(X, y).predict(X)
    assert np.array_equal(a, b)


def test_classifier_proba(rng):
    X = rng.normal(size=(30, 5))
    y = np.array(["lo", "mid", "hi"])[rng.integers(0, 3, 30)]
    est = VQCClassifier(architecture="fqt", epochs=3, random_state=0).fit(X, y)
    proba = est.predict_proba(X)
    assert proba.shape == (30, 3) and np.allclose(proba.sum(1), 1)
    assert set(est.predict(X)) <= set(est.classes_)


def test_single_class_rejected(rng):
    with pytest.raises(ConfigurationError):
        VQCClassifier(epochs=1).fit(rng.normal(size=(5, 3)), np.zeros(5))


def test_noise_in_range_required(rng):
    X, y = toy_regression(rng, 12)
    with pytest.raises(ConfigurationError):
        VQCRegressor(noise=0.9, epochs=1).fit(X, y)
