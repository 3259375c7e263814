import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from eegconv import ConvNetClassifier, SpectralTopomapTransformer


def _images(rng, n=40):
    y = np.arange(n) % 2
    X = rng.random((n, 3, 24, 24)).astype(np.float32) * 0.5 + 0.5 * y[:, None, None, None]
    return X.astype(np.float32), y


def test_params_round_trip():
    clf = ConvNetClassifier(model="r_vgg", width=0.25, epochs=5)
    assert clf.get_params()["width"] == 0.25
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()


def test_fit_predict(rng):
    X, y = _images(rng)
    clf = ConvNetClassifier(width=0.125, init="he", epochs=15, eval_epoch=15, batch_size=10)
    assert clf.fit(X, y) is clf
    assert clf.selected_epoch_ == 15 and len(clf.curves_) == 15
    proba = clf.predict_proba(X)
    assert proba.shape == (40, 2) and np.allclose(proba.sum(axis=1), 1, atol=1e-6)
    np.testing.assert_array_equal(clf.predict(X), (proba[:, 1] >= 0.5).astype(int))
    assert clf.score(X, y) >= 0.9
    assert clf.input_kind == "chromatic"


def test_fit_is_seed_deterministic(rng):
    X, y = _images(rng, 20)
    kw = dict(width=0.125, epochs=2, batch_size=10, seed=5)
    a = ConvNetClassifier(**kw).fit(X, y).predict_proba(X)
    b = ConvNetClassifier(**kw).fit(X, y).predict_proba(X)
    assert a.tobytes() == b.tobytes()


def test_best_val_selection(rng):
    X, y = _images(rng, 20)
    clf = ConvNetClassifier(width=0.125, epochs=3, batch_size=10, selection="best_val")
    clf.fit(X, y, X_val=X, y_val=y)
    best = max(row["val_acc"] for row in clf.curves_)
    assert clf.curves_[clf.selected_epoch_ - 1]["val_acc"] == best
    with pytest.raises(ValueError):
        clone(clf).fit(X, y)


def test_validation_errors(rng):
    X, y = _images(rng, 10)
    with pytest.raises(NotFittedError):
        ConvNetClassifier().predict(X)
    with pytest.raises(ValueError):
        ConvNetClassifier(width=0.125, epochs=1).fit(X[:, :1], y)
    with pytest.raises(ValueError):
        ConvNetClassifier(width=0.125, epochs=1).fit(X, y + 1)
    with pytest.raises(ValueError):
        ConvNetClassifier(model="lenet").fit(X, y)


def test_raw_input_without_channel_axis(rng):
    X = rng.standard_normal((4, 24, 256)).astype(np.float32)
    clf = ConvNetClassifier(model="r_vgg", width=0.125, epochs=1, batch_size=4).fit(X, [0, 1] * 2)
    assert clf.predict_proba(X[:, None]).shape == (4, 2)


def test_transformer(rng, montage):
    X = rng.standard_normal((3, 24, 256))
    chrom = SpectralTopomapTransformer().fit_transform(X)
    assert chrom.shape == (3, 3, 24, 24) and chrom.dtype == np.float32
    side = SpectralTopomapTransformer(layout="side_by_side", output="uint8").fit(X).transform(X)
    assert side.shape == (3, 24, 72) and side.dtype == np.uint8
    np.testing.assert_array_equal(SpectralTopomapTransformer().fit(X).transform(X[:, None]), chrom)
    with pytest.raises(ValueError):
        SpectralTopomapTransformer(layout="stacked").fit(X)
    with pytest.raises(ValueError):
        SpectralTopomapTransformer().fit(X).transform(X[:, :10])


def test_pipeline(rng):
    X = rng.standard_normal((8, 24, 256))
    y = np.arange(8) % 2
    pipe = make_pipeline(SpectralTopomapTransformer(),
                         ConvNetClassifier(width=0.125, epochs=1, batch_size=8))
    assert pipe.fit(X, y).predict(X).shape == (8,)
