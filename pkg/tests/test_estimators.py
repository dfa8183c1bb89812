import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gcpstereo.estimators import SGMStereo, SiameseConfidenceNet, check_pairs
from gcpstereo.synthetic import random_dot_dataset


@pytest.fixture(scope="module")
def data():
    frames = random_dot_dataset(4, (20, 20), 5, seed=3)
    return [(l, r) for l, r, _ in frames], [g for _, _, g in frames]


class TestCheckPairs:
    def test_empty(self):
        with pytest.raises(ValueError):
            check_pairs([])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            check_pairs([(np.zeros((3, 3)), np.zeros((3, 4)))])

    def test_gt_mismatch(self):
        with pytest.raises(ValueError):
            check_pairs([(np.zeros((3, 3)), np.zeros((3, 3)))], [np.zeros((2, 2))])
        with pytest.raises(ValueError):
            check_pairs([(np.zeros((3, 3)), np.zeros((3, 3)))], [])


class TestSiameseConfidenceNet:
    def test_params_api(self):
        net = SiameseConfidenceNet(d_max=7, epochs=2)
        assert net.get_params()["d_max"] == 7
        assert clone(net).get_params() == net.get_params()

    def test_not_fitted(self, data):
        with pytest.raises(NotFittedError):
            SiameseConfidenceNet().transform(data[0])

    def test_fit_transform_predict(self, data):
        X, y = data
        net = SiameseConfidenceNet(d_max=5, epochs=1).fit(X, y)
        assert len(net.loss_curve_) == 2
        vols = net.transform(X)
        assert vols[0].shape == (20, 20, 6) and vols[0].min() >= 0 and vols[0].max() <= 1
        preds = net.predict(X)
        np.testing.assert_array_equal(preds[0], vols[0].argmax(axis=2))


class TestSGMStereo:
    def test_baseline(self, data):
        X, y = data
        est = SGMStereo(d_max=5).fit()
        preds = est.predict(X)
        assert preds[0].shape == (20, 20)
        assert 0 <= est.score(X, y) <= 1

    def test_not_fitted(self, data):
        with pytest.raises(NotFittedError):
            SGMStereo().predict(data[0])

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SGMStereo(cost="ssd").fit()

    def test_with_net(self, data):
        X, y = data
        net = SiameseConfidenceNet(d_max=5, epochs=1)
        est = SGMStereo(d_max=5, confidence_net=net).fit(X, y)
        assert est.net_ is not net and hasattr(est.net_, "params_")
        details = est.predict_details(X[:1])
        assert details[0].mask is not None

    def test_prefitted_net_kept(self, data):
        X, y = data
        net = SiameseConfidenceNet(d_max=5, epochs=1).fit(X, y)
        est = SGMStereo(d_max=5, confidence_net=net, refit_net=False).fit()
        assert est.net_ is net

    def test_net_needs_data(self):
        with pytest.raises(ValueError):
            SGMStereo(confidence_net=SiameseConfidenceNet()).fit()
