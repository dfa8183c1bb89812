"""scikit-learn style estimators around the functional pipeline.

``X`` is a sequence of ``(left, right)`` image pairs and ``y`` a matching
sequence of ground-truth maps (NaN = unknown).  Image sizes may differ
between pairs, so outputs are lists rather than stacked arrays.
"""

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_pair
from .evaluate import error_rate
from .imageio import normalize
from .net import TrainConfig, confidence_volume, train
from .pipeline import PipelineConfig, match

__all__ = ["SiameseConfidenceNet", "SGMStereo", "check_pairs"]


def check_pairs(X, y=None):
    """Validate a sequence of stereo pairs (and optional ground truths)."""
    if X is None or len(X) == 0:
        raise ValueError("X must contain at least one (left, right) pair")
    pairs = [check_pair(*pair) for pair in X]
    if y is None:
        return pairs
    if len(y) != len(pairs):
        raise ValueError(f"X has {len(pairs)} pairs but y has {len(y)} ground truths")
    gts = []
    for (left, _), gt in zip(pairs, y):
        gt = np.asarray(gt, dtype=np.float64)
        if gt.shape != left.shape:
            raise ValueError(f"ground truth shape {gt.shape} does not match image shape {left.shape}")
        gts.append(gt)
    return pairs, gts


class SiameseConfidenceNet(BaseEstimator):
    """Patch-matching network trained with the margin hinge loss.

    ``transform`` returns one ``(h, w, d_max + 1)`` confidence volume in
    [0, 1] per pair.
    """

    def __init__(self, d_max=64, epsilon=0.2, lr=0.003, epochs=20, batch_size=1,
                 n_low=4, n_high=8, p_high=1, random_state=0, normalize=True):
        self.d_max = d_max
        self.epsilon = epsilon
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_low = n_low
        self.n_high = n_high
        self.p_high = p_high
        self.random_state = random_state
        self.normalize = normalize

    def _train_config(self):
        return TrainConfig(epsilon=self.epsilon, lr=self.lr, epochs=self.epochs,
                           batch_size=self.batch_size, n_low=self.n_low, n_high=self.n_high,
                           p_high=self.p_high, seed=self.random_state)

    def _prep(self, left, right):
        return (normalize(left), normalize(right)) if self.normalize else (left, right)

    def fit(self, X, y):
        pairs, gts = check_pairs(X, y)
        data = [(*self._prep(left, right), gt) for (left, right), gt in zip(pairs, gts)]
        self.params_, self.loss_curve_ = train(data, self._train_config())
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return [confidence_volume(self.params_, *self._prep(l, r), self.d_max) for l, r in check_pairs(X)]

    def predict(self, X):
        """Most confident disparity per pixel."""
        return [vol.argmax(axis=2) for vol in self.transform(X)]


class SGMStereo(BaseEstimator):
    """Cost volume + 16-path SGM, optionally refined by a confidence network.

    Without ``confidence_net`` this is the plain baseline and ``fit`` only
    validates the configuration.  With one, ``fit`` trains a clone of it
    (unless it is already fitted and ``refit_net`` is false) and ``predict``
    refines costs with the ground control points it finds.
    """

    def __init__(self, cost="census", window_radius=4, d_max=64, p1=None, p2=None,
                 theta=None, c_hi=None, c_low=None, confidence_net=None, refit_net=True):
        self.cost = cost
        self.window_radius = window_radius
        self.d_max = d_max
        self.p1 = p1
        self.p2 = p2
        self.theta = theta
        self.c_hi = c_hi
        self.c_low = c_low
        self.confidence_net = confidence_net
        self.refit_net = refit_net

    def fit(self, X=None, y=None):
        self.config_ = PipelineConfig(cost_kind=self.cost, window_radius=self.window_radius,
                                      d_max=self.d_max, p1=self.p1, p2=self.p2, theta=self.theta,
                                      c_hi=self.c_hi, c_low=self.c_low).resolved()
        self.net_ = None
        if self.confidence_net is not None:
            net = self.confidence_net
            fitted = hasattr(net, "params_")
            if self.refit_net or not fitted:
                if X is None or y is None:
                    raise ValueError("fitting the confidence network needs X and y")
                net = clone(net).fit(X, y)
            self.net_ = net
        return self

    def _params(self):
        return None if self.net_ is None else self.net_.params_

    def predict(self, X):
        check_is_fitted(self, "config_")
        return [match(l, r, self.config_, self._params()).disparity for l, r in check_pairs(X)]

    def predict_details(self, X):
        """Full :class:`~gcpstereo.pipeline.MatchResult` per pair."""
        check_is_fitted(self, "config_")
        return [match(l, r, self.config_, self._params()) for l, r in check_pairs(X)]

    def score(self, X, y, tau=3.0):
        """Mean fraction of known pixels within ``tau`` of the ground truth."""
        pairs, gts = check_pairs(X, y)
        preds = self.predict(pairs)
        return 1.0 - float(np.mean([error_rate(d, g, tau) for d, g in zip(preds, gts)]))
