"""Threshold calibration on shadow scores."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import CalibrationError, MetricError
from .validation import check_membership_labels, check_scored_pairs, check_scores


def threshold_accuracies(scores, truth):
    """Candidate thresholds and the accuracy of ``score >= threshold`` at each.

    Candidates are the lowest observed score and the midpoints between
    consecutive distinct scores.
    """
    uniq = np.unique(scores)
    candidates = np.r_[uniq[:1], (uniq[1:] + uniq[:-1]) / 2.0]
    n = len(scores)
    # members at or above each candidate / nonmembers strictly below
    m_sorted = np.sort(scores[truth])
    n_sorted = np.sort(scores[~truth])
    tp = len(m_sorted) - np.searchsorted(m_sorted, candidates, side="left")
    tn = np.searchsorted(n_sorted, candidates, side="left")
    return candidates, (tp + tn) / n


def calibrate_threshold(shadow_scores) -> float:
    """Accuracy-maximizing threshold on ``[(score, is_member), ...]``; ties go
    to the smallest threshold."""
    try:
        scores, truth = check_scored_pairs(shadow_scores)
    except MetricError as exc:
        raise CalibrationError(str(exc)) from None
    candidates, acc = threshold_accuracies(scores, truth)
    return float(candidates[int(np.argmax(acc))])


class ThresholdMembershipClassifier(ClassifierMixin, BaseEstimator):
    """Single-score membership classifier: member iff score >= ``threshold_``.

    With ``threshold=None`` the threshold is calibrated in :meth:`fit`; a
    number pins it and ``fit`` only records the classes.
    """

    def __init__(self, threshold=None):
        self.threshold = threshold

    def fit(self, X, y):
        scores = check_scores(X)
        y = check_membership_labels(y, n=scores.shape[0])
        if self.threshold is None:
            self.threshold_ = calibrate_threshold(zip(scores.tolist(), y.tolist()))
        else:
            self.threshold_ = float(self.threshold)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 1
        return self

    def decision_function(self, X):
        check_is_fitted(self, "threshold_")
        return check_scores(X) - self.threshold_

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)
