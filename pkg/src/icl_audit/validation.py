"""Input validation helpers for scores, features and membership labels."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import MetricError


def check_features(X) -> np.ndarray:
    """Validate hybrid features: finite float array of shape (n, 2)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 features (similarity, iterations), got {X.shape[1]}")
    return X


def check_scores(scores) -> np.ndarray:
    """1-d finite float array; a single-column 2-d array is flattened."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    return check_array(arr, dtype=np.float64, ensure_2d=False, ensure_min_samples=1)


def check_membership_labels(y, n=None) -> np.ndarray:
    """Membership truth as a float 0/1 vector."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError("membership labels must be 1-d")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"got {arr.shape[0]} labels for {n} samples")
    if arr.dtype.kind not in "biuf" or not np.all(np.isin(arr, (0, 1))):
        raise ValueError("membership labels must be 0/1 or boolean")
    return arr.astype(np.float64)


def check_scored_pairs(pairs, need_both=True):
    """Split ``[(score, truth), ...]`` into validated arrays."""
    pairs = list(pairs)
    if not pairs:
        raise MetricError("no scores given")
    scores = check_scores([float(s) for s, _ in pairs])
    truth = check_membership_labels([bool(t) for _, t in pairs]).astype(bool)
    if need_both and (truth.all() or not truth.any()):
        raise MetricError("scores must include both members and non-members")
    return scores, truth
