"""Hybrid attack: a two-layer network over (similarity, normalized iterations).

The network is ``2 -> H ReLU units -> 1 sigmoid``, trained with logistic
loss by full-batch gradient descent. :class:`HybridMembershipClassifier`
wraps it in the scikit-learn estimator API.
"""

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .attacks import MEMBER, NONMEMBER, AttackOutcome
from .exceptions import TrainingError
from .validation import check_features, check_membership_labels

WEIGHTS_FORMAT = "icl-audit-hybrid/1"


@dataclass(frozen=True, eq=False)
class HybridModel:
    layer1_weights: np.ndarray  # (2, H)
    layer1_bias: np.ndarray  # (H,)
    layer2_weights: np.ndarray  # (H,)
    layer2_bias: float
    feature_scale: tuple = (1.0, 1.0)

    def __post_init__(self):
        w1 = np.asarray(self.layer1_weights, dtype=np.float64)
        b1 = np.asarray(self.layer1_bias, dtype=np.float64)
        w2 = np.asarray(self.layer2_weights, dtype=np.float64)
        if w1.ndim != 2 or w1.shape[0] != 2 or w1.shape[1] < 1:
            raise ValueError(f"layer1_weights must be 2 x H, got {w1.shape}")
        h = w1.shape[1]
        if b1.shape != (h,) or w2.shape != (h,):
            raise ValueError("bias / layer2 shapes do not match the hidden width")
        scale = tuple(float(s) for s in self.feature_scale)
        if len(scale) != 2 or min(scale) <= 0:
            raise ValueError("feature_scale must be two positive reals")
        arrays = (w1, b1, w2, np.array([self.layer2_bias], dtype=np.float64))
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("hybrid model parameters must be finite")
        object.__setattr__(self, "layer1_weights", w1)
        object.__setattr__(self, "layer1_bias", b1)
        object.__setattr__(self, "layer2_weights", w2)
        object.__setattr__(self, "layer2_bias", float(self.layer2_bias))
        object.__setattr__(self, "feature_scale", scale)

    @property
    def hidden_units(self) -> int:
        return self.layer1_weights.shape[1]

    def to_dict(self):
        return {
            "format": WEIGHTS_FORMAT,
            "layer1_weights": self.layer1_weights.tolist(),
            "layer1_bias": self.layer1_bias.tolist(),
            "layer2_weights": self.layer2_weights.tolist(),
            "layer2_bias": self.layer2_bias,
            "feature_scale": list(self.feature_scale),
            "feature_order": ["similarity", "iterations_over_cap"],
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != WEIGHTS_FORMAT:
            raise ValueError(f"unsupported weight file format {obj.get('format')!r}")
        return cls(obj["layer1_weights"], obj["layer1_bias"], obj["layer2_weights"],
                   obj["layer2_bias"], tuple(obj["feature_scale"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _unpack(theta, h):
    w1 = theta[:2 * h].reshape(2, h)
    b1 = theta[2 * h:3 * h]
    w2 = theta[3 * h:4 * h]
    return w1, b1, w2, theta[4 * h]


def pack(model: HybridModel) -> np.ndarray:
    return np.concatenate([model.layer1_weights.ravel(), model.layer1_bias,
                           model.layer2_weights, [model.layer2_bias]])


def loss_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, h: int):
    """Mean logistic loss of the flat parameter vector ``theta`` and its gradient.

    ``X`` is already scaled. Parameters are laid out as W1 (row-major, 2 x h),
    b1, w2, b2.
    """
    w1, b1, w2, b2 = _unpack(theta, h)
    n = X.shape[0]
    pre = X @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ w2 + b2
    # log(1 + e^z) - y z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (_sigmoid(z) - y) / n
    g_w2 = hidden.T @ dz
    g_b2 = dz.sum()
    dpre = np.outer(dz, w2) * (pre > 0)
    g_w1 = X.T @ dpre
    g_b1 = dpre.sum(axis=0)
    return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])


def init_params(h: int, seed: int) -> np.ndarray:
    """He-normal first layer, Glorot-normal output layer, zero biases."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / 2.0), size=(2, h))
    w2 = rng.normal(0.0, np.sqrt(2.0 / (h + 1)), size=h)
    return np.concatenate([w1.ravel(), np.zeros(h), w2, [0.0]])


def fit_feature_scale(X) -> tuple:
    std = np.std(X, axis=0)
    return tuple(float(1.0 / s) if s > 1e-6 else 1.0 for s in std)


def train_hybrid(shadow, hidden_units: int = 8, epochs: int = 2000,
                 learning_rate: float = 0.1, seed: int = 0):
    """Fit the hybrid network on ``[(features, is_member), ...]``.

    Returns ``(model, final_loss)``.
    """
    if not shadow:
        raise TrainingError("shadow set is empty")
    X = check_features([f for f, _ in shadow])
    y = check_membership_labels([m for _, m in shadow])
    if len(np.unique(y)) < 2:
        raise TrainingError("shadow set must contain both members and non-members")
    if hidden_units < 1 or epochs < 1 or learning_rate <= 0:
        raise TrainingError("hidden_units, epochs and learning_rate must be positive")
    scale = fit_feature_scale(X)
    Xs = X * np.asarray(scale)
    theta = init_params(hidden_units, seed)
    loss = None
    for _ in range(epochs):
        loss, grad = loss_and_grad(theta, Xs, y, hidden_units)
        theta = theta - learning_rate * grad
    loss, _ = loss_and_grad(theta, Xs, y, hidden_units)
    w1, b1, w2, b2 = _unpack(theta, hidden_units)
    return HybridModel(w1.copy(), b1.copy(), w2.copy(), float(b2), scale), loss


def predict_proba(model: HybridModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64)) * np.asarray(model.feature_scale)
    hidden = np.maximum(X @ model.layer1_weights + model.layer1_bias, 0.0)
    return _sigmoid(hidden @ model.layer2_weights + model.layer2_bias)


def hybrid_predict(model: HybridModel, features) -> AttackOutcome:
    p = float(predict_proba(model, features)[0])
    return AttackOutcome("hybrid", p, MEMBER if p >= 0.5 else NONMEMBER, 0)


class HybridMembershipClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn classifier over ``[similarity, iterations / cap]`` rows.

    ``predict`` returns 1 for member and 0 for non-member.
    """

    def __init__(self, hidden_units=8, epochs=2000, learning_rate=0.1, random_state=0):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X = check_features(X)
        y = check_membership_labels(y, n=X.shape[0])
        self.model_, self.loss_ = train_hybrid(
            list(zip(X.tolist(), y.tolist())), self.hidden_units, self.epochs,
            self.learning_rate, self.random_state,
        )
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 2
        return self

    @classmethod
    def from_model(cls, model: HybridModel):
        est = cls(hidden_units=model.hidden_units)
        est.model_, est.loss_ = model, float("nan")
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = 2
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = predict_proba(self.model_, check_features(X))
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        return (self.decision_function(X) >= 0.5).astype(int)
