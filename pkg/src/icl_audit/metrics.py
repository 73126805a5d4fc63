"""Advantage, ROC, AUC and TPR-at-low-FPR metrics."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attacks import ABSTAIN, MEMBER
from .exceptions import MetricError
from .validation import check_scored_pairs


def _correct_count(decisions):
    decisions = list(decisions)
    if not decisions:
        raise MetricError("no decisions given")
    # Abstentions count as non-member decisions.
    correct = sum((d == MEMBER) == bool(t) for d, t in decisions)
    return correct, len(decisions)


def compute_accuracy(decisions) -> float:
    correct, n = _correct_count(decisions)
    return correct / n


def compute_advantage(decisions) -> float:
    """``2 * (accuracy - 0.5)`` over ``[(decision, is_member), ...]``."""
    correct, n = _correct_count(decisions)
    return (2 * correct - n) / n


def _roc_counts(scores, truth):
    """Cumulative (FP, TP) counts sweeping the threshold down over distinct scores."""
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    # last index of each group of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(t)[ends]
    fp = np.cumsum(~t)[ends]
    return np.r_[0, fp], np.r_[0, tp], s[ends]


def compute_roc(scores) -> list:
    """ROC points ``[(fpr, tpr), ...]`` from ``[(score, is_member), ...]``.

    Points run from (0, 0) to (1, 1); tied scores form a single step.
    """
    s, t = check_scored_pairs(scores)
    fp, tp, _ = _roc_counts(s, t)
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    return [(int(f) / n_neg, int(p) / n_pos) for f, p in zip(fp, tp)]


def roc_thresholds(scores):
    """Score thresholds matching ``compute_roc`` points after the origin."""
    s, t = check_scored_pairs(scores)
    return _roc_counts(s, t)[2].tolist()


def compute_auc(scores) -> float:
    """Trapezoidal area under the ROC, computed on integer counts.

    Equals P(member score > non-member score) + P(tie) / 2.
    """
    s, t = check_scored_pairs(scores)
    fp, tp, _ = _roc_counts(s, t)
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2 * n_pos * n_neg)


def auc_from_roc(roc) -> float:
    area = 0.0
    for (f0, t0), (f1, t1) in zip(roc, roc[1:]):
        area += (f1 - f0) * (t0 + t1) / 2.0
    return area


def tpr_at_fpr(roc, target_fpr: float) -> float:
    """Largest TPR among ROC points with FPR <= target (step convention)."""
    best = 0.0
    for f, t in roc:
        if f <= target_fpr + 1e-12 and t > best:
            best = t
    return best


@dataclass
class AttackMetrics:
    attack: str
    n_members: int
    n_nonmembers: int
    accuracy: float
    advantage: float
    abstain_rate: float
    auc: Optional[float] = None
    roc: Optional[list] = None
    tpr_at_fpr: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "attack": self.attack,
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
            "accuracy": self.accuracy,
            "advantage": self.advantage,
            "abstain_rate": self.abstain_rate,
            "auc": self.auc,
            "tpr_at_fpr": {str(k): v for k, v in self.tpr_at_fpr.items()},
            "roc": [list(p) for p in self.roc] if self.roc is not None else None,
        }


def attack_metrics(attack, outcomes, fpr_targets=(0.01, 0.05, 0.1), score_based=None):
    """Metrics for one attack from ``[(AttackOutcome, is_member), ...]``.

    ROC-based entries are filled only for score-based attacks.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise MetricError(f"no outcomes for {attack}")
    decisions = [(o.decision, m) for o, m in outcomes]
    correct, n = _correct_count(decisions)
    report = AttackMetrics(
        attack=attack,
        n_members=sum(1 for _, m in outcomes if m),
        n_nonmembers=sum(1 for _, m in outcomes if not m),
        accuracy=correct / n,
        advantage=(2 * correct - n) / n,
        abstain_rate=sum(o.decision == ABSTAIN for o, _ in outcomes) / n,
    )
    if score_based is None:
        from .attacks import SCORE_ATTACKS
        score_based = attack in SCORE_ATTACKS
    if score_based and report.n_members and report.n_nonmembers:
        scored = [(o.raw_score, m) for o, m in outcomes]
        report.roc = compute_roc(scored)
        report.auc = compute_auc(scored)
        report.tpr_at_fpr = {float(f): tpr_at_fpr(report.roc, f) for f in fpr_targets}
    return report
