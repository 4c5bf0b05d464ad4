"""Selective-classification and OOD-detection metrics.

Conventions (shared by every consumer):

  * anomaly-style scores are oriented so that HIGHER means more
    OOD / more uncertain;
  * auroc(pos, neg) is the Mann-Whitney statistic
    P(score_pos > score_neg) + 0.5 P(equal);
  * fpr_at_tpr treats the in-distribution samples as the positives that
    are detected by a LOW score, picks the smallest cutoff whose ID
    acceptance rate reaches the target, and reports the fraction of OOD
    samples at or below it;
  * aurc sorts by confidence descending (ties by original index), takes
    risk(i) = errors among the i most confident over i, and averages over
    all prefixes.

Each metric has a brute-force oracle twin in the test suite.
"""

from __future__ import annotations

import numpy as np


def accuracy(predictions, labels, mask=None) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if mask is not None:
        predictions = predictions[mask]
        labels = labels[mask]
    if predictions.size == 0:
        raise ValueError("accuracy over an empty selection")
    return float(np.mean(predictions == labels))


def aurc(confidence, correct) -> float:
    """Mean risk over confidence-ranked prefixes (lower is better)."""
    confidence = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n = confidence.size
    if n == 0:
        raise ValueError("aurc needs at least one sample")
    order = np.argsort(-confidence, kind="stable")
    errors = ~correct[order]
    risks = np.cumsum(errors) / np.arange(1, n + 1)
    return float(risks.mean())


def risk_coverage_curve(confidence, correct):
    """(coverage, risk) points for every prefix, plot-ready."""
    confidence = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n = confidence.size
    order = np.argsort(-confidence, kind="stable")
    errors = ~correct[order]
    coverage = np.arange(1, n + 1) / n
    risk = np.cumsum(errors) / np.arange(1, n + 1)
    return coverage, risk


def _rankdata(x):
    """Average ranks (1-based); ties share the mean rank."""
    x = np.asarray(x)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores_pos, scores_neg) -> float:
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    if scores_pos.size == 0 or scores_neg.size == 0:
        raise ValueError("auroc needs samples on both sides")
    n_p, n_n = scores_pos.size, scores_neg.size
    ranks = _rankdata(np.concatenate([scores_pos, scores_neg]))
    u = ranks[:n_p].sum() - n_p * (n_p + 1) / 2.0
    return float(u / (n_p * n_n))


def roc_curve(scores_pos, scores_neg):
    """(fpr, tpr) over all thresholds, descending, with the (0,0) endpoint."""
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    thresholds = np.unique(np.concatenate([scores_pos, scores_neg]))[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        tpr.append(np.mean(scores_pos >= t))
        fpr.append(np.mean(scores_neg >= t))
    return np.asarray(fpr), np.asarray(tpr)


def fpr_at_tpr(scores_id, scores_ood, tpr_target=0.95) -> float:
    """Fraction of OOD on the ID side of the smallest cutoff accepting
    >= tpr_target of the ID samples (ID accepted when score <= cutoff)."""
    scores_id = np.asarray(scores_id, dtype=np.float64)
    scores_ood = np.asarray(scores_ood, dtype=np.float64)
    if scores_id.size == 0 or scores_ood.size == 0:
        raise ValueError("fpr_at_tpr needs samples on both sides")
    k = int(np.ceil(tpr_target * scores_id.size))
    cutoff = np.sort(scores_id)[k - 1]
    return float(np.mean(scores_ood <= cutoff))


def aupr(scores_pos, scores_neg) -> float:
    """Area under precision-recall by trapezoid over all thresholds."""
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    if scores_pos.size == 0 or scores_neg.size == 0:
        raise ValueError("aupr needs samples on both sides")
    thresholds = np.unique(np.concatenate([scores_pos, scores_neg]))[::-1]
    recalls = [0.0]
    precisions = []
    for t in thresholds:
        tp = float(np.sum(scores_pos >= t))
        fp = float(np.sum(scores_neg >= t))
        recalls.append(tp / scores_pos.size)
        precisions.append(tp / (tp + fp))
    precisions = [precisions[0]] + precisions   # precision at recall 0
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * \
            0.5 * (precisions[i] + precisions[i - 1])
    return float(area)


def baseline_scores(logits):
    """Post-hoc OOD scores from classifier logits (higher = more OOD).

    maxlogit = -max_k z_k; energy = -log sum_k e^{z_k}.
    """
    logits = np.asarray(logits, dtype=np.float64)
    maxlogit = -logits.max(axis=-1)
    m = logits.max(axis=-1, keepdims=True)
    energy = -(np.log(np.exp(logits - m).sum(axis=-1)) + m.ravel())
    return maxlogit, energy
