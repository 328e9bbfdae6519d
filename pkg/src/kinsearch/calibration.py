"""ROC analysis, operating-point selection, and verification accuracy reports.

AUC is the tie-aware Mann-Whitney statistic (fraction of positive/negative
score pairs ordered correctly, ties worth 0.5), computed from averaged ranks.
The ROC curve is built independently from threshold sweeps so its trapezoidal
area can serve as a cross-check. Threshold pickers satisfy their rate targets
conservatively: a chosen threshold never exceeds the false positive budget.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embedding_store import KinType, parse_kin_type
from .errors import (
    DegenerateLabelsError,
    EmptyScoresError,
    LengthMismatchError,
    ParseError,
)

UNTYPED_KEY = "ALL"


@dataclass(frozen=True)
class RocCurve:
    """(fpr, tpr, threshold) points with strictly decreasing thresholds."""

    points: tuple[tuple[float, float, float], ...]
    auc: float


@dataclass
class ThresholdPolicy:
    default_threshold: float
    per_type: dict[KinType, float] = field(default_factory=dict)

    def threshold_for(self, kin_type: KinType | None) -> float:
        if kin_type is None:
            return self.default_threshold
        return self.per_type.get(kin_type, self.default_threshold)


@dataclass(frozen=True)
class VerificationReport:
    accuracy_by_type: dict[str, float]
    counts_by_type: dict[str, int]
    average_accuracy: float
    macro_average: float


def _split_scores(scored):
    values = np.asarray([s for s, _ in scored], dtype=np.float64)
    labels = np.asarray([bool(lbl) for _, lbl in scored], dtype=bool)
    if values.size == 0 or labels.all() or not labels.any():
        raise DegenerateLabelsError("need at least one positive and one negative")
    return values, labels


def compute_auc(scored) -> float:
    """Probability that a random positive outscores a random negative."""
    values, labels = _split_scores(scored)
    order = np.sort(values)
    lo = np.searchsorted(order, values, side="left")
    hi = np.searchsorted(order, values, side="right")
    ranks = (lo + 1 + hi) / 2.0  # average rank, 1-based
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def compute_roc(scored) -> RocCurve:
    """One point per distinct score, swept from strictest threshold down."""
    values, labels = _split_scores(scored)
    pos = np.sort(values[labels])
    neg = np.sort(values[~labels])
    thresholds = np.unique(values)[::-1]
    points = [(0.0, 0.0, float(values.max()) + 1.0)]
    for theta in thresholds:
        tpr = (pos.size - np.searchsorted(pos, theta, side="left")) / pos.size
        fpr = (neg.size - np.searchsorted(neg, theta, side="left")) / neg.size
        points.append((float(fpr), float(tpr), float(theta)))
    fprs = np.array([p[0] for p in points])
    tprs = np.array([p[1] for p in points])
    auc = float(np.trapezoid(tprs, fprs))
    return RocCurve(points=tuple(points), auc=auc)


def _candidates(values: np.ndarray) -> np.ndarray:
    """Observed scores plus a sentinel above the maximum, ascending."""
    return np.append(np.unique(values), values.max() + 1.0)


def threshold_at_fpr(negative_scores, target_fpr: float) -> float:
    """Smallest threshold keeping the admitted-negative fraction <= target."""
    neg = np.asarray(list(negative_scores), dtype=np.float64)
    if neg.size == 0:
        raise EmptyScoresError("no negative scores to calibrate on")
    if not 0.0 <= target_fpr <= 1.0:
        raise ValueError("target_fpr must be in [0, 1]")
    neg_sorted = np.sort(neg)
    for theta in _candidates(neg_sorted):
        admitted = neg.size - np.searchsorted(neg_sorted, theta, side="left")
        if admitted / neg.size <= target_fpr:
            return float(theta)
    raise AssertionError("sentinel candidate always satisfies the target")


def threshold_at_tpr(positive_scores, target_tpr: float) -> float:
    """Largest threshold keeping the admitted-positive fraction >= target."""
    pos = np.asarray(list(positive_scores), dtype=np.float64)
    if pos.size == 0:
        raise EmptyScoresError("no positive scores to calibrate on")
    if not 0.0 <= target_tpr <= 1.0:
        raise ValueError("target_tpr must be in [0, 1]")
    pos_sorted = np.sort(pos)
    best = None
    for theta in _candidates(pos_sorted):
        admitted = pos.size - np.searchsorted(pos_sorted, theta, side="left")
        if admitted / pos.size >= target_tpr:
            best = float(theta)
    if best is None:
        raise AssertionError("the minimum score always admits every positive")
    return best


def per_type_thresholds(scored_typed, target_fpr: float, min_count: int = 30) -> ThresholdPolicy:
    """Global threshold plus per-type overrides where enough negatives exist.

    Types with fewer than ``min_count`` negatives are left out of the
    override map and fall back to the global threshold.
    """
    rows = list(scored_typed)
    if not rows:
        raise EmptyScoresError("no scores supplied")
    negatives = [s for s, lbl, _ in rows if not lbl]
    default = threshold_at_fpr(negatives, target_fpr)
    by_type: dict[KinType, list[float]] = {}
    for score, lbl, kin_type in rows:
        if not lbl and kin_type is not None:
            by_type.setdefault(kin_type, []).append(score)
    per_type = {
        kt: threshold_at_fpr(scores, target_fpr)
        for kt, scores in by_type.items()
        if len(scores) >= min_count
    }
    return ThresholdPolicy(default_threshold=default, per_type=per_type)


def evaluate_verification(pairs, scores, policy: ThresholdPolicy) -> VerificationReport:
    """Thresholded decisions vs ground truth, tabulated per kin type.

    ``average_accuracy`` is micro (per pair); the macro mean over types is
    reported alongside. Untyped pairs are tabulated under ``ALL``.
    """
    pair_list = pairs.pairs
    score_list = list(scores)
    if len(pair_list) != len(score_list):
        raise LengthMismatchError(
            f"{len(pair_list)} pairs but {len(score_list)} scores"
        )
    correct: dict[str, int] = {}
    counts: dict[str, int] = {}
    total_correct = 0
    for pair, score in zip(pair_list, score_list):
        decision = score >= policy.threshold_for(pair.kin_type)
        key = pair.kin_type.value if pair.kin_type is not None else UNTYPED_KEY
        counts[key] = counts.get(key, 0) + 1
        if decision == pair.is_kin:
            correct[key] = correct.get(key, 0) + 1
            total_correct += 1
    accuracy = {
        key: correct.get(key, 0) / counts[key] for key in sorted(counts)
    }
    counts = {key: counts[key] for key in sorted(counts)}
    total = len(pair_list)
    return VerificationReport(
        accuracy_by_type=accuracy,
        counts_by_type=counts,
        average_accuracy=total_correct / total if total else 0.0,
        macro_average=sum(accuracy.values()) / len(accuracy) if accuracy else 0.0,
    )


# -- file formats ------------------------------------------------------------

def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr,threshold\n")
        for fpr, tpr, theta in curve.points:
            fh.write(f"{fpr!r},{tpr!r},{theta!r}\n")
        fh.write(f"# auc={curve.auc!r}\n")


def write_policy(policy: ThresholdPolicy, path) -> None:
    obj = {
        "default": policy.default_threshold,
        "per_type": {kt.value: theta for kt, theta in sorted(policy.per_type.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_policy(path) -> ThresholdPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or "default" not in obj:
        raise ParseError("policy JSON needs a 'default' key")
    per_type = {
        parse_kin_type(token): float(theta)
        for token, theta in obj.get("per_type", {}).items()
    }
    return ThresholdPolicy(default_threshold=float(obj["default"]), per_type=per_type)


def write_verification_report(report: VerificationReport, path) -> None:
    obj = {
        "by_type": report.accuracy_by_type,
        "average": report.average_accuracy,
        "macro_average": report.macro_average,
        "counts": report.counts_by_type,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
