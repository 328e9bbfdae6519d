"""Walkthrough: balanced pair sampling, ROC/AUC, and threshold selection.

Draws positive/negative validation pairs uniformly over families, scores them
with raw cosine similarity, then picks operating thresholds two ways: a
target true-positive rate of 0.75 and a target false-positive rate of 0.2.
"""
import numpy as np

from kinsearch import (
    build_index,
    compute_auc,
    compute_roc,
    evaluate_verification,
    threshold_at_fpr,
    threshold_at_tpr,
)
from kinsearch.calibration import ThresholdPolicy
from kinsearch.pair_sampler import sample_validation_pairs
from kinsearch.similarity import score_pairs
from kinsearch.synthetic import SyntheticConfig, generate

records, matrix = generate(SyntheticConfig(seed=42))
index = build_index(records, matrix)

# Balanced sampling: k kin pairs and k non-kin pairs, each non-kin pair
# reusing the kin pair's anchor face.
k = 2000
pairs = sample_validation_pairs(index, k=k, seed=11)
print(f"sampled {len(pairs)} pairs over {index.family_count} families")
anchors_shared = all(
    pos.image_a == neg.image_a
    for pos, neg in zip(pairs.pairs[:k], pairs.pairs[k:])
)
print(f"every negative shares its positive's anchor: {anchors_shared}\n")

scored = score_pairs(pairs, index, matrix)
labelled = [(score, pair.is_kin) for pair, score in scored]
positives = [s for s, kin in labelled if kin]
negatives = [s for s, kin in labelled if not kin]

auc = compute_auc(labelled)
curve = compute_roc(labelled)
print(f"AUC (Mann-Whitney):     {auc:.4f}")
print(f"AUC (trapezoid on ROC): {curve.auc:.4f}")
print(f"ROC has {len(curve.points)} points\n")

# Two calibration strategies on the same scores.
theta_tpr = threshold_at_tpr(positives, 0.75)
theta_fpr = threshold_at_fpr(negatives, 0.2)
for name, theta in (("TPR>=0.75", theta_tpr), ("FPR<=0.2", theta_fpr)):
    tpr = float(np.mean(np.asarray(positives) >= theta))
    fpr = float(np.mean(np.asarray(negatives) >= theta))
    report = evaluate_verification(
        pairs, [s for _, s in scored], ThresholdPolicy(theta)
    )
    print(f"{name}: threshold {theta:+.4f} -> "
          f"TPR {tpr:.3f}, FPR {fpr:.3f}, accuracy {report.average_accuracy:.3f}")
