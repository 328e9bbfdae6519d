"""End-to-end acceptance checks.

Each test is one exit criterion, verified against an independent oracle or an
exhaustively checked contract at the stated tolerance. Pinned constants come
from the first seeded run of the reference configuration and guard against
behavioural drift.
"""
import math
import time

import numpy as np
import pytest

from kinsearch.calibration import (
    ThresholdPolicy,
    compute_auc,
    compute_roc,
    evaluate_verification,
    per_type_thresholds,
    threshold_at_fpr,
    threshold_at_tpr,
)
from kinsearch.embedding_store import (
    EmbeddingMatrix,
    ImageRecord,
    KinType,
    build_index,
    load_embeddings,
    load_manifest,
    write_embeddings,
    write_manifest,
)
from kinsearch.finetune import (
    AdapterModel,
    TrainConfig,
    apply_adapter,
    forward_logits,
    classification_loss,
    load_model,
    loss_and_gradients,
    train,
    write_model,
)
from kinsearch.pair_sampler import (
    Pair,
    PairSet,
    load_pairs,
    sample_validation_pairs,
    write_pairs,
)
from kinsearch.retrieval import (
    Gallery,
    GalleryEntry,
    ProbeSubject,
    rank_gallery,
    run_retrieval,
    score_probe,
)
from kinsearch.similarity import score_pairs
from kinsearch.synthetic import SyntheticConfig, generate

# regression constants pinned from the first run of the reference synthetic
# configuration (seed 42; 1000/1000 validation pairs drawn with seed 7)
PINNED_RAW_AUC = 0.634002
PINNED_ADAPTED_AUC = 0.997583

REFERENCE_TRAIN_CONFIG = TrainConfig(
    base_lr=0.5,
    epochs=30,
    batch_size=64,
    warmup_batches=20,
    cooldown_batches=40,
    milestone_epochs=(8, 14, 25),
    milestone_factor=0.75,
    clip_norm=1.5,
    momentum=0.9,
    seed=3,
    normalize_embeddings=True,
)


def test_criterion_01_gradient_oracle():
    """Analytic gradients match central finite differences to 1e-4."""
    started = time.perf_counter()
    rng = np.random.default_rng(100)
    step = 1e-5
    worst = 0.0
    for trial in range(50):
        normalize = bool(trial % 2)
        model = AdapterModel(
            projection=rng.normal(size=(8, 8)),
            classifier_weights=rng.normal(size=(5, 8)),
            classifier_bias=rng.normal(size=5),
            normalize_embeddings=normalize,
            family_ids=[f"f{i}" for i in range(5)],
        )
        batch = rng.normal(size=(4, 8))
        labels = rng.integers(0, 5, size=4)
        _, analytic = loss_and_gradients(model, batch, labels)
        arrays = {
            "projection": model.projection,
            "classifier_weights": model.classifier_weights,
            "classifier_bias": model.classifier_bias,
        }
        for name, arr in arrays.items():
            numeric = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = arr[idx]
                arr[idx] = keep + step
                up = classification_loss(forward_logits(model, batch), labels)
                arr[idx] = keep - step
                down = classification_loss(forward_logits(model, batch), labels)
                arr[idx] = keep
                numeric[idx] = (up - down) / (2.0 * step)
            diff = np.abs(analytic[name] - numeric).max()
            scale = max(np.abs(numeric).max(), 1e-12)
            worst = max(worst, diff / scale)
    elapsed = time.perf_counter() - started
    assert worst <= 1e-4, f"worst relative gradient error {worst:.3e}"
    assert elapsed < 10.0, f"gradient oracle took {elapsed:.1f}s"


def test_criterion_02_auc_oracle_equivalence():
    """Rank-based AUC equals brute-force pair counting; ROC area agrees."""
    started = time.perf_counter()
    rng = np.random.default_rng(200)
    for _ in range(200):
        n = int(rng.integers(2, 501))
        labels = rng.integers(0, 2, size=n).astype(bool)
        if not labels.any():
            labels[0] = True
        if labels.all():
            labels[0] = False
        scores = rng.integers(0, 40, size=n) / 40.0  # heavy ties
        scored = list(zip(scores, labels))
        pos = scores[labels]
        neg = scores[~labels]
        brute = (
            (pos[:, None] > neg[None, :]).sum()
            + 0.5 * (pos[:, None] == neg[None, :]).sum()
        ) / (len(pos) * len(neg))
        fast = compute_auc(scored)
        assert abs(fast - brute) <= 1e-12
        assert abs(compute_roc(scored).auc - brute) <= 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"AUC oracle took {elapsed:.1f}s"


def test_criterion_03_retrieval_metric_oracle():
    """mAP and rank@K from run_retrieval equal brute-force recomputation."""
    started = time.perf_counter()
    rng = np.random.default_rng(300)
    policies = ("mean-embedding", "mean", "max")
    for trial in range(100):
        n_gallery = int(rng.integers(2, 201))
        n_families = int(rng.integers(2, 6))
        dim = int(rng.integers(2, 8))
        n_probes = int(rng.integers(1, 6))
        max_probe_images = int(rng.integers(1, 5))
        total_rows = n_gallery + n_probes * max_probe_images
        matrix = EmbeddingMatrix(rng.normal(size=(total_rows, dim)) + 0.01)
        families = [f"f{int(i)}" for i in rng.integers(0, n_families, size=n_gallery)]
        gallery = Gallery(
            entries=tuple(
                GalleryEntry(f"g{i}", i, families[i]) for i in range(n_gallery)
            )
        )
        probes = []
        for p in range(n_probes):
            m = int(rng.integers(1, max_probe_images + 1))
            start = n_gallery + p * max_probe_images
            probes.append(
                ProbeSubject(
                    person_id=f"probe{p}",
                    family_id=families[int(rng.integers(0, n_gallery))],
                    rows=tuple(range(start, start + m)),
                )
            )
        policy = policies[trial % 3]
        k = int(rng.integers(1, 11))
        report = run_retrieval(probes, gallery, matrix, policy, k=k)

        aps = []
        hits = 0
        for probe in probes:
            raw = np.asarray(score_probe(probe, gallery, matrix, policy))
            order = sorted(range(n_gallery), key=lambda i: (-raw[i], i))
            relevant = {
                i for i in range(n_gallery) if families[i] == probe.family_id
            }
            found = 0
            precisions = []
            for position, index in enumerate(order, start=1):
                if index in relevant:
                    found += 1
                    precisions.append(found / position)
            aps.append(sum(precisions) / len(relevant))
            if any(i in relevant for i in order[:k]):
                hits += 1
        assert abs(report.mean_average_precision - np.mean(aps)) <= 1e-12
        assert abs(report.rank_at_k - hits / len(probes)) <= 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"retrieval oracle took {elapsed:.1f}s"


def test_criterion_04_pair_sampling_conformance():
    """10 000 sampled pairs satisfy every structural constraint, exhaustively."""
    config = SyntheticConfig(families=120, seed=77)
    records, matrix = generate(config)
    index = build_index(records, matrix)
    k = 5000
    pair_set = sample_validation_pairs(index, k=k, seed=4242)
    rerun = sample_validation_pairs(index, k=k, seed=4242)
    assert pair_set == rerun  # bit-identical rerun
    assert len(pair_set) == 2 * k
    positives = pair_set.pairs[:k]
    negatives = pair_set.pairs[k:]
    assert sum(1 for p in pair_set.pairs if p.is_kin) == k
    assert sum(1 for p in pair_set.pairs if not p.is_kin) == k
    lookup = index.image_lookup
    for pos, neg in zip(positives, negatives):
        assert pos.is_kin and not neg.is_kin
        assert lookup[pos.image_a].family_id == lookup[pos.image_b].family_id
        assert lookup[pos.image_a].person_id != lookup[pos.image_b].person_id
        assert lookup[neg.image_a].family_id != lookup[neg.image_b].family_id
        assert pos.image_a == neg.image_a  # shared anchor face


def test_criterion_05_threshold_contracts():
    """Chosen operating points satisfy their targets tightly on random sets."""
    rng = np.random.default_rng(500)
    for _ in range(200):
        negatives = rng.integers(0, 25, size=int(rng.integers(1, 120))) / 25.0
        theta = threshold_at_fpr(negatives, 0.2)
        assert np.mean(negatives >= theta) <= 0.2
        smaller = np.unique(negatives)
        smaller = smaller[smaller < theta]
        if smaller.size:
            assert np.mean(negatives >= smaller[-1]) > 0.2
    for _ in range(200):
        positives = rng.integers(0, 25, size=int(rng.integers(1, 120))) / 25.0
        theta = threshold_at_tpr(positives, 0.75)
        assert np.mean(positives >= theta) >= 0.75
        candidates = np.append(np.unique(positives), positives.max() + 1.0)
        larger = candidates[candidates > theta]
        if larger.size:
            assert np.mean(positives >= larger[0]) < 0.75


def test_criterion_06_finetuning_improves_validation_auc():
    """Adapter training lifts pair AUC on the reference synthetic dataset."""
    started = time.perf_counter()
    records, matrix = generate(SyntheticConfig())
    index = build_index(records, matrix)
    pairs = sample_validation_pairs(index, k=1000, seed=7)
    raw_auc = compute_auc(
        [(s, p.is_kin) for p, s in score_pairs(pairs, index, matrix)]
    )
    model, log = train(index, matrix, REFERENCE_TRAIN_CONFIG, validation=pairs)
    adapted = apply_adapter(model, matrix)
    adapted_index = build_index(records, adapted)
    adapted_auc = compute_auc(
        [(s, p.is_kin) for p, s in score_pairs(pairs, adapted_index, adapted)]
    )
    elapsed = time.perf_counter() - started
    assert adapted_auc >= raw_auc + 0.05, (
        f"gain {adapted_auc - raw_auc:.4f} below 0.05"
    )
    assert raw_auc == pytest.approx(PINNED_RAW_AUC, abs=1e-9)
    assert adapted_auc == pytest.approx(PINNED_ADAPTED_AUC, abs=1e-9)
    assert max(log.val_auc) == pytest.approx(PINNED_ADAPTED_AUC, abs=1e-6)
    assert elapsed < 120.0, f"end-to-end run took {elapsed:.1f}s"


def test_criterion_07_aggregation_ranking_equivalence():
    """mean-embedding and mean aggregation rank identically on unit probes."""
    rng = np.random.default_rng(700)
    for _ in range(100):
        n_gallery = int(rng.integers(2, 60))
        dim = int(rng.integers(2, 10))
        m = int(rng.integers(1, 6))
        probe_rows = rng.normal(size=(m, dim))
        probe_rows /= np.linalg.norm(probe_rows, axis=1)[:, None]
        gallery_rows = rng.normal(size=(n_gallery, dim))
        matrix = EmbeddingMatrix(np.vstack([probe_rows, gallery_rows]))
        gallery = Gallery(
            entries=tuple(
                GalleryEntry(f"g{i}", m + i, f"f{i % 3}") for i in range(n_gallery)
            )
        )
        probe = ProbeSubject("p", "f0", rows=tuple(range(m)))
        by_center = rank_gallery(score_probe(probe, gallery, matrix, "mean-embedding"))
        by_mean = rank_gallery(score_probe(probe, gallery, matrix, "mean"))
        assert list(by_center) == list(by_mean)


def test_criterion_08_format_round_trips(tmp_path):
    """Manifest, KEB1, pairs CSV and KMD1 all reload bit-exactly."""
    rng = np.random.default_rng(800)
    for trial in range(10):
        n = int(rng.integers(0, 60))
        records = [
            ImageRecord(
                image_id=f"t{trial}-i{j}",
                person_id=f"t{trial}-p{j % 9}",
                family_id=f"t{trial}-f{(j % 9) % 4}",
                row=j,
                detected=bool(rng.integers(0, 2)),
            )
            for j in range(n)
        ]
        manifest = tmp_path / f"manifest{trial}.jsonl"
        write_manifest(records, manifest)
        assert load_manifest(manifest) == records

        dim = int(rng.integers(1, 40))
        matrix = EmbeddingMatrix(
            rng.normal(size=(int(rng.integers(0, 50)), dim)), dim=dim
        )
        keb = tmp_path / f"emb{trial}.keb1"
        write_embeddings(matrix, keb)
        loaded = load_embeddings(keb)
        assert loaded == matrix
        assert loaded.values.tobytes() == matrix.values.tobytes()

        kin_types = list(KinType)
        pairs = PairSet(
            pairs=[
                Pair(
                    f"a{j}",
                    f"b{j}",
                    is_kin=bool(rng.integers(0, 2)),
                    kin_type=(
                        kin_types[int(rng.integers(0, 11))]
                        if rng.integers(0, 2)
                        else None
                    ),
                )
                for j in range(int(rng.integers(0, 40)))
            ],
        )
        pairs_csv = tmp_path / f"pairs{trial}.csv"
        write_pairs(pairs, pairs_csv)
        assert load_pairs(pairs_csv).pairs == pairs.pairs

        d_in = int(rng.integers(1, 10))
        d_out = int(rng.integers(1, 10))
        n_fam = int(rng.integers(1, 8))
        model = AdapterModel(
            projection=rng.normal(size=(d_in, d_out)),
            classifier_weights=rng.normal(size=(n_fam, d_out)),
            classifier_bias=rng.normal(size=n_fam),
            normalize_embeddings=bool(rng.integers(0, 2)),
            family_ids=[f"fam{j}" for j in range(n_fam)],
        )
        kmd = tmp_path / f"model{trial}.kmd1"
        write_model(model, kmd)
        reloaded = load_model(kmd)
        assert np.array_equal(reloaded.projection, model.projection)
        assert np.array_equal(reloaded.classifier_weights, model.classifier_weights)
        assert np.array_equal(reloaded.classifier_bias, model.classifier_bias)
        assert reloaded.normalize_embeddings == model.normalize_embeddings
        assert reloaded.family_ids == model.family_ids


def test_criterion_09_per_type_threshold_mechanism():
    """A type with shifted scores gets a lower threshold and better accuracy."""
    rng = np.random.default_rng(17)
    rows = []
    pairs = []
    scores = []

    def add(count, low, high, is_kin, kin_type):
        for s in rng.uniform(low, high, size=count):
            rows.append((float(s), is_kin, kin_type))
            pairs.append(Pair(f"a{len(pairs)}", f"b{len(pairs)}", is_kin, kin_type))
            scores.append(float(s))

    add(200, 0.0, 0.4, False, KinType.MD)
    add(200, 0.3, 0.9, True, KinType.MD)
    # the scarce type scores systematically lower on both classes
    add(60, -0.4, 0.0, False, KinType.GMGS)
    add(60, -0.1, 0.5, True, KinType.GMGS)

    policy = per_type_thresholds(rows, target_fpr=0.2, min_count=30)
    assert policy.per_type[KinType.GMGS] < policy.default_threshold

    pair_set = PairSet(pairs=pairs)
    with_global = evaluate_verification(
        pair_set, scores, ThresholdPolicy(policy.default_threshold)
    )
    with_types = evaluate_verification(pair_set, scores, policy)
    assert (
        with_types.accuracy_by_type["GMGS"] > with_global.accuracy_by_type["GMGS"]
    )
