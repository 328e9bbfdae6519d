"""Kinship verification and family retrieval on pluggable face embeddings."""

from .calibration import (
    RocCurve,
    ThresholdPolicy,
    VerificationReport,
    compute_auc,
    compute_roc,
    evaluate_verification,
    per_type_thresholds,
    threshold_at_fpr,
    threshold_at_tpr,
)
from .embedding_store import (
    DatasetIndex,
    EmbeddingMatrix,
    ImageRecord,
    KinType,
    build_index,
    load_embeddings,
    load_manifest,
    write_embeddings,
    write_manifest,
)
from .finetune import (
    AdapterModel,
    TrainConfig,
    TrainLog,
    apply_adapter,
    classification_loss,
    clip_gradients,
    forward_logits,
    load_model,
    loss_and_gradients,
    lr_at,
    train,
    write_model,
)
from .pair_sampler import Pair, PairSet, load_pairs, sample_validation_pairs, write_pairs
from .retrieval import (
    Gallery,
    GalleryEntry,
    ProbeSubject,
    RetrievalReport,
    average_precision,
    gallery_from_records,
    load_probes,
    rank_at_k,
    rank_gallery,
    run_retrieval,
    score_probe,
    write_probes,
)
from .similarity import cosine_similarity, l2_normalize, score_pairs
from .synthetic import SyntheticConfig, generate

__version__ = "0.1.0"
