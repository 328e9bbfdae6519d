"""Family search: rank a gallery for each probe subject and score the ranking.

A probe subject owns one or more embeddings. Its gallery scores come from one
of three policies: ``mean-embedding`` (cosine against the average of the
probe's L2-normalized embeddings) or ``mean``/``max`` (aggregate the per-image
cosine scores per gallery entry). With normalized inputs, ``mean-embedding``
and ``mean`` rank identically; ``max`` favours a single close image.

Ranking ties break toward the lower gallery index, so runs are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embedding_store import DatasetIndex, EmbeddingMatrix
from .errors import (
    EmptyProbeError,
    NoRelevantError,
    ParseError,
    UnknownImageIdError,
    ZeroVectorError,
)

MEAN_EMBEDDING = "mean-embedding"
SCORE_MEAN = "mean"
SCORE_MAX = "max"
POLICIES = (MEAN_EMBEDDING, SCORE_MEAN, SCORE_MAX)


@dataclass(frozen=True)
class ProbeSubject:
    person_id: str
    family_id: str
    rows: tuple[int, ...]
    image_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.rows) == 0:
            raise EmptyProbeError(f"probe {self.person_id!r} has no images")


@dataclass(frozen=True)
class GalleryEntry:
    image_id: str
    row: int
    family_id: str


@dataclass(frozen=True)
class Gallery:
    entries: tuple[GalleryEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("gallery cannot be empty")
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("gallery image ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ProbeRun:
    person_id: str
    ranking: tuple[int, ...]
    scores: tuple[float, ...]           # aligned with gallery entry order
    relevant: frozenset[int]
    average_precision: float


@dataclass(frozen=True)
class RetrievalReport:
    policy: str
    mean_average_precision: float
    rank_at_k: float
    k: int
    runs: tuple[ProbeRun, ...]


def gallery_from_records(records) -> Gallery:
    """Gallery over manifest records, ordered by image id."""
    entries = tuple(
        GalleryEntry(image_id=r.image_id, row=r.row, family_id=r.family_id)
        for r in sorted(records, key=lambda r: r.image_id)
    )
    return Gallery(entries=entries)


def _check_policy(policy: str) -> None:
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")


def score_probe(probe: ProbeSubject, gallery: Gallery, matrix: EmbeddingMatrix, policy: str) -> np.ndarray:
    """One similarity score per gallery entry, higher is closer."""
    _check_policy(policy)
    gallery_rows = [e.row for e in gallery.entries]
    g = matrix.values[gallery_rows]
    g_norms = np.linalg.norm(g, axis=1)
    p = matrix.values[list(probe.rows)]
    p_norms = np.linalg.norm(p, axis=1)
    if np.any(g_norms == 0.0) or np.any(p_norms == 0.0):
        raise ZeroVectorError("zero-norm embedding cannot be scored")
    p_unit = p / p_norms[:, None]
    if policy == MEAN_EMBEDDING:
        center = p_unit.mean(axis=0)
        center_norm = np.linalg.norm(center)
        if center_norm == 0.0:
            raise ZeroVectorError("probe embeddings average to the zero vector")
        return (g @ center) / (g_norms * center_norm)
    sims = p_unit @ (g / g_norms[:, None]).T
    return sims.mean(axis=0) if policy == SCORE_MEAN else sims.max(axis=0)


def rank_gallery(scores) -> np.ndarray:
    """Indices by descending score; equal scores keep ascending index order."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot rank an empty score list")
    return np.argsort(-arr, kind="stable")


def average_precision(ranking, relevant) -> float:
    relevant = set(relevant)
    if not relevant:
        raise NoRelevantError("no relevant gallery entries")
    ranking = list(ranking)
    if not relevant.issubset(ranking):
        raise ValueError("relevant entries must be gallery indices")
    hits = 0
    total = 0.0
    for position, index in enumerate(ranking, start=1):
        if index in relevant:
            hits += 1
            total += hits / position
    return total / len(relevant)


def rank_at_k(runs, k: int) -> float:
    """Fraction of probes with a relevant entry somewhere in the top k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    runs = list(runs)
    if not runs:
        raise ValueError("no probe runs to evaluate")
    hits = sum(
        1 for run in runs if any(i in run.relevant for i in run.ranking[:k])
    )
    return hits / len(runs)


def run_retrieval(probes, gallery: Gallery, matrix: EmbeddingMatrix, policy: str, k: int = 5) -> RetrievalReport:
    _check_policy(policy)
    if k < 1:
        raise ValueError("k must be at least 1")
    runs = []
    for probe in probes:
        relevant = frozenset(
            i for i, entry in enumerate(gallery.entries)
            if entry.family_id == probe.family_id
        )
        if not relevant:
            raise NoRelevantError(
                f"probe {probe.person_id!r} has no relevant gallery entries"
            )
        scores = score_probe(probe, gallery, matrix, policy)
        ranking = rank_gallery(scores)
        ap = average_precision(ranking, relevant)
        runs.append(
            ProbeRun(
                person_id=probe.person_id,
                ranking=tuple(int(i) for i in ranking),
                scores=tuple(float(s) for s in scores),
                relevant=relevant,
                average_precision=ap,
            )
        )
    mean_ap = sum(r.average_precision for r in runs) / len(runs)
    return RetrievalReport(
        policy=policy,
        mean_average_precision=mean_ap,
        rank_at_k=rank_at_k(runs, k),
        k=k,
        runs=tuple(runs),
    )


# -- file formats ------------------------------------------------------------

def load_probes(path, index: DatasetIndex) -> list[ProbeSubject]:
    """Probe subjects from JSONL; image ids resolve to rows via the index."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    probes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise ParseError("blank line", line=lineno)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(obj, dict) or set(obj) != {"person_id", "family_id", "image_ids"}:
            raise ParseError(
                "expected keys person_id, family_id, image_ids", line=lineno
            )
        image_ids = obj["image_ids"]
        if not isinstance(image_ids, list) or not image_ids:
            raise ParseError("image_ids must be a nonempty list", line=lineno)
        rows = []
        for image_id in image_ids:
            if image_id not in index.image_lookup:
                raise UnknownImageIdError(f"unknown image id {image_id!r}")
            rows.append(index.image_lookup[image_id].row)
        probes.append(
            ProbeSubject(
                person_id=obj["person_id"],
                family_id=obj["family_id"],
                rows=tuple(rows),
                image_ids=tuple(image_ids),
            )
        )
    return probes


def write_probes(probes, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for probe in probes:
            if probe.image_ids is None:
                raise ValueError(
                    f"probe {probe.person_id!r} carries no image ids to write"
                )
            obj = {
                "person_id": probe.person_id,
                "family_id": probe.family_id,
                "image_ids": list(probe.image_ids),
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def write_ranking_csv(run: ProbeRun, gallery: Gallery, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank,gallery_image_id,score\n")
        for position, index in enumerate(run.ranking, start=1):
            entry = gallery.entries[index]
            fh.write(f"{position},{entry.image_id},{run.scores[index]!r}\n")


def write_retrieval_report(report: RetrievalReport, path) -> None:
    obj = {
        "policy": report.policy,
        "mAP": report.mean_average_precision,
        "rank_at_K": report.rank_at_k,
        "K": report.k,
        "per_probe_ap": {
            run.person_id: run.average_precision for run in report.runs
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
