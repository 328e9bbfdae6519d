"""Walkthrough: the on-disk formats and cosine scoring.

Generates a tiny synthetic dataset, writes it to the two pipeline formats
(JSONL manifest + KEB1 embeddings), reads everything back, and scores a few
image pairs by cosine similarity.
"""
import tempfile
from pathlib import Path

import numpy as np

from kinsearch import (
    build_index,
    cosine_similarity,
    l2_normalize,
    load_embeddings,
    load_manifest,
    write_embeddings,
    write_manifest,
)
from kinsearch.synthetic import SyntheticConfig, generate

workdir = Path(tempfile.mkdtemp(prefix="kinsearch-demo-"))
print(f"working in {workdir}\n")

# A small dataset: 6 families, 2-3 persons each, low ambient noise so the
# family structure is visible in raw cosine scores.
config = SyntheticConfig(
    families=6,
    persons_per_family=(2, 3),
    images_per_person=(1, 2),
    dim=16,
    signal_dims=4,
    distractor_noise=0.3,
    seed=7,
)
records, matrix = generate(config)
print(f"generated {matrix.n} embeddings of dimension {matrix.dim}")

# Round-trip through the file formats. Embeddings are float32 on disk and
# float64 in memory; the write/load cycle is bit-exact.
manifest_path = workdir / "manifest.jsonl"
embeddings_path = workdir / "embeddings.keb1"
write_manifest(records, manifest_path)
write_embeddings(matrix, embeddings_path)
reloaded = load_embeddings(embeddings_path)
print(f"KEB1 file is {embeddings_path.stat().st_size} bytes "
      f"(16-byte header + {matrix.n}x{matrix.dim} float32)")
print(f"round trip bit-exact: {reloaded == matrix}\n")

index = build_index(load_manifest(manifest_path), reloaded)
print(f"index spans {index.family_count} families")

# Compare a within-family pair against a cross-family pair.
family_a, family_b = list(index.families)[:2]
images_a = [img for persons in index.families[family_a].values() for img in persons]
images_b = [img for persons in index.families[family_b].values() for img in persons]

row = lambda image_id: matrix.row(index.image_lookup[image_id].row)
same_family = cosine_similarity(row(images_a[0]), row(images_a[1]))
cross_family = cosine_similarity(row(images_a[0]), row(images_b[0]))
print(f"cosine within {family_a}:        {same_family:+.4f}")
print(f"cosine {family_a} vs {family_b}: {cross_family:+.4f}")

# Normalization only changes vector length, never the cosine score.
unit = l2_normalize(row(images_a[0]))
print(f"\n|normalized| = {np.linalg.norm(unit):.12f}")
print("cosine after normalizing one side:",
      f"{cosine_similarity(unit, row(images_a[1])):+.4f} (unchanged)")
