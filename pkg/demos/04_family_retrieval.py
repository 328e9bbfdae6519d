"""Walkthrough: family search over a gallery with score aggregation.

Each probe subject owns several images; the gallery holds everyone else.
Three scoring policies are compared on mean average precision and rank@K:
averaging the probe's normalized embeddings, averaging per-image cosine
scores, and taking the best per-image score.
"""
from kinsearch import build_index, run_retrieval
from kinsearch.retrieval import ProbeSubject, gallery_from_records
from kinsearch.synthetic import SyntheticConfig, generate

config = SyntheticConfig(
    families=40,
    persons_per_family=(3, 5),
    images_per_person=(2, 5),
    distractor_noise=0.8,
    seed=13,
)
records, matrix = generate(config)
index = build_index(records, matrix)

# One probe person per family; the rest of the family stays in the gallery.
probes = []
probe_images = set()
for family_id, persons in index.families.items():
    person_id, images = next(iter(persons.items()))
    probes.append(
        ProbeSubject(
            person_id=person_id,
            family_id=family_id,
            rows=tuple(index.image_lookup[i].row for i in images),
        )
    )
    probe_images.update(images)
gallery = gallery_from_records(
    [r for r in records if r.image_id not in probe_images]
)
print(f"{len(probes)} probe subjects, {len(gallery)} gallery images\n")

print(f"{'policy':<16} {'mAP':>8} {'rank@5':>8}")
for policy in ("mean-embedding", "mean", "max"):
    report = run_retrieval(probes, gallery, matrix, policy, k=5)
    print(f"{policy:<16} {report.mean_average_precision:8.4f} "
          f"{report.rank_at_k:8.4f}")

# Peek at one probe's top of the ranking.
report = run_retrieval(probes, gallery, matrix, "mean", k=5)
run = report.runs[0]
print(f"\ntop 5 for probe {run.person_id} (family {probes[0].family_id}):")
for position, gallery_index in enumerate(run.ranking[:5], start=1):
    entry = gallery.entries[gallery_index]
    marker = "  <- relevant" if gallery_index in run.relevant else ""
    print(f"  {position}. {entry.image_id} "
          f"score {run.scores[gallery_index]:+.4f}{marker}")
print(f"average precision for this probe: {run.average_precision:.4f}")
