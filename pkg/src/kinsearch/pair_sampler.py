"""Balanced positive/negative pair sampling over a family index.

Anchor families are drawn uniformly with replacement, all of them up front;
each iteration then pairs one anchor face with an image of another person in
the same family (positive) and with an image of a person from a different
family (negative), so the i-th positive and i-th negative share their first
image. Only images flagged ``detected`` participate.

Randomness comes from numpy's PCG64 seeded with the caller's seed; bounded
integer draws use ``Generator.integers`` (unbiased rejection sampling), so a
(index, k, seed) triple fully determines the output.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .embedding_store import DatasetIndex, KinType, parse_kin_type
from .errors import NoEligibleAnchorError, NotEnoughFamiliesError, ParseError

PAIRS_HEADER = ("image_a", "image_b", "label", "kin_type")


@dataclass(frozen=True)
class Pair:
    image_a: str
    image_b: str
    is_kin: bool
    kin_type: KinType | None = None


@dataclass
class PairSet:
    """Ordered pairs plus the seed that generated them (0 if loaded)."""

    pairs: list[Pair] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.pairs)


def _eligibility(index: DatasetIndex):
    """Persons with a detected image, grouped per family, in sorted order."""
    detected_images: dict[str, list[str]] = {}
    persons_by_family: dict[str, list[str]] = {}
    for family_id, persons in index.families.items():
        usable = []
        for person_id, images in persons.items():
            kept = [i for i in images if index.image_lookup[i].detected]
            if kept:
                detected_images[person_id] = kept
                usable.append(person_id)
        if usable:
            persons_by_family[family_id] = usable
    return detected_images, persons_by_family


def sample_validation_pairs(index: DatasetIndex, k: int, seed: int) -> PairSet:
    """Draw k positive and k negative pairs (positives first in the output)."""
    detected_images, persons_by_family = _eligibility(index)
    anchor_families = [f for f, ps in persons_by_family.items() if len(ps) >= 2]
    negative_pool = list(persons_by_family)
    if not anchor_families:
        raise NoEligibleAnchorError(
            "no family has at least two persons with detected images"
        )
    if len(negative_pool) < 2:
        raise NotEnoughFamiliesError(
            "sampling negatives needs at least two families with detected images"
        )

    rng = np.random.Generator(np.random.PCG64(seed))
    anchors = rng.integers(0, len(anchor_families), size=k)
    positives: list[Pair] = []
    negatives: list[Pair] = []
    for i in range(k):
        family_id = anchor_families[anchors[i]]
        persons = persons_by_family[family_id]
        anchor_person = persons[rng.integers(0, len(persons))]
        others = [p for p in persons if p != anchor_person]
        positive_person = others[rng.integers(0, len(others))]
        other_families = [f for f in negative_pool if f != family_id]
        negative_family = other_families[rng.integers(0, len(other_families))]
        neg_persons = persons_by_family[negative_family]
        negative_person = neg_persons[rng.integers(0, len(neg_persons))]

        anchor_images = detected_images[anchor_person]
        anchor_face = anchor_images[rng.integers(0, len(anchor_images))]
        positive_images = detected_images[positive_person]
        positive_face = positive_images[rng.integers(0, len(positive_images))]
        negative_images = detected_images[negative_person]
        negative_face = negative_images[rng.integers(0, len(negative_images))]

        positives.append(Pair(anchor_face, positive_face, is_kin=True))
        negatives.append(Pair(anchor_face, negative_face, is_kin=False))
    return PairSet(pairs=positives + negatives, seed=seed)


def write_pairs(pair_set: PairSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PAIRS_HEADER)
        for pair in pair_set.pairs:
            writer.writerow(
                [
                    pair.image_a,
                    pair.image_b,
                    "1" if pair.is_kin else "0",
                    pair.kin_type.value if pair.kin_type is not None else "",
                ]
            )


def load_pairs(path) -> PairSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        if tuple(header) != PAIRS_HEADER:
            raise ParseError(f"expected header {','.join(PAIRS_HEADER)}", line=1)
        pairs: list[Pair] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            image_a, image_b, label, kin_token = row
            if label not in ("0", "1"):
                raise ParseError(f"label must be 0 or 1, got {label!r}", line=lineno)
            kin_type = parse_kin_type(kin_token) if kin_token else None
            pairs.append(Pair(image_a, image_b, is_kin=label == "1", kin_type=kin_type))
    return PairSet(pairs=pairs, seed=0)
