"""On-disk embedding and metadata formats consumed by the rest of the pipeline.

Two files describe a dataset:

* a KEB1 embedding file: 16-byte header (magic ``KEB1``, version, row count,
  dimension, all little-endian u32 after the magic) followed by the row-major
  float32 payload;
* a manifest in JSON Lines, one object per image with keys ``image_id``,
  ``person_id``, ``family_id``, ``row``, ``detected``.

Values are stored as float32 but surfaced as float64 so downstream arithmetic
runs in double precision; a write/load round trip is bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateIdError,
    NonFiniteValueError,
    ParseError,
    PersonFamilyConflictError,
    RowOutOfRangeError,
    TruncatedFileError,
    UnknownImageIdError,
    UnknownKinTypeError,
)

KEB1_MAGIC = b"KEB1"
KEB1_VERSION = 1
_HEADER = struct.Struct("<4sIII")

MANIFEST_KEYS = ("image_id", "person_id", "family_id", "row", "detected")


class KinType(str, Enum):
    """Closed set of pair relationship labels."""

    MD = "MD"
    MS = "MS"
    SIBS = "SIBS"
    SS = "SS"
    BB = "BB"
    FD = "FD"
    FS = "FS"
    GFGD = "GFGD"
    GFGS = "GFGS"
    GMGD = "GMGD"
    GMGS = "GMGS"


def parse_kin_type(token: str) -> KinType:
    try:
        return KinType(token)
    except ValueError:
        raise UnknownKinTypeError(f"unknown kin type {token!r}") from None


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    person_id: str
    family_id: str
    row: int
    detected: bool


class EmbeddingMatrix:
    """Dense n x dim table of embeddings.

    Values live on the float32 grid (quantized at construction) but are held
    as float64, so every computation downstream is double precision while
    writing back to disk stays lossless.
    """

    def __init__(self, values: np.ndarray, dim: int | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            if arr.size == 0 and dim is not None:
                arr = arr.reshape(0, dim)
            else:
                raise ValueError("values must be a 2-D array")
        if dim is None:
            dim = int(arr.shape[1])
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        if arr.shape[1] != dim:
            raise ValueError(f"expected dimension {dim}, got {arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            r, c = np.argwhere(~np.isfinite(arr))[0]
            raise NonFiniteValueError(int(r), int(c))
        # snap to the float32 grid so write/load round trips are bit-exact
        arr = np.ascontiguousarray(arr.astype(np.float32).astype(np.float64))
        self.dim = dim
        self.values = arr
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"EmbeddingMatrix(n={self.n}, dim={self.dim})"


@dataclass(frozen=True)
class DatasetIndex:
    """Image -> person -> family structure over one embedding matrix.

    All mappings iterate in lexicographic id order regardless of the order
    records were supplied in.
    """

    families: dict[str, dict[str, list[str]]]
    image_lookup: dict[str, ImageRecord]
    family_count: int

    def record(self, image_id: str) -> ImageRecord:
        try:
            return self.image_lookup[image_id]
        except KeyError:
            raise UnknownImageIdError(f"unknown image id {image_id!r}") from None


def load_manifest(path) -> list[ImageRecord]:
    """Parse a JSONL manifest, rejecting duplicates and person/family conflicts."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    records: list[ImageRecord] = []
    seen_ids: set[str] = set()
    person_family: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise ParseError("blank line", line=lineno)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(obj, dict) or set(obj) != set(MANIFEST_KEYS):
            raise ParseError(
                f"expected exactly keys {list(MANIFEST_KEYS)}", line=lineno
            )
        if not all(isinstance(obj[k], str) for k in ("image_id", "person_id", "family_id")):
            raise ParseError("id fields must be strings", line=lineno)
        if not isinstance(obj["row"], int) or isinstance(obj["row"], bool) or obj["row"] < 0:
            raise ParseError("row must be a nonnegative integer", line=lineno)
        if not isinstance(obj["detected"], bool):
            raise ParseError("detected must be a boolean", line=lineno)
        rec = ImageRecord(
            image_id=obj["image_id"],
            person_id=obj["person_id"],
            family_id=obj["family_id"],
            row=obj["row"],
            detected=obj["detected"],
        )
        if rec.image_id in seen_ids:
            raise DuplicateIdError(f"duplicate image id {rec.image_id!r}")
        prev = person_family.get(rec.person_id)
        if prev is not None and prev != rec.family_id:
            raise PersonFamilyConflictError(
                f"person {rec.person_id!r} appears under families "
                f"{prev!r} and {rec.family_id!r}"
            )
        seen_ids.add(rec.image_id)
        person_family[rec.person_id] = rec.family_id
        records.append(rec)
    return records


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "image_id": rec.image_id,
                "person_id": rec.person_id,
                "family_id": rec.family_id,
                "row": rec.row,
                "detected": rec.detected,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def load_embeddings(path) -> EmbeddingMatrix:
    """Read a KEB1 file, rejecting anything that deviates from the format."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) >= 4 and blob[:4] != KEB1_MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}")
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(
            f"header needs {_HEADER.size} bytes, file has {len(blob)}"
        )
    _, version, n, dim = _HEADER.unpack_from(blob)
    if version != KEB1_VERSION:
        raise BadMagicError(f"unsupported version {version}")
    if dim == 0:
        raise ParseError("embedding dimension must be positive")
    expected = _HEADER.size + n * dim * 4
    if len(blob) != expected:
        raise TruncatedFileError(
            f"expected {expected} bytes for {n}x{dim} payload, file has {len(blob)}"
        )
    raw = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(n, dim)
    if not np.all(np.isfinite(raw)):
        r, c = np.argwhere(~np.isfinite(raw))[0]
        raise NonFiniteValueError(int(r), int(c))
    return EmbeddingMatrix(raw.astype(np.float64), dim=dim)


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(KEB1_MAGIC, KEB1_VERSION, matrix.n, matrix.dim))
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())


def build_index(records, matrix: EmbeddingMatrix) -> DatasetIndex:
    """Assemble the family/person/image hierarchy with canonical ordering."""
    seen_ids: set[str] = set()
    person_family: dict[str, str] = {}
    grouping: dict[str, dict[str, list[str]]] = {}
    lookup: dict[str, ImageRecord] = {}
    for rec in records:
        if rec.row >= matrix.n or rec.row < 0:
            raise RowOutOfRangeError(
                f"image {rec.image_id!r} references row {rec.row}, "
                f"matrix has {matrix.n} rows"
            )
        if rec.image_id in seen_ids:
            raise DuplicateIdError(f"duplicate image id {rec.image_id!r}")
        prev = person_family.get(rec.person_id)
        if prev is not None and prev != rec.family_id:
            raise PersonFamilyConflictError(
                f"person {rec.person_id!r} appears under families "
                f"{prev!r} and {rec.family_id!r}"
            )
        seen_ids.add(rec.image_id)
        person_family[rec.person_id] = rec.family_id
        grouping.setdefault(rec.family_id, {}).setdefault(rec.person_id, []).append(
            rec.image_id
        )
        lookup[rec.image_id] = rec
    families = {
        fid: {pid: sorted(images) for pid, images in sorted(persons.items())}
        for fid, persons in sorted(grouping.items())
    }
    image_lookup = {iid: lookup[iid] for iid in sorted(lookup)}
    return DatasetIndex(
        families=families,
        image_lookup=image_lookup,
        family_count=len(families),
    )
