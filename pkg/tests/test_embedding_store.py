import json
import struct

import numpy as np
import pytest

from kinsearch.embedding_store import (
    EmbeddingMatrix,
    ImageRecord,
    KinType,
    build_index,
    load_embeddings,
    load_manifest,
    parse_kin_type,
    write_embeddings,
    write_manifest,
)
from kinsearch.errors import (
    BadMagicError,
    DuplicateIdError,
    NonFiniteValueError,
    ParseError,
    PersonFamilyConflictError,
    RowOutOfRangeError,
    TruncatedFileError,
    UnknownKinTypeError,
)
from kinsearch.synthetic import SyntheticConfig, generate


def _records(*triples):
    return [
        ImageRecord(image_id=i, person_id=p, family_id=f, row=r, detected=True)
        for r, (i, p, f) in enumerate(triples)
    ]


class TestManifest:
    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("")
        assert load_manifest(path) == []

    def test_duplicate_image_id_rejected(self, tmp_path):
        recs = [
            ImageRecord("i1", "p1", "f1", 0, True),
            ImageRecord("i1", "p2", "f2", 1, True),
        ]
        path = tmp_path / "m.jsonl"
        write_manifest(recs, path)
        with pytest.raises(DuplicateIdError):
            load_manifest(path)

    def test_three_lines_round_trip(self, tmp_path):
        recs = [
            ImageRecord("a", "p1", "f1", 0, True),
            ImageRecord("b", "p1", "f1", 1, False),
            ImageRecord("c", "p2", "f2", 2, True),
        ]
        path = tmp_path / "m.jsonl"
        write_manifest(recs, path)
        assert load_manifest(path) == recs

    def test_person_under_two_families_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(
            [
                ImageRecord("a", "p1", "f1", 0, True),
                ImageRecord("b", "p1", "f2", 1, True),
            ],
            path,
        )
        with pytest.raises(PersonFamilyConflictError):
            load_manifest(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "m.jsonl"
        good = json.dumps(
            {"image_id": "a", "person_id": "p", "family_id": "f", "row": 0, "detected": True}
        )
        path.write_text(good + "\n{oops\n")
        with pytest.raises(ParseError) as excinfo:
            load_manifest(path)
        assert excinfo.value.line == 2

    @pytest.mark.parametrize(
        "obj",
        [
            {"image_id": "a", "person_id": "p", "family_id": "f", "row": 0},
            {"image_id": "a", "person_id": "p", "family_id": "f", "row": 0,
             "detected": True, "extra": 1},
            {"image_id": "a", "person_id": "p", "family_id": "f", "row": -1,
             "detected": True},
            {"image_id": "a", "person_id": "p", "family_id": "f", "row": 0,
             "detected": "yes"},
            {"image_id": 7, "person_id": "p", "family_id": "f", "row": 0,
             "detected": True},
        ],
    )
    def test_bad_records_rejected(self, tmp_path, obj):
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ParseError):
            load_manifest(path)

    def test_blank_line_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("\n")
        with pytest.raises(ParseError):
            load_manifest(path)

    def test_empty_records_write_empty_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest([], path)
        assert path.read_bytes() == b""

    def test_random_round_trips(self, tmp_path):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n = int(rng.integers(0, 40))
            recs = [
                ImageRecord(
                    image_id=f"img{j:03d}",
                    person_id=f"per{j % 7}",
                    family_id=f"fam{j % 7 % 3}",
                    row=j,
                    detected=bool(rng.integers(0, 2)),
                )
                for j in range(n)
            ]
            path = tmp_path / f"m{trial}.jsonl"
            write_manifest(recs, path)
            assert load_manifest(path) == recs


class TestEmbeddingsFile:
    def test_header_only_empty_matrix(self, tmp_path):
        path = tmp_path / "e.keb1"
        path.write_bytes(struct.pack("<4sIII", b"KEB1", 1, 0, 512))
        matrix = load_embeddings(path)
        assert matrix.n == 0
        assert matrix.dim == 512

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "e.keb1"
        path.write_bytes(struct.pack("<4sIII", b"KEB1", 1, 2, 3) + b"\0" * 20)
        with pytest.raises(TruncatedFileError):
            load_embeddings(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "e.keb1"
        payload = np.zeros((2, 3), dtype="<f4").tobytes()
        path.write_bytes(struct.pack("<4sIII", b"KEB1", 1, 2, 3) + payload + b"x")
        with pytest.raises(TruncatedFileError):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.keb1"
        path.write_bytes(b"NOPE" + b"\0" * 12)
        with pytest.raises(BadMagicError):
            load_embeddings(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "e.keb1"
        path.write_bytes(struct.pack("<4sIII", b"KEB1", 9, 0, 4))
        with pytest.raises(BadMagicError):
            load_embeddings(path)

    def test_nonfinite_value_located(self, tmp_path):
        values = np.zeros((3, 4), dtype="<f4")
        values[1, 2] = np.nan
        path = tmp_path / "e.keb1"
        path.write_bytes(struct.pack("<4sIII", b"KEB1", 1, 3, 4) + values.tobytes())
        with pytest.raises(NonFiniteValueError) as excinfo:
            load_embeddings(path)
        assert (excinfo.value.row, excinfo.value.col) == (1, 2)

    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        matrix = EmbeddingMatrix(rng.normal(size=(100, 64)))
        path = tmp_path / "e.keb1"
        write_embeddings(matrix, path)
        loaded = load_embeddings(path)
        assert loaded == matrix
        assert loaded.values.tobytes() == matrix.values.tobytes()

    def test_two_by_three_file_size(self, tmp_path):
        path = tmp_path / "e.keb1"
        write_embeddings(EmbeddingMatrix(np.ones((2, 3))), path)
        assert path.stat().st_size == 4 + 4 + 4 + 4 + 24

    def test_empty_matrix_round_trip(self, tmp_path):
        path = tmp_path / "e.keb1"
        write_embeddings(EmbeddingMatrix(np.empty((0, 7))), path)
        assert load_embeddings(path) == EmbeddingMatrix(np.empty((0, 7)))

    def test_matrix_rejects_nonfinite(self):
        bad = np.ones((2, 2))
        bad[0, 1] = np.inf
        with pytest.raises(NonFiniteValueError):
            EmbeddingMatrix(bad)


class TestBuildIndex:
    def test_single_family(self):
        matrix = EmbeddingMatrix(np.ones((1, 2)))
        index = build_index(_records(("i1", "p1", "f1")), matrix)
        assert index.family_count == 1
        assert index.families == {"f1": {"p1": ["i1"]}}

    def test_row_out_of_range(self):
        matrix = EmbeddingMatrix(np.ones((1, 2)))
        recs = [ImageRecord("i1", "p1", "f1", 1, True)]
        with pytest.raises(RowOutOfRangeError):
            build_index(recs, matrix)

    def test_763_families_counted(self):
        config = SyntheticConfig(
            families=763,
            persons_per_family=(1, 1),
            images_per_person=(1, 1),
            dim=4,
            signal_dims=2,
            seed=1,
        )
        records, matrix = generate(config)
        index = build_index(records, matrix)
        assert index.family_count == 763

    def test_order_independent(self):
        matrix = EmbeddingMatrix(np.ones((4, 2)))
        recs = _records(
            ("b", "p2", "f1"), ("a", "p1", "f1"), ("d", "p3", "f2"), ("c", "p3", "f2")
        )
        forward = build_index(recs, matrix)
        backward = build_index(list(reversed(recs)), matrix)
        assert forward == backward
        assert list(forward.families) == ["f1", "f2"]
        assert list(forward.families["f1"]) == ["p1", "p2"]
        assert forward.families["f2"]["p3"] == ["c", "d"]
        assert list(forward.image_lookup) == ["a", "b", "c", "d"]


class TestKinType:
    def test_closed_enumeration(self):
        assert parse_kin_type("GMGS") is KinType.GMGS
        assert len(KinType) == 11
        with pytest.raises(UnknownKinTypeError):
            parse_kin_type("COUSIN")
