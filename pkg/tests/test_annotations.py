import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import meshgen
from meshroi import (
    AnnotationDocument,
    Camera,
    MeshFingerprint,
    SelectionSet,
    load_document,
    parse_obj,
    save_document,
)
from meshroi.errors import (
    EmptySelection,
    FingerprintMismatch,
    InvalidFaces,
    MeshMismatch,
    SchemaViolation,
    UnknownId,
    VersionUnsupported,
)

GOLDEN = Path(__file__).parent / "golden" / "three_annotations.anno.json"


def tiny_mesh():
    return parse_obj(meshgen.grid_plane_obj(2))  # 8 faces


def selection(mesh, faces, kind="brush"):
    camera = meshgen.head_on_camera(extent=1.0, viewport=64, distance=2.0)
    return SelectionSet(
        faces=np.asarray(faces, dtype=np.int64),
        camera=camera,
        gesture_kind=kind,
        mesh_fingerprint=mesh.fingerprint(),
    )


class TestCrud:
    def test_create_sorts_and_counts(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        rec_id = doc.create_annotation(selection(mesh, [3, 1, 2]), "crack", (255, 0, 0))
        assert rec_id == "a-0001"
        assert doc.get(rec_id).faces == [1, 2, 3]

    def test_overlapping_records_coexist(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [1, 2, 3]), "crack", (255, 0, 0))
        doc.create_annotation(selection(mesh, [2, 3]), "stain", (0, 0, 255))
        assert len(doc) == 2
        assert doc.get("a-0002").faces == [2, 3]

    def test_empty_selection_rejected(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        with pytest.raises(EmptySelection):
            doc.create_annotation(selection(mesh, []), "x", (1, 2, 3))

    def test_mesh_mismatch_rejected(self):
        mesh = tiny_mesh()
        other = parse_obj(meshgen.grid_plane_obj(3))
        doc = AnnotationDocument(mesh.fingerprint())
        with pytest.raises(MeshMismatch):
            doc.create_annotation(selection(other, [0]), "x", (1, 2, 3))

    def test_update_text_only_preserves_rest(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        rid = doc.create_annotation(selection(mesh, [0, 4]), "old", (9, 9, 9))
        doc.update_annotation(rid, text="new")
        rec = doc.get(rid)
        assert rec.text == "new" and rec.color == (9, 9, 9) and rec.faces == [0, 4]

    def test_update_faces_verbatim_superset(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        rid = doc.create_annotation(selection(mesh, [0]), "t", (1, 1, 1))
        doc.update_annotation(rid, faces=[0, 1, 2, 5])
        assert doc.get(rid).faces == [0, 1, 2, 5]

    def test_update_unknown_id(self):
        doc = AnnotationDocument(tiny_mesh().fingerprint())
        with pytest.raises(UnknownId):
            doc.update_annotation("a-0042", text="?")

    def test_update_invalid_faces(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        rid = doc.create_annotation(selection(mesh, [0]), "t", (1, 1, 1))
        with pytest.raises(InvalidFaces):
            doc.update_annotation(rid, faces=[])
        with pytest.raises(InvalidFaces):
            doc.update_annotation(rid, faces=[99])

    def test_delete_then_gone_then_unknown(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        rid = doc.create_annotation(selection(mesh, [0]), "t", (1, 1, 1))
        doc.delete_annotation(rid)
        assert len(doc) == 0
        with pytest.raises(UnknownId):
            doc.delete_annotation(rid)

    def test_counter_never_reused_after_delete(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0]), "a", (1, 1, 1))
        doc.delete_annotation("a-0001")
        rid = doc.create_annotation(selection(mesh, [1]), "b", (1, 1, 1))
        assert rid == "a-0002"

    def test_color_validation(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        with pytest.raises(SchemaViolation):
            doc.create_annotation(selection(mesh, [0]), "t", (300, 0, 0))
        with pytest.raises(SchemaViolation):
            doc.create_annotation(selection(mesh, [0]), "t", (0.5, 0, 0))


class TestSerialization:
    def test_empty_document_shape(self):
        doc = AnnotationDocument(MeshFingerprint(sha256="0" * 64, face_count=4))
        obj = json.loads(save_document(doc))
        assert obj == {
            "format": "art3mis-annotations",
            "version": 1,
            "mesh": {"sha256": "0" * 64, "face_count": 4},
            "annotations": [],
        }

    def test_save_load_save_byte_identical(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [5, 0, 3]), "crack — 裂缝", (12, 200, 7))
        first = save_document(doc)
        again = save_document(load_document(first))
        assert first == again

    def test_trailing_newline_and_utf8(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0]), "épi", (1, 2, 3))
        data = save_document(doc)
        assert data.endswith(b"\n")
        assert "épi" in data.decode("utf-8")

    def test_loaded_counter_continues(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0]), "a", (1, 1, 1))
        doc.create_annotation(selection(mesh, [1]), "b", (1, 1, 1))
        loaded = load_document(save_document(doc))
        rid = loaded.create_annotation(selection(mesh, [2]), "c", (1, 1, 1))
        assert rid == "a-0003"

    def test_fingerprint_checked_against_mesh(self):
        mesh = tiny_mesh()
        other = parse_obj(meshgen.grid_plane_obj(3))
        doc = AnnotationDocument(mesh.fingerprint())
        data = save_document(doc)
        load_document(data, mesh)
        with pytest.raises(FingerprintMismatch):
            load_document(data, other)
        # explicit escape hatch for re-exported meshes with identical face order
        load_document(data, other, allow_mesh_mismatch=True)

    def test_face_index_out_of_range_names_path(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0]), "t", (1, 1, 1))
        raw = json.loads(save_document(doc))
        raw["annotations"][0]["faces"] = [80]  # face_count is 8
        with pytest.raises(SchemaViolation) as err:
            load_document(json.dumps(raw).encode())
        assert "annotations[0].faces" in str(err.value)

    def test_version_unsupported(self):
        doc = AnnotationDocument(MeshFingerprint(sha256="0" * 64, face_count=4))
        data = save_document(doc).replace(b'"version": 1', b'"version": 9')
        with pytest.raises(VersionUnsupported):
            load_document(data)

    def test_not_json(self):
        with pytest.raises(SchemaViolation):
            load_document(b"{nope")

    def test_unsorted_faces_rejected(self):
        doc = AnnotationDocument(MeshFingerprint(sha256="0" * 64, face_count=9))
        raw = json.loads(save_document(doc))
        raw["annotations"] = [{"id": "a-0001", "color": [1, 1, 1], "text": "", "faces": [3, 1]}]
        with pytest.raises(SchemaViolation):
            load_document(json.dumps(raw).encode())

    def test_record_independence_on_delete(self):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0]), "keep", (1, 1, 1))
        doc.create_annotation(selection(mesh, [1]), "drop", (2, 2, 2))
        doc.create_annotation(selection(mesh, [2]), "keep2", (3, 3, 3))
        before = json.loads(save_document(doc))["annotations"]
        doc.delete_annotation("a-0002")
        after = json.loads(save_document(doc))["annotations"]
        assert after == [before[0], before[2]]


ids = st.integers(min_value=0, max_value=7)
texts = st.text(max_size=40)
colors = st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))


class TestRoundTripProperty:
    @settings(max_examples=60, deadline=None)
    @given(
        records=st.lists(
            st.tuples(st.lists(ids, min_size=1, max_size=8), texts, colors),
            max_size=6,
        )
    )
    def test_load_save_identity(self, records):
        mesh = tiny_mesh()
        doc = AnnotationDocument(mesh.fingerprint())
        for faces, text, color in records:
            doc.create_annotation(selection(mesh, sorted(set(faces))), text, color)
        data = save_document(doc)
        loaded = load_document(data)
        assert save_document(loaded) == data
        assert [r.faces for r in loaded.annotations] == [r.faces for r in doc.annotations]
        assert [r.text for r in loaded.annotations] == [r.text for r in doc.annotations]


class TestGolden:
    def test_three_annotation_document_bytes_stable(self):
        mesh = parse_obj(meshgen.grid_plane_obj(4))
        doc = AnnotationDocument(mesh.fingerprint())
        doc.create_annotation(selection(mesh, [0, 1, 2, 3]), "humidity damage", (200, 40, 40))
        doc.create_annotation(
            selection(mesh, [2, 3, 10, 11], kind="lasso"), "crack — fissure", (40, 200, 40)
        )
        doc.create_annotation(selection(mesh, [30, 31]), "mended área", (40, 40, 200))
        assert save_document(doc) == GOLDEN.read_bytes()
