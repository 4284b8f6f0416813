"""Annotation records and their canonical JSON document.

Each record is colour + free text + the face indices of one region; records
may overlap. Documents are bound to a mesh fingerprint and serialize to a
byte-stable canonical JSON form so saves diff cleanly and round-trip exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import (
    EmptySelection,
    FingerprintMismatch,
    InvalidFaces,
    MeshMismatch,
    SchemaViolation,
    UnknownId,
    VersionUnsupported,
)
from .mesh import Mesh, MeshFingerprint
from .selection import SelectionSet

FORMAT_NAME = "art3mis-annotations"
FORMAT_VERSION = 1
FILE_EXTENSION = ".anno.json"

_ID_PATTERN = re.compile(r"^a-(\d+)$")
_SHA256_PATTERN = re.compile(r"^[0-9a-f]{64}$")


@dataclass
class AnnotationRecord:
    id: str
    color: tuple[int, int, int]
    text: str
    faces: list[int]  # sorted, duplicate-free


def _check_color(color, path: str = "color") -> tuple[int, int, int]:
    if (
        not isinstance(color, (list, tuple))
        or len(color) != 3
        or not all(isinstance(c, int) and not isinstance(c, bool) for c in color)
    ):
        raise SchemaViolation(path, "color must be three integers")
    if not all(0 <= c <= 255 for c in color):
        raise SchemaViolation(path, "color channels must be in [0, 255]")
    return int(color[0]), int(color[1]), int(color[2])


def _normalize_faces(faces, face_count: int) -> list[int]:
    try:
        cleaned = sorted({int(f) for f in faces})
    except (TypeError, ValueError):
        raise InvalidFaces("faces must be integers") from None
    if not cleaned:
        raise InvalidFaces("faces must not be empty")
    if cleaned[0] < 0 or cleaned[-1] >= face_count:
        raise InvalidFaces(
            f"face index out of range 0..{face_count - 1}: {cleaned[0] if cleaned[0] < 0 else cleaned[-1]}"
        )
    return cleaned


class AnnotationDocument:
    """Ordered collection of annotation records for one fingerprinted mesh."""

    def __init__(self, mesh_fingerprint: MeshFingerprint):
        self.mesh_fingerprint = mesh_fingerprint
        self.face_count = mesh_fingerprint.face_count
        self._records: list[AnnotationRecord] = []
        self._counter = 0

    # -- queries ---------------------------------------------------------

    @property
    def annotations(self) -> tuple[AnnotationRecord, ...]:
        return tuple(self._records)

    def get(self, annotation_id: str) -> AnnotationRecord:
        for rec in self._records:
            if rec.id == annotation_id:
                return rec
        raise UnknownId(f"no annotation {annotation_id!r}")

    def __len__(self) -> int:
        return len(self._records)

    # -- mutations ---------------------------------------------------------

    def create_annotation(
        self, selection: SelectionSet, text: str, color: tuple[int, int, int]
    ) -> str:
        if len(selection) == 0:
            raise EmptySelection("cannot annotate an empty selection")
        if selection.mesh_fingerprint != self.mesh_fingerprint:
            raise MeshMismatch("selection comes from a different mesh than this document")
        faces = _normalize_faces(selection.faces.tolist(), self.face_count)
        self._counter += 1
        rec = AnnotationRecord(
            id=f"a-{self._counter:04d}",
            color=_check_color(color),
            text=str(text),
            faces=faces,
        )
        self._records.append(rec)
        return rec.id

    def update_annotation(
        self,
        annotation_id: str,
        text: str | None = None,
        color: tuple[int, int, int] | None = None,
        faces: list[int] | None = None,
    ) -> None:
        rec = self.get(annotation_id)
        if faces is not None:
            rec.faces = _normalize_faces(faces, self.face_count)
        if color is not None:
            rec.color = _check_color(color)
        if text is not None:
            rec.text = str(text)

    def delete_annotation(self, annotation_id: str) -> None:
        rec = self.get(annotation_id)
        self._records.remove(rec)
        # the id counter is never rewound: deleted ids are not reused

    # -- serialization ---------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "mesh": {
                "sha256": self.mesh_fingerprint.sha256,
                "face_count": self.face_count,
            },
            "annotations": [
                {
                    "id": rec.id,
                    "color": list(rec.color),
                    "text": rec.text,
                    "faces": rec.faces,
                }
                for rec in self._records
            ],
        }

    def to_json_bytes(self) -> bytes:
        return (
            json.dumps(self.to_json_obj(), indent=2, ensure_ascii=False) + "\n"
        ).encode("utf-8")


def save_document(doc: AnnotationDocument) -> bytes:
    """Canonical form: 2-space indent, fixed key order, trailing newline."""
    return doc.to_json_bytes()


def validate_document_obj(obj, collect: list[dict] | None = None) -> list[dict]:
    """Schema-check a parsed document; returns findings (empty when clean).

    With collect=None the first finding raises SchemaViolation /
    VersionUnsupported instead.
    """
    findings: list[dict] = [] if collect is None else collect

    def report(path: str, message: str, fatal: bool = False):
        if collect is None:
            raise SchemaViolation(path, message)
        findings.append({"code": "schema_violation", "path": path, "message": message})
        if fatal:
            raise _StopValidation()

    try:
        if not isinstance(obj, dict):
            report("$", "document must be a JSON object", fatal=True)
        extra = set(obj) - {"format", "version", "mesh", "annotations"}
        if extra:
            report("$", f"unknown keys: {sorted(extra)}")
        if obj.get("format") != FORMAT_NAME:
            report("format", f"expected {FORMAT_NAME!r}")
        version = obj.get("version")
        if version != FORMAT_VERSION:
            if collect is None:
                raise VersionUnsupported(f"version {version!r} is not supported")
            findings.append(
                {
                    "code": "version_unsupported",
                    "path": "version",
                    "message": f"version {version!r} is not supported",
                }
            )
        mesh = obj.get("mesh")
        face_count = None
        if not isinstance(mesh, dict):
            report("mesh", "must be an object", fatal=True)
        else:
            sha = mesh.get("sha256")
            if not isinstance(sha, str) or not _SHA256_PATTERN.match(sha):
                report("mesh.sha256", "must be 64 lowercase hex characters")
            fc = mesh.get("face_count")
            if not isinstance(fc, int) or isinstance(fc, bool) or fc < 0:
                report("mesh.face_count", "must be a non-negative integer", fatal=True)
            else:
                face_count = fc
            extra = set(mesh) - {"sha256", "face_count"}
            if extra:
                report("mesh", f"unknown keys: {sorted(extra)}")

        annotations = obj.get("annotations")
        if not isinstance(annotations, list):
            report("annotations", "must be an array", fatal=True)
        seen_ids: set[str] = set()
        for i, rec in enumerate(annotations):
            path = f"annotations[{i}]"
            if not isinstance(rec, dict):
                report(path, "must be an object")
                continue
            extra = set(rec) - {"id", "color", "text", "faces"}
            if extra:
                report(path, f"unknown keys: {sorted(extra)}")
            rid = rec.get("id")
            if not isinstance(rid, str) or not rid:
                report(f"{path}.id", "must be a non-empty string")
            elif rid in seen_ids:
                report(f"{path}.id", f"duplicate id {rid!r}")
            else:
                seen_ids.add(rid)
            try:
                _check_color(rec.get("color"), f"{path}.color")
            except SchemaViolation as exc:
                if collect is None:
                    raise
                findings.append(
                    {"code": "schema_violation", "path": exc.path, "message": exc.detail}
                )
            if not isinstance(rec.get("text"), str):
                report(f"{path}.text", "must be a string")
            faces = rec.get("faces")
            if not isinstance(faces, list) or not faces:
                report(f"{path}.faces", "must be a non-empty array")
                continue
            bad = False
            for j, fval in enumerate(faces):
                if not isinstance(fval, int) or isinstance(fval, bool) or fval < 0:
                    report(f"{path}.faces[{j}]", "must be a non-negative integer")
                    bad = True
                    break
                if face_count is not None and fval >= face_count:
                    report(
                        f"{path}.faces[{j}]",
                        f"record {rid!r}: face index {fval} >= face_count {face_count}",
                    )
                if j > 0 and not bad and faces[j] <= faces[j - 1]:
                    report(f"{path}.faces[{j}]", "faces must be strictly ascending")
                    break
    except _StopValidation:
        pass
    return findings


class _StopValidation(Exception):
    pass


def load_document(
    data: bytes,
    mesh: Mesh | None = None,
    *,
    allow_mesh_mismatch: bool = False,
) -> AnnotationDocument:
    """Parse + validate canonical JSON; round-trips save_document byte-exactly."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation("$", f"not valid JSON: {exc}") from None

    validate_document_obj(obj, collect=None)

    fp = MeshFingerprint(sha256=obj["mesh"]["sha256"], face_count=obj["mesh"]["face_count"])
    if mesh is not None:
        actual = mesh.fingerprint()
        if actual != fp and not allow_mesh_mismatch:
            raise FingerprintMismatch(
                f"document is bound to {fp.sha256[:12]}… ({fp.face_count} faces), "
                f"mesh is {actual.sha256[:12]}… ({actual.face_count} faces)"
            )

    doc = AnnotationDocument(fp)
    top = 0
    for rec in obj["annotations"]:
        doc._records.append(
            AnnotationRecord(
                id=rec["id"],
                color=tuple(rec["color"]),
                text=rec["text"],
                faces=list(rec["faces"]),
            )
        )
        m = _ID_PATTERN.match(rec["id"])
        if m:
            top = max(top, int(m.group(1)))
    doc._counter = top
    return doc
