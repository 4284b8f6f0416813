"""Engine facade: one mesh, one camera, one selection, one document.

The same Session backs the CLI (trace replay, validate, stats) and the
boundary API used by the viewer, so interactive gestures and headless
replay cannot diverge.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import AnnotationDocument, load_document, save_document, validate_document_obj
from .errors import (
    EmptySelection,
    EngineError,
    TraceSchemaViolation,
)
from .mesh import Mesh, build_adjacency, load_obj
from .raycast import Camera, build_bvh
from .selection import (
    BrushStroke,
    LassoOutline,
    SelectionSet,
    select_brush,
    select_lasso,
)

TRACE_VERSION = 1


@dataclass
class StageTimings:
    raster_ms: float = 0.0
    cast_ms: float = 0.0
    refine_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "raster_ms": round(self.raster_ms, 3),
            "cast_ms": round(self.cast_ms, 3),
            "refine_ms": round(self.refine_ms, 3),
        }


@dataclass
class SessionStats:
    vertex_count: int
    face_count: int
    triangle_count: int
    selected_face_count: int
    annotation_count: int
    last_timings: StageTimings = field(default_factory=StageTimings)

    def to_json(self) -> dict:
        return {
            "vertex_count": self.vertex_count,
            "face_count": self.face_count,
            "triangle_count": self.triangle_count,
            "selected_face_count": self.selected_face_count,
            "annotation_count": self.annotation_count,
            "last_timings": self.last_timings.to_json(),
        }


class Session:
    """Explicit state: mesh (+bvh/adjacency), camera, current selection, document."""

    def __init__(self, workers: int | None = None):
        self.workers = workers
        self.mesh: Mesh | None = None
        self.bvh = None
        self.adjacency = None
        self.camera: Camera | None = None
        self.selection: SelectionSet | None = None
        self.document: AnnotationDocument | None = None
        self.last_timings = StageTimings()
        self.bvh_build_ms = 0.0
        self.mesh_path: str | None = None

    # -- setup ---------------------------------------------------------------

    def load_mesh(self, path: str | Path) -> Mesh:
        mesh = load_obj(path)
        t0 = time.perf_counter()
        self.bvh = build_bvh(mesh)
        self.bvh_build_ms = (time.perf_counter() - t0) * 1000.0
        self.adjacency = build_adjacency(mesh)
        self.mesh = mesh
        self.mesh_path = str(path)
        self.camera = None
        self.selection = None
        self.document = AnnotationDocument(mesh.fingerprint())
        return mesh

    def require_mesh(self) -> Mesh:
        if self.mesh is None:
            raise EngineError("no mesh loaded")
        return self.mesh

    def set_camera(self, camera: Camera) -> None:
        self.camera = camera

    # -- selection ---------------------------------------------------------------

    def gesture_select(
        self,
        kind: str,
        points,
        width_px: float | None = None,
        additive: bool = False,
        camera: Camera | None = None,
    ) -> SelectionSet:
        mesh = self.require_mesh()
        cam = camera or self.camera
        if cam is None:
            raise EngineError("no camera set")
        timings: dict = {}
        if kind == "brush":
            if width_px is None:
                raise ValueError("brush gesture needs width_px")
            stroke = BrushStroke(camera=cam, points=points, width_px=width_px)
            sel = select_brush(
                stroke, self.bvh, mesh, self.adjacency, workers=self.workers, timings=timings
            )
        elif kind == "lasso":
            outline = LassoOutline(camera=cam, points=points)
            sel = select_lasso(
                outline, self.bvh, mesh, self.adjacency, workers=self.workers, timings=timings
            )
        else:
            raise ValueError(f"unknown gesture kind {kind!r}")
        self.last_timings = StageTimings(**timings) if timings else StageTimings()

        if additive and self.selection is not None and len(self.selection):
            merged = np.union1d(self.selection.faces, sel.faces)
            sel = SelectionSet(
                faces=merged,
                camera=sel.camera,
                gesture_kind=sel.gesture_kind,
                mesh_fingerprint=sel.mesh_fingerprint,
            )
        self.selection = sel
        return sel

    # -- annotations ---------------------------------------------------------------

    def commit_annotation(self, text: str, color: tuple[int, int, int]) -> str:
        doc = self._require_document()
        if self.selection is None or len(self.selection) == 0:
            raise EmptySelection("no faces selected")
        return doc.create_annotation(self.selection, text, color)

    def _require_document(self) -> AnnotationDocument:
        if self.document is None:
            raise EngineError("no document (load a mesh first)")
        return self.document

    def save_document_bytes(self) -> bytes:
        return save_document(self._require_document())

    def save_document_file(self, path: str | Path) -> bytes:
        data = self.save_document_bytes()
        Path(path).write_bytes(data)
        return data

    def load_document_file(self, path: str | Path, allow_mesh_mismatch: bool = False) -> int:
        mesh = self.require_mesh()
        self.document = load_document(
            Path(path).read_bytes(), mesh, allow_mesh_mismatch=allow_mesh_mismatch
        )
        return len(self.document)

    # -- stats ---------------------------------------------------------------

    def stats(self) -> SessionStats:
        mesh = self.require_mesh()
        return SessionStats(
            vertex_count=mesh.vertex_count,
            face_count=mesh.original_face_count,
            triangle_count=mesh.triangle_count,
            selected_face_count=0 if self.selection is None else len(self.selection),
            annotation_count=0 if self.document is None else len(self.document),
            last_timings=self.last_timings,
        )


# -- gesture traces ---------------------------------------------------------------


def _trace_error(msg: str, idx: int | None = None):
    raise TraceSchemaViolation(msg, entry_index=idx)


def parse_trace(data: bytes) -> list[dict]:
    """Validate a gesture trace; returns its entry list.

    An entry either performs a gesture ({kind, camera, points, width_px for
    brush, additive?, action}) or, with no kind, just commits the current
    selection ({action: {type: annotate, text, color}}).
    """
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        _trace_error(f"not valid JSON: {exc}")
    if not isinstance(obj, dict):
        _trace_error("trace must be a JSON object")
    if obj.get("version") != TRACE_VERSION:
        _trace_error(f"unsupported trace version {obj.get('version')!r}")
    entries = obj.get("entries")
    if not isinstance(entries, list):
        _trace_error("entries must be an array")

    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            _trace_error("entry must be an object", i)
        kind = entry.get("kind")
        action = entry.get("action", "select")
        if isinstance(action, str):
            action = {"type": action}
        if not isinstance(action, dict) or action.get("type") not in ("select", "annotate"):
            _trace_error("action must be 'select' or {type: annotate, text, color}", i)
        entry["action"] = action

        if kind is None:
            if action["type"] != "annotate":
                _trace_error("entry without a gesture must be an annotate action", i)
            continue
        if kind not in ("brush", "lasso"):
            _trace_error(f"unknown gesture kind {kind!r}", i)
        if (entry.get("width_px") is not None) != (kind == "brush"):
            _trace_error("width_px must be present exactly for brush entries", i)
        if not isinstance(entry.get("camera"), dict):
            _trace_error("gesture entry needs a camera snapshot", i)
        try:
            Camera.from_json(entry["camera"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            _trace_error(f"bad camera snapshot: {exc}", i)
        pts = entry.get("points")
        if not isinstance(pts, list) or not pts:
            _trace_error("gesture entry needs points", i)
        if action["type"] == "annotate":
            if not isinstance(action.get("text"), str) or "color" not in action:
                _trace_error("annotate action needs text and color", i)
    return entries


class ReplayError(EngineError):
    """Engine error raised while executing a specific trace entry."""

    def __init__(self, entry_index: int, cause: Exception):
        super().__init__(f"entry {entry_index}: {cause}")
        self.entry_index = entry_index
        self.cause = cause


def replay_trace(
    mesh_path: str | Path,
    trace_path: str | Path,
    out_doc_path: str | Path | None,
    workers: int | None = None,
) -> tuple[AnnotationDocument, Session]:
    """Execute a recorded trace headlessly and write the canonical document.

    A gesture entry replaces the selection (unions when additive); annotate
    actions commit the selection that exists after the entry's own gesture,
    if it has one.
    """
    entries = parse_trace(Path(trace_path).read_bytes())
    session = Session(workers=workers)
    session.load_mesh(mesh_path)

    for i, entry in enumerate(entries):
        try:
            if entry.get("kind") is not None:
                camera = Camera.from_json(entry["camera"])
                session.gesture_select(
                    kind=entry["kind"],
                    points=entry["points"],
                    width_px=entry.get("width_px"),
                    additive=bool(entry.get("additive", False)),
                    camera=camera,
                )
            action = entry["action"]
            if action["type"] == "annotate":
                session.commit_annotation(action["text"], tuple(action["color"]))
        except (EngineError, ValueError) as exc:
            raise ReplayError(i, exc) from exc

    if out_doc_path is not None:
        session.save_document_file(out_doc_path)
    return session.document, session


# -- document validation (CLI) ---------------------------------------------------


def validate_document_file(
    doc_path: str | Path,
    mesh_path: str | Path | None = None,
    allow_mesh_mismatch: bool = False,
) -> dict:
    """Collect every finding instead of stopping at the first one.

    With allow_mesh_mismatch a fingerprint mismatch is reported as a warning
    rather than a violation (re-exported mesh with identical face order).
    """
    findings: list[dict] = []
    warnings: list[dict] = []
    raw = Path(doc_path).read_bytes()

    obj = None
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        findings.append({"code": "schema_violation", "path": "$", "message": f"not valid JSON: {exc}"})

    if obj is not None:
        validate_document_obj(obj, collect=findings)

        if mesh_path is not None and isinstance(obj, dict) and isinstance(obj.get("mesh"), dict):
            mesh = load_obj(mesh_path)
            actual = mesh.fingerprint()
            sha = obj["mesh"].get("sha256")
            fc = obj["mesh"].get("face_count")
            if sha != actual.sha256 or fc != actual.face_count:
                finding = {
                    "code": "fingerprint_mismatch",
                    "path": "mesh",
                    "message": "mesh fingerprint mismatch: document "
                    f"{str(sha)[:12]}…/{fc} faces vs mesh {actual.sha256[:12]}…/{actual.face_count} faces",
                }
                (warnings if allow_mesh_mismatch else findings).append(finding)

    return {"violations": findings, "warnings": warnings, "count": len(findings)}
