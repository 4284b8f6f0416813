"""Boundary API for the companion viewer: JSON messages, one per line.

Each request is {"id": ..., "method": ..., "params": {...}}; the reply is
{"id", "result"} or {"id", "error": {code, message, detail}}. Methods map
1:1 onto Session operations, so a replayed message log reproduces the
session. Mesh geometry goes over once, packed little-endian and base64
encoded, for the viewer's renderer.
"""

from __future__ import annotations

import base64
import json
import socket
import sys

import numpy as np

from .errors import EngineError
from .mesh import Mesh
from .raycast import Camera
from .session import Session


def mesh_blob(mesh: Mesh) -> tuple[str, dict]:
    """Packed geometry for the renderer: f32 positions, u32 indices + face map,
    per-corner f32 UVs when present."""
    positions = np.ascontiguousarray(mesh.vertices, dtype="<f4").tobytes()
    indices = np.ascontiguousarray(mesh.triangles, dtype="<u4").tobytes()
    face_of = np.ascontiguousarray(mesh.source_face_of, dtype="<u4").tobytes()
    has_uv = mesh.tri_uvs is not None and len(mesh.uvs) > 0
    uv_bytes = b""
    if has_uv:
        corner_uv = np.zeros((len(mesh.triangles), 3, 2), dtype="<f4")
        valid = mesh.tri_uvs >= 0
        corner_uv[valid] = mesh.uvs[mesh.tri_uvs[valid]].astype("<f4")
        uv_bytes = corner_uv.tobytes()
    layout = {
        "vertex_count": mesh.vertex_count,
        "triangle_count": mesh.triangle_count,
        "has_uv": bool(has_uv),
        "order": ["positions_f32", "indices_u32", "face_of_u32"] + (["uvs_f32"] if has_uv else []),
    }
    return base64.b64encode(positions + indices + face_of + uv_bytes).decode("ascii"), layout


class ApiServer:
    def __init__(self, session: Session):
        self.session = session
        self._methods = {
            "load_mesh": self._load_mesh,
            "set_camera": self._set_camera,
            "gesture_select": self._gesture_select,
            "commit_annotation": self._commit_annotation,
            "update_annotation": self._update_annotation,
            "delete_annotation": self._delete_annotation,
            "list_annotations": self._list_annotations,
            "save_document": self._save_document,
            "load_document": self._load_document,
            "get_stats": self._get_stats,
        }

    # -- dispatch ----------------------------------------------------------

    def handle_line(self, line: str) -> str:
        req_id = None
        try:
            req = json.loads(line)
            req_id = req.get("id")
            method = req.get("method")
            handler = self._methods.get(method)
            if handler is None:
                return self._error(req_id, "unknown_method", f"no method {method!r}")
            result = handler(req.get("params") or {})
            return json.dumps({"id": req_id, "result": result}, ensure_ascii=False)
        except EngineError as exc:
            code = exc.code
            if "no mesh" in str(exc):
                code = "no_mesh"
            elif "no camera" in str(exc):
                code = "no_camera"
            return self._error(req_id, code, str(exc))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            return self._error(req_id, "invalid_params", str(exc))
        except OSError as exc:
            return self._error(req_id, "io_error", str(exc))

    @staticmethod
    def _error(req_id, code: str, message: str, detail: str | None = None) -> str:
        return json.dumps(
            {"id": req_id, "error": {"code": code, "message": message, "detail": detail}},
            ensure_ascii=False,
        )

    # -- methods ----------------------------------------------------------

    def _load_mesh(self, p: dict) -> dict:
        mesh = self.session.load_mesh(p["path"])
        blob, layout = mesh_blob(mesh)
        fp = mesh.fingerprint()
        return {
            "vertex_count": mesh.vertex_count,
            "face_count": mesh.original_face_count,
            "triangle_count": mesh.triangle_count,
            "fingerprint": {"sha256": fp.sha256, "face_count": fp.face_count},
            "texture_path": mesh.texture_path,
            "dropped_degenerate": mesh.dropped_degenerate,
            "blob": blob,
            "blob_layout": layout,
            "bvh_build_ms": round(self.session.bvh_build_ms, 3),
        }

    def _set_camera(self, p: dict) -> dict:
        self.session.set_camera(Camera.from_json(p))
        return {"ok": True}

    def _gesture_select(self, p: dict) -> dict:
        sel = self.session.gesture_select(
            kind=p["kind"],
            points=p["points"],
            width_px=p.get("width_px"),
            additive=bool(p.get("additive", False)),
        )
        return {
            "faces": self.session.selection.faces.tolist(),
            "count": len(self.session.selection),
            "timings": self.session.last_timings.to_json(),
            "gesture_kind": sel.gesture_kind,
        }

    def _commit_annotation(self, p: dict) -> dict:
        rec_id = self.session.commit_annotation(p.get("text", ""), tuple(p["color"]))
        return {"id": rec_id}

    def _update_annotation(self, p: dict) -> dict:
        self.session._require_document().update_annotation(
            p["id"],
            text=p.get("text"),
            color=tuple(p["color"]) if p.get("color") is not None else None,
            faces=p.get("faces"),
        )
        return {"ok": True}

    def _delete_annotation(self, p: dict) -> dict:
        self.session._require_document().delete_annotation(p["id"])
        return {"ok": True}

    def _list_annotations(self, p: dict) -> dict:
        doc = self.session._require_document()
        return {
            "annotations": [
                {"id": r.id, "color": list(r.color), "text": r.text, "faces": r.faces}
                for r in doc.annotations
            ]
        }

    def _save_document(self, p: dict) -> dict:
        if p.get("path"):
            data = self.session.save_document_file(p["path"])
            return {"json": data.decode("utf-8"), "path": p["path"]}
        return {"json": self.session.save_document_bytes().decode("utf-8"), "path": None}

    def _load_document(self, p: dict) -> dict:
        count = self.session.load_document_file(
            p["path"], allow_mesh_mismatch=bool(p.get("allow_mesh_mismatch", False))
        )
        return {"annotation_count": count}

    def _get_stats(self, p: dict) -> dict:
        return self.session.stats().to_json()


def serve_pipe(session: Session, stdin=None, stdout=None) -> None:
    """JSON-lines over standard IO; returns at EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = ApiServer(session)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(server.handle_line(line) + "\n")
        stdout.flush()


def serve_socket(session: Session, address: str) -> None:
    """JSON-lines over a local TCP socket; one client at a time."""
    host, _, port = address.rpartition(":")
    host = host or "127.0.0.1"
    server = ApiServer(session)
    with socket.create_server((host, int(port))) as srv:
        while True:
            conn, _ = srv.accept()
            with conn, conn.makefile("r", encoding="utf-8") as reader:
                for line in reader:
                    line = line.strip()
                    if not line:
                        continue
                    conn.sendall((server.handle_line(line) + "\n").encode("utf-8"))
