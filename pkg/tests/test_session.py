import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import meshgen
from meshroi import Camera, Session, parse_trace, replay_trace, select_brush
from meshroi.errors import EmptySelection, TraceSchemaViolation
from meshroi.selection import BrushStroke
from meshroi.server import ApiServer

SRC = str(Path(__file__).parent.parent / "src")


def run_cli(*args, env_extra=None, input_text=None):
    env = dict(os.environ, PYTHONPATH=SRC)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "meshroi", *args],
        capture_output=True,
        text=True,
        env=env,
        input=input_text,
    )


def camera_json(camera: Camera) -> dict:
    return camera.to_json()


def brush_entry(camera, points, width, action="select", additive=False):
    entry = {
        "kind": "brush",
        "camera": camera_json(camera),
        "points": points,
        "width_px": width,
        "action": action,
    }
    if additive:
        entry["additive"] = True
    return entry


def lasso_entry(camera, points, action="select"):
    return {"kind": "lasso", "camera": camera_json(camera), "points": points, "action": action}


def annotate_action(text, color):
    return {"type": "annotate", "text": text, "color": list(color)}


def write_trace(path: Path, entries) -> Path:
    path.write_text(json.dumps({"version": 1, "entries": entries}))
    return path


class TestTraceSchema:
    def test_valid_roundtrip(self, grid100):
        entries = [
            brush_entry(grid100.camera, [[400, 400]], 30),
            {"action": annotate_action("x", (1, 2, 3))},
        ]
        parsed = parse_trace(json.dumps({"version": 1, "entries": entries}).encode())
        assert parsed[0]["action"] == {"type": "select"}
        assert parsed[1]["action"]["type"] == "annotate"

    def test_bad_version(self):
        with pytest.raises(TraceSchemaViolation):
            parse_trace(b'{"version": 7, "entries": []}')

    def test_lasso_with_width_rejected(self, grid100):
        entry = lasso_entry(grid100.camera, [[1, 1], [50, 1], [30, 40]])
        entry["width_px"] = 4
        with pytest.raises(TraceSchemaViolation) as err:
            parse_trace(json.dumps({"version": 1, "entries": [entry]}).encode())
        assert err.value.entry_index == 0

    def test_brush_without_width_rejected(self, grid100):
        entry = brush_entry(grid100.camera, [[1, 1]], 4)
        del entry["width_px"]
        with pytest.raises(TraceSchemaViolation):
            parse_trace(json.dumps({"version": 1, "entries": [entry]}).encode())

    def test_commit_only_entry_needs_annotate(self):
        with pytest.raises(TraceSchemaViolation):
            parse_trace(b'{"version": 1, "entries": [{"action": "select"}]}')


class TestReplay:
    def test_brush_select_then_annotate_matches_headless(self, grid100, tmp_path):
        stroke_pts = [[380.0, 390.0], [420.0, 410.0]]
        trace = write_trace(
            tmp_path / "t.json",
            [
                brush_entry(grid100.camera, stroke_pts, 60),
                {"action": annotate_action("crack", (255, 0, 0))},
            ],
        )
        doc, _ = replay_trace(grid100.path, trace, tmp_path / "out.anno.json")
        direct = select_brush(
            BrushStroke(camera=grid100.camera, points=stroke_pts, width_px=60),
            grid100.bvh, grid100.mesh, grid100.adjacency,
        )
        assert doc.annotations[0].faces == direct.faces.tolist()

    def test_gesture_entry_with_inline_annotate(self, grid100, tmp_path):
        trace = write_trace(
            tmp_path / "t.json",
            [brush_entry(grid100.camera, [[400.0, 400.0]], 40,
                         action=annotate_action("spot", (0, 9, 0)))],
        )
        doc, _ = replay_trace(grid100.path, trace, tmp_path / "out.anno.json")
        assert len(doc) == 1 and len(doc.annotations[0].faces) > 0

    def test_additive_union(self, grid100, tmp_path):
        left = brush_entry(grid100.camera, [[300.0, 400.0]], 40)
        right = brush_entry(grid100.camera, [[500.0, 400.0]], 40, additive=True)
        trace = write_trace(
            tmp_path / "t.json",
            [left, right, {"action": annotate_action("both", (5, 5, 5))}],
        )
        doc, _ = replay_trace(grid100.path, trace, tmp_path / "out.anno.json")
        only_left = write_trace(
            tmp_path / "l.json",
            [left, {"action": annotate_action("left", (5, 5, 5))}],
        )
        doc_left, _ = replay_trace(grid100.path, only_left, tmp_path / "l.anno.json")
        assert set(doc_left.annotations[0].faces) < set(doc.annotations[0].faces)

    def test_replace_is_default(self, grid100, tmp_path):
        trace = write_trace(
            tmp_path / "t.json",
            [
                brush_entry(grid100.camera, [[300.0, 400.0]], 40),
                brush_entry(grid100.camera, [[500.0, 400.0]], 40),
                {"action": annotate_action("second only", (5, 5, 5))},
            ],
        )
        doc, _ = replay_trace(grid100.path, trace, tmp_path / "out.anno.json")
        alone = write_trace(
            tmp_path / "a.json",
            [
                brush_entry(grid100.camera, [[500.0, 400.0]], 40),
                {"action": annotate_action("x", (5, 5, 5))},
            ],
        )
        doc_alone, _ = replay_trace(grid100.path, alone, tmp_path / "a.anno.json")
        assert doc.annotations[0].faces == doc_alone.annotations[0].faces


class TestSessionApi:
    def test_stats_and_selection_flow(self, grid100):
        session = Session()
        session.load_mesh(grid100.path)
        session.set_camera(grid100.camera)
        sel = session.gesture_select("brush", [[400.0, 400.0]], width_px=50)
        stats = session.stats()
        assert stats.vertex_count == 10201
        assert stats.face_count == 20000
        assert stats.triangle_count == 20000
        assert stats.selected_face_count == len(sel) > 0
        assert stats.last_timings.cast_ms > 0

    def test_commit_without_selection(self, grid100):
        session = Session()
        session.load_mesh(grid100.path)
        with pytest.raises(EmptySelection):
            session.commit_annotation("x", (1, 1, 1))


class TestCliContract:
    def test_stats_output_and_exit_zero(self, scene_dir):
        single = scene_dir / "single.obj"
        single.write_bytes(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        proc = run_cli("stats", str(single))
        assert proc.returncode == 0
        assert "vertices: 3, faces: 1, triangles: 1" in proc.stdout

    def test_stats_quad_counts(self, scene_dir):
        quad = scene_dir / "quad.obj"
        quad.write_bytes(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        proc = run_cli("stats", str(quad))
        assert "vertices: 4, faces: 1, triangles: 2" in proc.stdout

    def test_stats_grid_face_count(self, grid100):
        proc = run_cli("stats", str(grid100.path))
        assert "faces: 20000" in proc.stdout

    def test_malformed_obj_exit_2(self, tmp_path):
        bad = tmp_path / "bad.obj"
        bad.write_bytes(b"v 0 0 0\nf 1 2 9\n")
        proc = run_cli("stats", str(bad))
        assert proc.returncode == 2

    def test_replay_pipeline_and_validate(self, grid100, tmp_path):
        trace = write_trace(
            tmp_path / "trace.json",
            [
                brush_entry(grid100.camera, [[400.0, 400.0]], 50),
                {"action": annotate_action("crack", (250, 10, 10))},
            ],
        )
        out = tmp_path / "doc.anno.json"
        proc = run_cli("replay", str(grid100.path), str(trace), "-o", str(out))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
        assert "selected polygons:" in proc.stdout

        check = run_cli("validate", str(out), "--mesh", str(grid100.path))
        assert check.returncode == 0
        assert "0 violations" in check.stdout

    def test_empty_selection_annotate_exit_4(self, grid100, tmp_path):
        wide = meshgen.head_on_camera(extent=4.0, viewport=200, distance=2.0)
        trace = write_trace(
            tmp_path / "trace.json",
            [
                brush_entry(wide, [[3.0, 3.0]], 3),
                {"action": annotate_action("nothing", (1, 1, 1))},
            ],
        )
        proc = run_cli("replay", str(grid100.path), str(trace), "-o", str(tmp_path / "o.json"))
        assert proc.returncode == 4
        assert "entry 1" in proc.stderr

    def test_fingerprint_mismatch_exit_3(self, grid100, two_planes, tmp_path):
        trace = write_trace(
            tmp_path / "trace.json",
            [
                brush_entry(grid100.camera, [[400.0, 400.0]], 50),
                {"action": annotate_action("crack", (250, 10, 10))},
            ],
        )
        out = tmp_path / "doc.anno.json"
        run_cli("replay", str(grid100.path), str(trace), "-o", str(out))
        proc = run_cli("validate", str(out), "--mesh", str(two_planes.path))
        assert proc.returncode == 3
        assert "mesh fingerprint mismatch" in proc.stdout

    def test_validate_json_report(self, grid100, two_planes, tmp_path):
        trace = write_trace(
            tmp_path / "trace.json",
            [brush_entry(grid100.camera, [[400.0, 400.0]], 50,
                         action=annotate_action("a", (0, 0, 0)))],
        )
        out = tmp_path / "doc.anno.json"
        run_cli("replay", str(grid100.path), str(trace), "-o", str(out))
        proc = run_cli("validate", str(out), "--mesh", str(two_planes.path), "--json")
        report = json.loads(proc.stdout)
        assert report["count"] == 1
        assert report["violations"][0]["code"] == "fingerprint_mismatch"

    def test_validate_allow_mesh_mismatch_downgrades(self, grid100, two_planes, tmp_path):
        trace = write_trace(
            tmp_path / "trace.json",
            [brush_entry(grid100.camera, [[400.0, 400.0]], 50,
                         action=annotate_action("a", (0, 0, 0)))],
        )
        out = tmp_path / "doc.anno.json"
        run_cli("replay", str(grid100.path), str(trace), "-o", str(out))
        proc = run_cli(
            "validate", str(out), "--mesh", str(two_planes.path), "--allow-mesh-mismatch"
        )
        assert proc.returncode == 0
        assert "warning: fingerprint_mismatch" in proc.stdout

    def test_validate_out_of_range_face_names_record(self, grid100, tmp_path):
        doc = {
            "format": "art3mis-annotations",
            "version": 1,
            "mesh": {"sha256": "0" * 64, "face_count": 10},
            "annotations": [
                {"id": "a-0001", "color": [1, 2, 3], "text": "x", "faces": [5, 11]}
            ],
        }
        path = tmp_path / "bad.anno.json"
        path.write_text(json.dumps(doc))
        proc = run_cli("validate", str(path))
        assert proc.returncode == 3
        assert "a-0001" in proc.stdout

    def test_validate_unreadable_json_exit_3(self, tmp_path):
        path = tmp_path / "broken.anno.json"
        path.write_text("{]")
        proc = run_cli("validate", str(path))
        assert proc.returncode == 3

    def test_missing_file_exit_2(self, tmp_path):
        proc = run_cli("validate", str(tmp_path / "absent.anno.json"))
        assert proc.returncode == 2


class TestServeProtocol:
    def build_requests(self, grid100, tmp_path):
        out = tmp_path / "served.anno.json"
        return [
            {"id": 1, "method": "get_stats", "params": {}},
            {"id": 2, "method": "load_mesh", "params": {"path": str(grid100.path)}},
            {"id": 3, "method": "set_camera", "params": camera_json(grid100.camera)},
            {
                "id": 4,
                "method": "gesture_select",
                "params": {"kind": "brush", "points": [[400.0, 400.0]], "width_px": 50},
            },
            {"id": 5, "method": "commit_annotation", "params": {"text": "crack", "color": [250, 10, 10]}},
            {"id": 6, "method": "list_annotations", "params": {}},
            {"id": 7, "method": "save_document", "params": {"path": str(out)}},
            {"id": 8, "method": "no_such_method", "params": {}},
            {"id": 9, "method": "get_stats", "params": {}},
        ], out

    def test_pipe_round_trip(self, grid100, tmp_path):
        requests, out = self.build_requests(grid100, tmp_path)
        payload = "\n".join(json.dumps(r) for r in requests) + "\n"
        proc = run_cli("serve", "--pipe", input_text=payload)
        assert proc.returncode == 0, proc.stderr
        replies = {r["id"]: r for r in map(json.loads, proc.stdout.splitlines())}

        assert replies[1]["error"]["code"] == "no_mesh"
        assert replies[2]["result"]["face_count"] == 20000
        assert replies[2]["result"]["blob_layout"]["triangle_count"] == 20000
        assert replies[4]["result"]["count"] > 0
        assert replies[5]["result"]["id"] == "a-0001"
        assert replies[6]["result"]["annotations"][0]["text"] == "crack"
        assert replies[8]["error"]["code"] == "unknown_method"
        assert replies[9]["result"]["annotation_count"] == 1
        assert out.exists()

    def test_api_matches_replay(self, grid100, tmp_path):
        # one engine, two transports: the served gesture equals headless replay
        requests, out = self.build_requests(grid100, tmp_path)
        payload = "\n".join(json.dumps(r) for r in requests) + "\n"
        run_cli("serve", "--pipe", input_text=payload)

        trace = write_trace(
            tmp_path / "t.json",
            [
                brush_entry(grid100.camera, [[400.0, 400.0]], 50),
                {"action": annotate_action("crack", (250, 10, 10))},
            ],
        )
        replayed = tmp_path / "replayed.anno.json"
        run_cli("replay", str(grid100.path), str(trace), "-o", str(replayed))
        assert out.read_bytes() == replayed.read_bytes()

    def test_socket_mode(self, grid100):
        import socket as socketlib
        import time

        with socketlib.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        env = dict(os.environ, PYTHONPATH=SRC)
        proc = subprocess.Popen(
            [sys.executable, "-m", "meshroi", "serve", "--socket", f"127.0.0.1:{port}"],
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            conn = None
            for _ in range(50):
                try:
                    conn = socketlib.create_connection(("127.0.0.1", port), timeout=1)
                    break
                except OSError:
                    time.sleep(0.1)
            assert conn is not None, "server never came up"
            with conn:
                conn.sendall(b'{"id": 1, "method": "get_stats", "params": {}}\n')
                reply = json.loads(conn.makefile("r").readline())
            assert reply["error"]["code"] == "no_mesh"
        finally:
            proc.kill()
            proc.wait()

    def test_gesture_before_camera_errors(self, grid100):
        session = Session()
        server = ApiServer(session)
        server.handle_line(json.dumps(
            {"id": 1, "method": "load_mesh", "params": {"path": str(grid100.path)}}
        ))
        reply = json.loads(server.handle_line(json.dumps(
            {"id": 2, "method": "gesture_select",
             "params": {"kind": "brush", "points": [[1.0, 1.0]], "width_px": 3}}
        )))
        assert reply["error"]["code"] == "no_camera"

    def test_commit_with_empty_text_allowed(self, grid100):
        session = Session()
        server = ApiServer(session)
        server.handle_line(json.dumps(
            {"id": 1, "method": "load_mesh", "params": {"path": str(grid100.path)}}
        ))
        server.handle_line(json.dumps(
            {"id": 2, "method": "set_camera", "params": camera_json(grid100.camera)}
        ))
        server.handle_line(json.dumps(
            {"id": 3, "method": "gesture_select",
             "params": {"kind": "brush", "points": [[400.0, 400.0]], "width_px": 30}}
        ))
        reply = json.loads(server.handle_line(json.dumps(
            {"id": 4, "method": "commit_annotation", "params": {"text": "", "color": [9, 9, 9]}}
        )))
        assert reply["result"]["id"] == "a-0001"
        update = json.loads(server.handle_line(json.dumps(
            {"id": 5, "method": "update_annotation",
             "params": {"id": "a-0001", "text": "filled in later"}}
        )))
        assert update["result"]["ok"] is True
