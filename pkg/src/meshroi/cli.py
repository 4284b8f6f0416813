"""Command line entry point.

Exit codes: 0 success, 2 input/parse error, 3 validation failure,
4 replay error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .errors import EngineError, TraceSchemaViolation
from .mesh import load_obj
from .raycast import build_bvh
from .selection import resolve_workers
from .session import ReplayError, Session, replay_trace, validate_document_file

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VALIDATION = 3
EXIT_REPLAY = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annotate",
        description="Region annotation engine for textured OBJ meshes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_replay = sub.add_parser("replay", help="execute a recorded gesture trace headlessly")
    p_replay.add_argument("mesh", help="OBJ mesh path")
    p_replay.add_argument("trace", help="gesture trace JSON path")
    p_replay.add_argument("-o", "--out", required=True, help="output annotation document path")

    p_validate = sub.add_parser("validate", help="check an annotation document")
    p_validate.add_argument("doc", help="annotation document path")
    p_validate.add_argument("--mesh", help="OBJ mesh to check the fingerprint against")
    p_validate.add_argument("--json", action="store_true", help="machine-readable findings")
    p_validate.add_argument(
        "--allow-mesh-mismatch",
        action="store_true",
        help="downgrade a fingerprint mismatch to a warning",
    )

    p_stats = sub.add_parser("stats", help="print mesh statistics")
    p_stats.add_argument("mesh", help="OBJ mesh path")

    p_serve = sub.add_parser("serve", help="run the boundary API for the viewer")
    group = p_serve.add_mutually_exclusive_group()
    group.add_argument("--pipe", action="store_true", help="JSON lines over stdio (default)")
    group.add_argument("--socket", metavar="HOST:PORT", help="JSON lines over a TCP socket")

    return parser


def _cmd_replay(args) -> int:
    try:
        doc, session = replay_trace(args.mesh, args.trace, args.out, workers=resolve_workers())
    except ReplayError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except (TraceSchemaViolation, EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    stats = session.stats()
    print(
        f"vertices: {stats.vertex_count}, faces: {stats.face_count}, "
        f"triangles: {stats.triangle_count}"
    )
    print(
        f"selected polygons: {stats.selected_face_count}, annotations: {stats.annotation_count}"
    )
    t = stats.last_timings
    print(
        f"last gesture: raster {t.raster_ms:.1f} ms, cast {t.cast_ms:.1f} ms, "
        f"refine {t.refine_ms:.1f} ms"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        report = validate_document_file(
            args.doc, args.mesh, allow_mesh_mismatch=args.allow_mesh_mismatch
        )
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.json:
        print(json.dumps(report, ensure_ascii=False))
    else:
        for finding in report["violations"]:
            print(f"{finding['code']}: {finding['path']}: {finding['message']}")
        for warning in report["warnings"]:
            print(f"warning: {warning['code']}: {warning['path']}: {warning['message']}")
        print(f"{report['count']} violations")
    return EXIT_OK if report["count"] == 0 else EXIT_VALIDATION


def _cmd_stats(args) -> int:
    try:
        mesh = load_obj(args.mesh)
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    t0 = time.perf_counter()
    build_bvh(mesh)
    build_ms = (time.perf_counter() - t0) * 1000.0
    print(
        f"vertices: {mesh.vertex_count}, faces: {mesh.original_face_count}, "
        f"triangles: {mesh.triangle_count}"
    )
    if mesh.dropped_degenerate:
        print(f"dropped degenerate triangles: {mesh.dropped_degenerate}")
    print(f"bvh build: {build_ms:.1f} ms")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve_pipe, serve_socket

    session = Session(workers=resolve_workers())
    try:
        if args.socket:
            serve_socket(session, args.socket)
        else:
            serve_pipe(session)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "replay":
        return _cmd_replay(args)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "stats":
        return _cmd_stats(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
