"""Triangle mesh loading, indexing and geometry queries.

Meshes come from Wavefront OBJ text. Polygonal faces are fan-triangulated
internally, but every triangle remembers the original OBJ face it came
from: annotations are stored against original face indices so documents
stay valid however the engine triangulates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import EmptyMesh, IndexOutOfRange, MalformedStatement

# faces flatter than this (model units squared) are unpickable and would
# produce zero-extent BVH leaves, so they are dropped at parse
DEGENERATE_AREA = 1e-12


@dataclass
class Mesh:
    """Indexed triangle mesh with original-face provenance.

    vertices        (V, 3) float64 positions
    uvs             (U, 2) float64 raw texture coordinates (may be empty)
    triangles       (T, 3) int64 vertex indices, 0-based
    tri_uvs         (T, 3) int64 uv indices per corner, -1 when absent, or None
    source_face_of  (T,) int64: triangle index -> original OBJ face index
    original_face_count  number of `f` statements in the source file
    texture_path    diffuse texture path from the material library, if any
    dropped_degenerate   triangles discarded at parse (repeated index / ~zero area)
    """

    vertices: np.ndarray
    uvs: np.ndarray
    triangles: np.ndarray
    source_face_of: np.ndarray
    original_face_count: int
    tri_uvs: np.ndarray | None = None
    texture_path: str | None = None
    dropped_degenerate: int = 0
    _face_offsets: np.ndarray | None = field(default=None, repr=False)
    _fingerprint: "MeshFingerprint | None" = field(default=None, repr=False)
    _bbox: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.source_face_of = np.ascontiguousarray(self.source_face_of, dtype=np.int64)
        self._validate()

    def _validate(self):
        t = self.triangles
        if t.size:
            if t.min() < 0 or t.max() >= len(self.vertices):
                raise IndexOutOfRange("triangle references a missing vertex")
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise IndexOutOfRange("triangle with repeated vertex index")
        if len(self.source_face_of) != len(t):
            raise IndexOutOfRange("source_face_of must cover every triangle")
        if len(self.source_face_of):
            sf = self.source_face_of
            if np.any(np.diff(sf) < 0):
                raise IndexOutOfRange("triangles of one face must be contiguous and in face order")
            if sf.min() < 0 or sf.max() >= self.original_face_count:
                raise IndexOutOfRange("source face index out of range")

    # -- derived lookups ---------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def face_tri_offsets(self) -> np.ndarray:
        """(F+1,) offsets into `triangles` per original face (faces are contiguous)."""
        if self._face_offsets is None:
            self._face_offsets = np.searchsorted(
                self.source_face_of, np.arange(self.original_face_count + 1), side="left"
            ).astype(np.int64)
        return self._face_offsets

    def face_triangles(self, original_face: int) -> np.ndarray:
        off = self.face_tri_offsets()
        if not 0 <= original_face < self.original_face_count:
            raise IndexOutOfRange(f"face {original_face} out of range")
        return self.triangles[off[original_face]:off[original_face + 1]]

    def fingerprint(self) -> "MeshFingerprint":
        if self._fingerprint is None:
            self._fingerprint = fingerprint(self)
        return self._fingerprint

    def equals(self, other: "Mesh") -> bool:
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.uvs, other.uvs)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.source_face_of, other.source_face_of)
            and self.original_face_count == other.original_face_count
            and self.texture_path == other.texture_path
        )


@dataclass(frozen=True)
class MeshFingerprint:
    """Content digest binding an annotation document to one exact mesh."""

    sha256: str
    face_count: int


@dataclass
class AdjacencyMap:
    """Edge adjacency between original faces, CSR encoded and symmetric."""

    offsets: np.ndarray  # (F+1,)
    targets: np.ndarray  # concatenated sorted neighbor lists

    def neighbors(self, original_face: int) -> np.ndarray:
        return self.targets[self.offsets[original_face]:self.offsets[original_face + 1]]

    def face_count(self) -> int:
        return len(self.offsets) - 1

    def as_dict(self) -> dict[int, set[int]]:
        return {
            f: set(self.neighbors(f).tolist())
            for f in range(self.face_count())
        }


# -- OBJ parsing -----------------------------------------------------------


def _resolve_index(token: str, count: int, line_no: int, what: str) -> int:
    try:
        idx = int(token)
    except ValueError:
        raise MalformedStatement(line_no, f"bad {what} index {token!r}") from None
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += count
    else:
        raise IndexOutOfRange(f"line {line_no}: {what} index 0 is not addressable")
    if not 0 <= idx < count:
        raise IndexOutOfRange(f"line {line_no}: {what} index {token} out of range (have {count})")
    return idx


def _parse_floats(parts: list[str], n: int, line_no: int) -> list[float]:
    if len(parts) < n:
        raise MalformedStatement(line_no, f"expected {n} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts[:n]]
    except ValueError:
        raise MalformedStatement(line_no, f"non-numeric value in {parts[:n]!r}") from None


def _triangle_area(a, b, c) -> float:
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    return 0.5 * (nx * nx + ny * ny + nz * nz) ** 0.5


def parse_obj(data: bytes, *, mtl_loader: Callable[[str], bytes | None] | None = None) -> Mesh:
    """Parse OBJ text into a Mesh.

    Supported statements: v, vt, vn (validated, unused), f (v, v/vt, v/vt/vn,
    v//vn forms, fan-triangulated), mtllib/usemtl (first diffuse texture only).
    Anything else is ignored. Degenerate triangles (repeated vertex index or
    area below 1e-12) are dropped; their original face index is still consumed
    so annotation indices always match file order.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedStatement(0, f"not UTF-8 text: {exc}") from None

    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    tri_uvs: list[tuple[int, int, int]] = []
    src: list[int] = []
    face_count = 0
    dropped = 0
    any_uv_ref = False
    mtllibs: list[str] = []
    used_material: str | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            verts.append(_parse_floats(parts[1:], 3, line_no))
        elif tag == "vt":
            uvs.append(_parse_floats(parts[1:], 2, line_no))
        elif tag == "vn":
            _parse_floats(parts[1:], 3, line_no)
        elif tag == "f":
            tokens = parts[1:]
            if len(tokens) < 3:
                raise MalformedStatement(line_no, "face needs at least 3 vertices")
            vi: list[int] = []
            ti: list[int] = []
            for tok in tokens:
                fields = tok.split("/")
                if len(fields) > 3 or not fields[0]:
                    raise MalformedStatement(line_no, f"bad face token {tok!r}")
                vi.append(_resolve_index(fields[0], len(verts), line_no, "vertex"))
                if len(fields) >= 2 and fields[1]:
                    ti.append(_resolve_index(fields[1], len(uvs), line_no, "texture"))
                    any_uv_ref = True
                else:
                    ti.append(-1)
                if len(fields) == 3 and fields[2]:
                    # normal index: syntax checked only
                    try:
                        int(fields[2])
                    except ValueError:
                        raise MalformedStatement(line_no, f"bad normal index in {tok!r}") from None
            for k in range(1, len(vi) - 1):
                a, b, c = vi[0], vi[k], vi[k + 1]
                if a == b or b == c or a == c:
                    dropped += 1
                    continue
                if _triangle_area(verts[a], verts[b], verts[c]) < DEGENERATE_AREA:
                    dropped += 1
                    continue
                tris.append((a, b, c))
                tri_uvs.append((ti[0], ti[k], ti[k + 1]))
                src.append(face_count)
            face_count += 1
        elif tag == "mtllib":
            mtllibs.append(line.split(None, 1)[1].strip() if len(parts) > 1 else "")
        elif tag == "usemtl":
            if used_material is None and len(parts) > 1:
                used_material = parts[1]
        # o/g/s/comments and anything unknown: ignored

    if not tris:
        raise EmptyMesh("no faces survive parsing")

    texture = None
    if mtl_loader is not None and mtllibs:
        texture = _resolve_texture(mtllibs, used_material, mtl_loader)

    return Mesh(
        vertices=np.asarray(verts, dtype=np.float64),
        uvs=np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
        triangles=np.asarray(tris, dtype=np.int64),
        tri_uvs=np.asarray(tri_uvs, dtype=np.int64) if any_uv_ref else None,
        source_face_of=np.asarray(src, dtype=np.int64),
        original_face_count=face_count,
        texture_path=texture,
        dropped_degenerate=dropped,
    )


def _resolve_texture(
    mtllibs: list[str], used_material: str | None, loader: Callable[[str], bytes | None]
) -> str | None:
    """First diffuse texture (map_Kd) of the used material, else of any material."""
    fallback = None
    for lib in mtllibs:
        if not lib:
            continue
        data = loader(lib)
        if data is None:
            continue
        current = None
        for raw in data.decode("utf-8", errors="replace").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if parts[0] == "newmtl" and len(parts) > 1:
                current = parts[1].strip()
            elif parts[0] == "map_Kd" and len(parts) > 1:
                path = parts[1].strip()
                if used_material is None or current == used_material:
                    return path
                if fallback is None:
                    fallback = path
    return fallback


def load_obj(path: str | Path) -> Mesh:
    """Load an OBJ file, resolving mtllib references relative to it."""
    path = Path(path)
    data = path.read_bytes()

    def loader(rel: str) -> bytes | None:
        candidate = path.parent / rel
        try:
            return candidate.read_bytes()
        except OSError:
            return None

    return parse_obj(data, mtl_loader=loader)


def to_obj_text(mesh: Mesh) -> str:
    """Serialize the canonical subset (v, vt, f) so parse round-trips exactly.

    Original polygons are re-assembled from their fans; faces whose fan was
    broken by degenerate-triangle drops fall back to per-triangle emission.
    """
    out: list[str] = []
    for v in mesh.vertices:
        out.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    has_uv = mesh.tri_uvs is not None
    if has_uv:
        for u in mesh.uvs:
            out.append(f"vt {float(u[0])!r} {float(u[1])!r}")

    off = mesh.face_tri_offsets()

    def corner(vi: int, uvi: int) -> str:
        if has_uv and uvi >= 0:
            return f"{vi + 1}/{uvi + 1}"
        return str(vi + 1)

    for f in range(mesh.original_face_count):
        ts = mesh.triangles[off[f]:off[f + 1]]
        if len(ts) == 0:
            continue
        us = mesh.tri_uvs[off[f]:off[f + 1]] if has_uv else np.full((len(ts), 3), -1)
        ring_ok = all(
            ts[k][0] == ts[0][0] and ts[k][1] == ts[k - 1][2] for k in range(1, len(ts))
        )
        if ring_ok:
            vs = [corner(int(ts[0][0]), int(us[0][0])), corner(int(ts[0][1]), int(us[0][1]))]
            vs += [corner(int(ts[k][2]), int(us[k][2])) for k in range(len(ts))]
            out.append("f " + " ".join(vs))
        else:
            for k in range(len(ts)):
                out.append("f " + " ".join(corner(int(ts[k][i]), int(us[k][i])) for i in range(3)))
    return "\n".join(out) + "\n"


# -- geometry queries --------------------------------------------------------


def build_adjacency(mesh: Mesh) -> AdjacencyMap:
    """Two original faces are adjacent iff they share a full edge.

    Non-manifold edges simply make every face across them mutual neighbors.
    """
    tri = mesh.triangles
    fid = mesh.source_face_of
    nv = len(mesh.vertices)
    nf = mesh.original_face_count
    if len(tri) == 0:
        return AdjacencyMap(np.zeros(nf + 1, dtype=np.int64), np.empty(0, dtype=np.int64))

    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    faces3 = np.concatenate([fid, fid, fid])
    key = edges.min(axis=1).astype(np.int64) * nv + edges.max(axis=1)

    order = np.lexsort((faces3, key))
    k = key[order]
    f = faces3[order]

    boundary = np.flatnonzero(np.diff(k) != 0) + 1
    starts = np.concatenate([[0], boundary])
    ends = np.concatenate([boundary, [len(k)]])
    sizes = ends - starts

    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []

    two = np.flatnonzero(sizes == 2)
    if two.size:
        a = f[starts[two]]
        b = f[starts[two] + 1]
        keep = a != b
        src_parts.append(a[keep])
        dst_parts.append(b[keep])

    for g in np.flatnonzero(sizes > 2):
        group = np.unique(f[starts[g]:ends[g]])
        if len(group) < 2:
            continue
        ai, bi = np.triu_indices(len(group), k=1)
        src_parts.append(group[ai])
        dst_parts.append(group[bi])

    if src_parts:
        a = np.concatenate(src_parts)
        b = np.concatenate(dst_parts)
        pair = np.unique(np.concatenate([a * np.int64(nf) + b, b * np.int64(nf) + a]))
        src = pair // nf
        dst = pair % nf
    else:
        src = np.empty(0, dtype=np.int64)
        dst = np.empty(0, dtype=np.int64)

    offsets = np.searchsorted(src, np.arange(nf + 1), side="left").astype(np.int64)
    return AdjacencyMap(offsets=offsets, targets=dst)


def face_vertex_ids(mesh: Mesh, original_face: int) -> np.ndarray:
    """Distinct vertex indices of one original face (sorted)."""
    ts = mesh.face_triangles(original_face)
    if len(ts) == 0:
        raise IndexOutOfRange(f"face {original_face} has no surviving geometry")
    return np.unique(ts)


def face_centroid(mesh: Mesh, original_face: int) -> np.ndarray:
    """Arithmetic mean of the distinct vertices of the original polygon."""
    return mesh.vertices[face_vertex_ids(mesh, original_face)].mean(axis=0)


def face_normal(mesh: Mesh, original_face: int) -> np.ndarray:
    """Area-weighted winding normal (sum of the face's triangle cross products)."""
    ts = mesh.face_triangles(original_face)
    if len(ts) == 0:
        raise IndexOutOfRange(f"face {original_face} has no surviving geometry")
    a = mesh.vertices[ts[:, 0]]
    b = mesh.vertices[ts[:, 1]]
    c = mesh.vertices[ts[:, 2]]
    return np.cross(b - a, c - a).sum(axis=0)


def fingerprint(mesh: Mesh) -> MeshFingerprint:
    """SHA-256 over the canonical byte encoding of vertex and face data.

    Little-endian u64 counts, vertices as f64, triangle indices and the
    triangle->face map as i64. Comments and formatting in the source OBJ
    cannot influence it.
    """
    h = hashlib.sha256()
    counts = np.array(
        [len(mesh.vertices), len(mesh.triangles), mesh.original_face_count], dtype="<u8"
    )
    h.update(counts.tobytes())
    h.update(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.triangles, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(mesh.source_face_of, dtype="<i8").tobytes())
    return MeshFingerprint(sha256=h.hexdigest(), face_count=mesh.original_face_count)


def bounding_box(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise min/max over all referenced vertices."""
    if len(mesh.triangles) == 0:
        raise EmptyMesh("mesh has no triangles")
    if mesh._bbox is None:
        used = mesh.vertices[np.unique(mesh.triangles)]
        mesh._bbox = (used.min(axis=0), used.max(axis=0))
    return mesh._bbox


def scene_diagonal(mesh: Mesh) -> float:
    lo, hi = bounding_box(mesh)
    return float(np.linalg.norm(hi - lo))
