"""Screen-space gestures to face sets: rasterize, cast, repair.

Both gestures normalize to a pixel footprint first. Each covered pixel
casts exactly one ray; front-facing nearest hits form the seed set. The
seed's bounding volume then bounds an adjacency flood fill that restores
faces the per-pixel rays happened to miss.

Pixel convention: gesture coordinates live in pixel-center space, i.e. the
point (10.0, 10.0) is the center of pixel (10, 10); a pixel belongs to a
region iff its center does (half-open on boundaries).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateOutline, EmptySeed, OutOfViewport
from .mesh import AdjacencyMap, Mesh, MeshFingerprint, scene_diagonal
from .raycast import Bvh, Camera, _concat_ranges, cast_rays, pixels_to_rays

VOLUME_INFLATE_SCALE = 1e-6
# a repaired face must share edges with at least this many already-included
# faces; one shared edge would let a disc-shaped seed bleed into the corner
# regions of its own bounding volume
REFINE_MIN_SUPPORT = 2

WORKER_ENV = "ANNOTATE_THREADS"
# below this many rays per worker the pool costs more than it buys
MIN_RAYS_PER_WORKER = 4096


DEFAULT_WORKERS = 8


def resolve_workers(requested: int | None = None) -> int:
    """Worker count for footprint casting, capped by ANNOTATE_THREADS."""
    if requested is None:
        requested = DEFAULT_WORKERS
    cap = os.environ.get(WORKER_ENV)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def _check_points(points: np.ndarray, camera: Camera):
    if len(points) and (
        points[:, 0].min() < 0
        or points[:, 0].max() >= camera.viewport_w
        or points[:, 1].min() < 0
        or points[:, 1].max() >= camera.viewport_h
    ):
        raise OutOfViewport("gesture point outside the viewport")


@dataclass
class BrushStroke:
    camera: Camera
    points: np.ndarray  # (N, 2) pixel coordinates, N >= 1
    width_px: float     # brush diameter, >= 1

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 1:
            raise ValueError("brush stroke needs at least one point")
        if self.width_px < 1:
            raise ValueError("brush width must be >= 1 px")
        if self.width_px > min(self.camera.viewport_w, self.camera.viewport_h):
            raise ValueError("brush width exceeds the viewport")
        _check_points(self.points, self.camera)


@dataclass
class LassoOutline:
    camera: Camera
    points: np.ndarray  # (N, 2), N >= 3

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 3:
            raise ValueError("lasso outline needs at least three points")
        _check_points(self.points, self.camera)


@dataclass
class PixelFootprint:
    """Covered pixels, sorted by (y, x), all inside the snapshot viewport."""

    pixels: np.ndarray  # (N, 2) int64 columns (x, y)
    viewport_w: int
    viewport_h: int

    def __len__(self) -> int:
        return len(self.pixels)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(x), int(y)) for x, y in self.pixels}


@dataclass
class SelectionSet:
    """Result of one gesture: sorted original-face indices plus its camera."""

    faces: np.ndarray  # sorted unique int64
    camera: Camera
    gesture_kind: str  # "brush" | "lasso"
    mesh_fingerprint: MeshFingerprint

    def __post_init__(self):
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return len(self.faces)


# -- rasterization -----------------------------------------------------------


def rasterize_brush(stroke: BrushStroke) -> PixelFootprint:
    """Union of discs of radius width/2 stamped along the stroke.

    Segments are resampled at <= 1 px spacing; a pixel is covered iff its
    center lies within the disc radius of any stamp.
    """
    w, h = stroke.camera.viewport_w, stroke.camera.viewport_h
    r = stroke.width_px / 2.0
    pts = stroke.points

    samples = [pts]
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        dist = float(np.hypot(*(b - a)))
        n = int(math.ceil(dist))
        if n > 1:
            ts = np.arange(1, n) / n
            samples.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    stamps = np.unique(np.concatenate(samples), axis=0)

    canvas = np.zeros((h, w), dtype=bool)
    r2 = r * r
    for sx, sy in stamps:
        x0 = max(0, int(math.ceil(sx - r)))
        x1 = min(w - 1, int(math.floor(sx + r)))
        y0 = max(0, int(math.ceil(sy - r)))
        y1 = min(h - 1, int(math.floor(sy + r)))
        if x0 > x1 or y0 > y1:
            continue
        dx = np.arange(x0, x1 + 1) - sx
        dy = np.arange(y0, y1 + 1) - sy
        canvas[y0:y1 + 1, x0:x1 + 1] |= (dy * dy)[:, None] + (dx * dx)[None, :] <= r2

    ys, xs = np.nonzero(canvas)
    return PixelFootprint(np.column_stack([xs, ys]).astype(np.int64), w, h)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Strict convex hull (monotone chain), counter-clockwise, no collinear runs."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def rasterize_lasso(outline: LassoOutline) -> PixelFootprint:
    """Scanline fill of the outline's convex hull.

    Concave input is silently reduced to its hull (the UI warns; the engine
    guarantees it). Inclusion is half-open: a pixel belongs iff its center,
    nudged by +epsilon in x and y, falls strictly inside the hull, which
    makes left/top boundaries inclusive and right/bottom exclusive.
    """
    w, h = outline.camera.viewport_w, outline.camera.viewport_h
    hull = convex_hull(outline.points)
    if len(hull) < 3:
        raise DegenerateOutline("lasso outline has zero area")

    edges = []
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        edges.append((a[0], a[1], b[0] - a[0], b[1] - a[1]))

    y_lo = max(0, int(math.ceil(hull[:, 1].min())))
    y_hi = min(h - 1, int(math.floor(hull[:, 1].max())))

    xs_parts: list[np.ndarray] = []
    ys_parts: list[np.ndarray] = []
    for y in range(y_lo, y_hi + 1):
        x_lo = -math.inf
        x_hi = math.inf
        dead = False
        for ax, ay, ex, ey in edges:
            inclusive = (ex - ey) > 0
            if ey == 0.0:
                val = ex * (y - ay)
                if val > 0 or (val == 0 and inclusive):
                    continue
                dead = True
                break
            bound = (ex * (y - ay) + ey * ax) / ey
            if ey > 0:
                # base > 0 <=> x < bound; equality included when the edge is
                # left/top flavored (ex - ey > 0)
                hi_int = math.floor(bound)
                if not inclusive and bound == hi_int:
                    hi_int -= 1
                x_hi = min(x_hi, hi_int)
            else:
                lo_int = math.ceil(bound)
                if not inclusive and bound == lo_int:
                    lo_int += 1
                x_lo = max(x_lo, lo_int)
        if dead:
            continue
        x0 = max(0, int(x_lo))
        x1 = min(w - 1, int(x_hi))
        if x0 > x1:
            continue
        xs_parts.append(np.arange(x0, x1 + 1, dtype=np.int64))
        ys_parts.append(np.full(x1 - x0 + 1, y, dtype=np.int64))

    if xs_parts:
        pixels = np.column_stack([np.concatenate(xs_parts), np.concatenate(ys_parts)])
    else:
        pixels = np.empty((0, 2), dtype=np.int64)
    return PixelFootprint(pixels, w, h)


# -- casting and refinement ----------------------------------------------------


def cast_footprint(
    footprint: PixelFootprint,
    camera: Camera,
    bvh: Bvh,
    mesh: Mesh,
    workers: int | None = None,
) -> np.ndarray:
    """Original faces under front-facing nearest hits, one ray per pixel.

    Misses and back-facing nearest hits contribute nothing. Pixel batches may
    fan out across worker threads; the merge is a sorted union, so the result
    is identical for any worker count.
    """
    if len(footprint) == 0:
        return np.empty(0, dtype=np.int64)
    origins, dirs = pixels_to_rays(camera, footprint.pixels.astype(np.float64))
    n_workers = resolve_workers(workers)

    def casted(o, d):
        tri, _, front = cast_rays(bvh, mesh, o, d)
        sel = tri[(tri >= 0) & front]
        return np.unique(mesh.source_face_of[sel])

    # the worker count is a cap, not a demand: fan out only when every
    # worker gets enough rays for the thread to pay for itself
    if n_workers <= 1 or len(footprint) < n_workers * MIN_RAYS_PER_WORKER:
        return casted(origins, dirs)

    o_parts = np.array_split(origins, n_workers)
    d_parts = np.array_split(dirs, n_workers)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        parts = list(pool.map(casted, o_parts, d_parts))
    return np.unique(np.concatenate(parts))


def selection_volume(mesh: Mesh, seed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box over every vertex of every seed face."""
    seed = np.asarray(seed, dtype=np.int64).reshape(-1)
    if seed.size == 0:
        raise EmptySeed("selection volume needs at least one face")
    off = mesh.face_tri_offsets()
    tri_ids = _concat_ranges(off[seed], off[seed + 1] - off[seed])
    verts = mesh.vertices[np.unique(mesh.triangles[tri_ids])]
    return verts.min(axis=0), verts.max(axis=0)


def _face_metrics(mesh: Mesh, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid (mean of distinct vertices) and winding normal per face."""
    off = mesh.face_tri_offsets()
    counts = off[faces + 1] - off[faces]
    centroids = np.empty((len(faces), 3))
    normals = np.empty((len(faces), 3))

    single = counts == 1
    if single.any():
        t = mesh.triangles[off[faces[single]]]
        a = mesh.vertices[t[:, 0]]
        b = mesh.vertices[t[:, 1]]
        c = mesh.vertices[t[:, 2]]
        centroids[single] = (a + b + c) / 3.0
        normals[single] = np.cross(b - a, c - a)

    for i in np.flatnonzero(~single):
        f = int(faces[i])
        ts = mesh.triangles[off[f]:off[f + 1]]
        centroids[i] = mesh.vertices[np.unique(ts)].mean(axis=0)
        a = mesh.vertices[ts[:, 0]]
        b = mesh.vertices[ts[:, 1]]
        c = mesh.vertices[ts[:, 2]]
        normals[i] = np.cross(b - a, c - a).sum(axis=0)
    return centroids, normals


def refine_selection(
    mesh: Mesh,
    adjacency: AdjacencyMap,
    camera: Camera,
    seed: np.ndarray,
    volume: tuple[np.ndarray, np.ndarray],
    gesture_kind: str = "brush",
) -> SelectionSet:
    """Repair holes: flood the seed outward through face adjacency.

    A candidate joins iff its centroid lies inside the (slightly inflated)
    selection volume, it faces the gesture camera, and it shares edges with
    at least two already-included faces. The two-edge support keeps repair
    inside the painted patch instead of growing its silhouette.
    """
    seed = np.unique(np.asarray(seed, dtype=np.int64).reshape(-1))
    if seed.size == 0:
        raise EmptySeed("refinement needs a non-empty seed")

    nf = mesh.original_face_count
    inflate = VOLUME_INFLATE_SCALE * scene_diagonal(mesh)
    lo = np.asarray(volume[0], dtype=np.float64) - inflate
    hi = np.asarray(volume[1], dtype=np.float64) + inflate

    included = np.zeros(nf, dtype=bool)
    included[seed] = True
    support = np.zeros(nf, dtype=np.int32)
    geo = np.zeros(nf, dtype=np.int8)  # 0 unknown, 1 passes, 2 fails
    cam_pos = camera.position

    frontier = seed
    while frontier.size:
        offs = adjacency.offsets
        counts = offs[frontier + 1] - offs[frontier]
        nbr = adjacency.targets[_concat_ranges(offs[frontier], counts)]
        if nbr.size == 0:
            break
        np.add.at(support, nbr, 1)

        cand = np.unique(nbr)
        cand = cand[~included[cand]]
        cand = cand[support[cand] >= REFINE_MIN_SUPPORT]
        if cand.size == 0:
            break

        unknown = cand[geo[cand] == 0]
        if unknown.size:
            cents, norms = _face_metrics(mesh, unknown)
            in_vol = np.all((cents >= lo) & (cents <= hi), axis=1)
            facing = np.einsum("ij,ij->i", cents - cam_pos, norms) < 0.0
            geo[unknown] = np.where(in_vol & facing, 1, 2)

        newly = cand[geo[cand] == 1]
        included[newly] = True
        frontier = newly

    return SelectionSet(
        faces=np.flatnonzero(included).astype(np.int64),
        camera=camera,
        gesture_kind=gesture_kind,
        mesh_fingerprint=mesh.fingerprint(),
    )


# -- gesture entry points --------------------------------------------------------


def _run_gesture(
    footprint: PixelFootprint,
    camera: Camera,
    bvh: Bvh,
    mesh: Mesh,
    adjacency: AdjacencyMap,
    kind: str,
    raster_ms: float,
    workers: int | None,
    timings: dict | None,
) -> SelectionSet:
    t0 = time.perf_counter()
    seed = cast_footprint(footprint, camera, bvh, mesh, workers=workers)
    cast_ms = (time.perf_counter() - t0) * 1000.0

    refine_ms = 0.0
    if seed.size == 0:
        # painting over background is a no-op, not an error
        result = SelectionSet(
            faces=np.empty(0, dtype=np.int64),
            camera=camera,
            gesture_kind=kind,
            mesh_fingerprint=mesh.fingerprint(),
        )
    else:
        t0 = time.perf_counter()
        volume = selection_volume(mesh, seed)
        result = refine_selection(mesh, adjacency, camera, seed, volume, gesture_kind=kind)
        refine_ms = (time.perf_counter() - t0) * 1000.0

    if timings is not None:
        timings["raster_ms"] = raster_ms
        timings["cast_ms"] = cast_ms
        timings["refine_ms"] = refine_ms
    return result


def select_brush(
    stroke: BrushStroke,
    bvh: Bvh,
    mesh: Mesh,
    adjacency: AdjacencyMap,
    *,
    workers: int | None = None,
    timings: dict | None = None,
) -> SelectionSet:
    """Full brush pipeline: rasterize, cast, bound, repair."""
    t0 = time.perf_counter()
    fp = rasterize_brush(stroke)
    raster_ms = (time.perf_counter() - t0) * 1000.0
    return _run_gesture(
        fp, stroke.camera, bvh, mesh, adjacency, "brush", raster_ms, workers, timings
    )


def select_lasso(
    outline: LassoOutline,
    bvh: Bvh,
    mesh: Mesh,
    adjacency: AdjacencyMap,
    *,
    workers: int | None = None,
    timings: dict | None = None,
) -> SelectionSet:
    """Full lasso pipeline over the outline's convex hull."""
    t0 = time.perf_counter()
    fp = rasterize_lasso(outline)
    raster_ms = (time.perf_counter() - t0) * 1000.0
    return _run_gesture(
        fp, outline.camera, bvh, mesh, adjacency, "lasso", raster_ms, workers, timings
    )
