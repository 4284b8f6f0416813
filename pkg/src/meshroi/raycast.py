"""Pinhole camera rays and BVH-accelerated nearest-triangle intersection.

The BVH builder and the traversal are written against flat numpy arrays so
million-triangle meshes stay interactive without native extensions. A
linear-scan oracle (`intersect_brute`) shares the same triangle predicate
and tie-breaking, differing only in how candidates are enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMesh, OutOfViewport
from .mesh import Mesh, bounding_box

# relative tolerance on barycentric coordinates
BARY_EPS = 1e-7
# ray-parameter floor: 1e-7 x scene bounding-box diagonal, suppresses self hits
T_MIN_SCALE = 1e-7
LEAF_SIZE = 4


@dataclass
class Camera:
    """Pinhole view state; fully determines the pixel -> ray mapping."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray
    vfov_deg: float
    viewport_w: int
    viewport_h: int
    near: float = 0.01

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.target = np.asarray(self.target, dtype=np.float64).reshape(3)
        self.up = np.asarray(self.up, dtype=np.float64).reshape(3)
        if not 0.0 < self.vfov_deg < 180.0:
            raise ValueError("vfov_deg must be in (0, 180)")
        if self.viewport_w <= 0 or self.viewport_h <= 0:
            raise ValueError("viewport must be positive")
        if self.near <= 0:
            raise ValueError("near must be > 0")
        fwd = self.target - self.position
        if np.linalg.norm(fwd) == 0:
            raise ValueError("camera position and target coincide")
        if np.linalg.norm(np.cross(fwd, self.up)) < 1e-12 * np.linalg.norm(fwd) * np.linalg.norm(self.up):
            raise ValueError("up vector is parallel to the view direction")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, true_up, forward)."""
        forward = self.target - self.position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, self.up)
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward

    def to_json(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "target": [float(x) for x in self.target],
            "up": [float(x) for x in self.up],
            "vfov_deg": float(self.vfov_deg),
            "viewport": [int(self.viewport_w), int(self.viewport_h)],
            "near": float(self.near),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Camera":
        return cls(
            position=obj["position"],
            target=obj["target"],
            up=obj["up"],
            vfov_deg=obj["vfov_deg"],
            viewport_w=obj["viewport"][0],
            viewport_h=obj["viewport"][1],
            near=obj.get("near", 0.01),
        )


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length (within 1e-12)")


@dataclass
class Hit:
    triangle_index: int
    original_face: int
    t: float
    point: np.ndarray
    front_facing: bool


@dataclass
class Bvh:
    """Flat binary BVH: internal nodes have count 0 and child indices."""

    bmin: np.ndarray       # (N, 3)
    bmax: np.ndarray       # (N, 3)
    left: np.ndarray       # (N,) child node index, -1 on leaves
    right: np.ndarray
    start: np.ndarray      # (N,) leaf range start into tri_order
    count: np.ndarray      # (N,) leaf triangle count, 0 on internals
    tri_order: np.ndarray  # permutation of triangle indices
    t_min: float
    scene_diag: float
    depth: int = 1
    _tri_verts: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        # column-split copies of the boxes: traversal gathers 1D arrays only
        self._bx0, self._by0, self._bz0 = (np.ascontiguousarray(self.bmin[:, k]) for k in range(3))
        self._bx1, self._by1, self._bz1 = (np.ascontiguousarray(self.bmax[:, k]) for k in range(3))

    def node_count(self) -> int:
        return len(self.count)


def _concat_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(s, s+c) for each (s, c), vectorized."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    heads = np.cumsum(counts)[:-1]
    out[heads] = starts[1:] - (starts[:-1] + counts[:-1] - 1)
    return np.cumsum(out)


def build_bvh(mesh: Mesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median-split BVH over triangle bounding boxes, longest axis, leaves <= 4.

    Built level by level: each level re-orders the triangles of every still
    internal node around its positional median with one stable argsort, so
    construction is a handful of O(T log T) passes rather than per-node
    Python recursion.
    """
    tri = mesh.triangles
    t_count = len(tri)
    if t_count == 0:
        raise EmptyMesh("cannot build a BVH over zero triangles")

    p0 = mesh.vertices[tri[:, 0]]
    p1 = mesh.vertices[tri[:, 1]]
    p2 = mesh.vertices[tri[:, 2]]
    tb_min = np.minimum(np.minimum(p0, p1), p2)
    tb_max = np.maximum(np.maximum(p0, p1), p2)
    cent = (p0 + p1 + p2) / 3.0
    # contiguous columns: reduceat and gathers run on 1D arrays
    tb_lo = [np.ascontiguousarray(tb_min[:, k]) for k in range(3)]
    tb_hi = [np.ascontiguousarray(tb_max[:, k]) for k in range(3)]
    cent_c = [np.ascontiguousarray(cent[:, k]) for k in range(3)]

    lo, hi = bounding_box(mesh)
    diag = float(np.linalg.norm(hi - lo))

    tri_order = np.arange(t_count, dtype=np.int64)

    node_bmin: list[np.ndarray] = []
    node_bmax: list[np.ndarray] = []
    node_left: list[np.ndarray] = []
    node_right: list[np.ndarray] = []
    node_start: list[np.ndarray] = []
    node_cnt: list[np.ndarray] = []
    n_nodes = 0

    # active segments: contiguous ranges of tri_order, one per open node
    seg_start = np.array([0], dtype=np.int64)
    seg_count = np.array([t_count], dtype=np.int64)
    levels = 0

    while seg_start.size:
        levels += 1
        s_n = len(seg_start)
        pos = _concat_ranges(seg_start, seg_count)
        t_ids = tri_order[pos]
        local_starts = np.concatenate([[0], np.cumsum(seg_count)[:-1]])

        seg_bmin = np.column_stack(
            [np.minimum.reduceat(tb_lo[k][t_ids], local_starts) for k in range(3)]
        )
        seg_bmax = np.column_stack(
            [np.maximum.reduceat(tb_hi[k][t_ids], local_starts) for k in range(3)]
        )

        is_leaf = seg_count <= leaf_size
        internal = ~is_leaf
        n_split = int(internal.sum())

        left = np.full(s_n, -1, dtype=np.int64)
        right = np.full(s_n, -1, dtype=np.int64)
        start_arr = np.where(is_leaf, seg_start, 0)
        cnt_arr = np.where(is_leaf, seg_count, 0)

        child_base = n_nodes + s_n
        left[internal] = child_base + 2 * np.arange(n_split)
        right[internal] = left[internal] + 1

        node_bmin.append(seg_bmin)
        node_bmax.append(seg_bmax)
        node_left.append(left)
        node_right.append(right)
        node_start.append(start_arr)
        node_cnt.append(cnt_arr)
        n_nodes += s_n

        if n_split == 0:
            break

        # reorder internal segments by centroid along each node's longest axis;
        # one stable argsort over (segment rank + normalized key) replaces a
        # segmented sort, which only quantizes ordering among near-identical
        # centroids (the positional median split stays a median split)
        axis = np.argmax(seg_bmax - seg_bmin, axis=1)
        local_seg = np.repeat(np.arange(s_n), seg_count)
        active_pos_mask = internal[local_seg]
        a_pos = pos[active_pos_mask]
        a_ids = t_ids[active_pos_mask]
        a_seg = local_seg[active_pos_mask]

        keys = np.empty(len(a_ids))
        a_axis = axis[a_seg]
        for k in range(3):
            sel = a_axis == k
            if sel.any():
                keys[sel] = cent_c[k][a_ids[sel]]

        a_starts = np.flatnonzero(np.diff(np.concatenate([[-1], a_seg])) != 0)
        kmin = np.minimum.reduceat(keys, a_starts)
        kmax = np.maximum.reduceat(keys, a_starts)
        span = kmax - kmin
        span[span == 0.0] = 1.0
        seg_rank = np.cumsum(np.diff(np.concatenate([[-1], a_seg])) != 0) - 1
        combined = seg_rank + ((keys - kmin[seg_rank]) / span[seg_rank]) * (1.0 - 1e-9)
        order = np.argsort(combined, kind="stable")
        tri_order[a_pos] = a_ids[order]

        p_start = seg_start[internal]
        p_count = seg_count[internal]
        mid = p_count // 2
        seg_start = np.empty(2 * n_split, dtype=np.int64)
        seg_count = np.empty(2 * n_split, dtype=np.int64)
        seg_start[0::2] = p_start
        seg_count[0::2] = mid
        seg_start[1::2] = p_start + mid
        seg_count[1::2] = p_count - mid

    bmin = np.concatenate(node_bmin, axis=0)
    bmax = np.concatenate(node_bmax, axis=0)
    # hair's-breadth inflation so boundary-exact hits can never be culled
    pad = 1e-12 * max(diag, 1.0)
    bmin -= pad
    bmax += pad

    return Bvh(
        bmin=bmin,
        bmax=bmax,
        left=np.concatenate(node_left),
        right=np.concatenate(node_right),
        start=np.concatenate(node_start),
        count=np.concatenate(node_cnt),
        tri_order=tri_order,
        t_min=T_MIN_SCALE * diag,
        scene_diag=diag,
        depth=levels,
    )


# -- pixel -> ray ------------------------------------------------------------


def pixels_to_rays(camera: Camera, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rays through the centers of the given (x, y) pixels; (0, 0) is top-left."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    w, h = camera.viewport_w, camera.viewport_h
    if px.size and (
        px[:, 0].min() < 0 or px[:, 0].max() >= w or px[:, 1].min() < 0 or px[:, 1].max() >= h
    ):
        raise OutOfViewport(f"pixel outside {w}x{h} viewport")
    right, true_up, forward = camera.basis()
    tan_half = math.tan(math.radians(camera.vfov_deg) / 2.0)
    aspect = w / h
    ndc_x = (px[:, 0] + 0.5) / w * 2.0 - 1.0
    ndc_y = 1.0 - (px[:, 1] + 0.5) / h * 2.0
    d = (
        forward[None, :]
        + (ndc_x * tan_half * aspect)[:, None] * right[None, :]
        + (ndc_y * tan_half)[:, None] * true_up[None, :]
    )
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.position, d.shape)
    return origins, d


def pixel_to_ray(camera: Camera, px: float, py: float) -> Ray:
    origins, dirs = pixels_to_rays(camera, np.array([[px, py]]))
    return Ray(origin=origins[0].copy(), direction=dirs[0])


# -- triangle intersection core ----------------------------------------------


def _tri_cols(mesh: Mesh):
    """Triangle vertex coordinates as nine contiguous 1D arrays (fast gathers)."""
    tri = mesh.triangles
    v = mesh.vertices
    cols = []
    for corner in range(3):
        pts = v[tri[:, corner]]
        cols.extend(np.ascontiguousarray(pts[:, k]) for k in range(3))
    return tuple(cols)


def _bvh_tri_cols(bvh: Bvh, mesh: Mesh):
    if bvh._tri_verts is None:
        bvh._tri_verts = _tri_cols(mesh)
    return bvh._tri_verts


def _mt_t(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz, t_min):
    """Moller-Trumbore parameter per element (broadcasting); +inf on miss.

    Both the BVH leaf stage and the brute-force oracle run this exact
    operation sequence, so a given (ray, triangle) pair yields a bit
    identical t on either route.
    """
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tx = ox - ax
        ty = oy - ay
        tz = oz - az
        u = (tx * px + ty * py + tz * pz) * inv
        qx = ty * e1z - tz * e1y
        qy = tz * e1x - tx * e1z
        qz = tx * e1y - ty * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
    ok = (
        (u >= -BARY_EPS)
        & (v >= -BARY_EPS)
        & (u + v <= 1.0 + BARY_EPS)
        & (t > t_min)
        & np.isfinite(t)
    )
    return np.where(ok, t, np.inf)


class _RayCols:
    """Chunk of rays split into coordinate columns, plus reciprocal directions."""

    def __init__(self, origins: np.ndarray, dirs: np.ndarray):
        self.n = len(origins)
        self.ox, self.oy, self.oz = (np.ascontiguousarray(origins[:, k]) for k in range(3))
        self.dx, self.dy, self.dz = (np.ascontiguousarray(dirs[:, k]) for k in range(3))
        with np.errstate(divide="ignore"):
            self.ix = 1.0 / self.dx
            self.iy = 1.0 / self.dy
            self.iz = 1.0 / self.dz
        self.has_zero = bool((dirs == 0.0).any())

    def take(self, idx: np.ndarray) -> "_RayCols":
        sub = object.__new__(_RayCols)
        sub.n = len(idx)
        for name in ("ox", "oy", "oz", "dx", "dy", "dz", "ix", "iy", "iz"):
            setattr(sub, name, getattr(self, name)[idx])
        sub.has_zero = self.has_zero
        return sub


def _axis_slabs(b0, b1, o, inv, d, has_zero):
    with np.errstate(invalid="ignore"):
        t0 = (b0 - o) * inv
        t1 = (b1 - o) * inv
    if has_zero:
        zero = d == 0.0
        if zero.any():
            inside = (o >= b0) & (o <= b1)
            t0 = np.where(zero, np.where(inside, -np.inf, np.inf), t0)
            t1 = np.where(zero, np.where(inside, np.inf, -np.inf), t1)
    return np.minimum(t0, t1), np.maximum(t0, t1)


def _box_enter_cols(bvh: Bvh, nodes: np.ndarray, rays: _RayCols, t_min: float):
    """Slab-test entry parameter per (ray, node) row; +inf on miss."""
    nx, fx = _axis_slabs(bvh._bx0[nodes], bvh._bx1[nodes], rays.ox, rays.ix, rays.dx, rays.has_zero)
    ny, fy = _axis_slabs(bvh._by0[nodes], bvh._by1[nodes], rays.oy, rays.iy, rays.dy, rays.has_zero)
    nz, fz = _axis_slabs(bvh._bz0[nodes], bvh._bz1[nodes], rays.oz, rays.iz, rays.dz, rays.has_zero)
    enter = np.maximum(np.maximum(nx, ny), np.maximum(nz, t_min))
    exit_ = np.minimum(np.minimum(fx, fy), fz)
    return np.where(enter <= exit_, enter, np.inf)


def _cast_chunk(bvh: Bvh, mesh: Mesh, origins, dirs):
    """Wavefront DFS: every ray keeps its own node stack, all rays advance
    one pop per iteration. Children are pushed far-then-near so the near
    subtree resolves first and best-t prunes the rest.

    Pruning never drops a candidate that could win: a subtree is skipped
    only when its entry parameter strictly exceeds the ray's current best t,
    and any triangle inside satisfies t >= entry.
    """
    n = len(origins)
    va = _bvh_tri_cols(bvh, mesh)
    rays = _RayCols(origins, dirs)
    t_min = bvh.t_min

    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)

    enter0 = _box_enter_cols(bvh, np.zeros(n, dtype=np.int64), rays, t_min)
    idx = np.flatnonzero(np.isfinite(enter0)).astype(np.int64)

    depth = int(bvh.depth) + 4
    stack_node = np.zeros((n, depth), dtype=np.int32)
    stack_enter = np.full((n, depth), np.inf)
    sp = np.full(n, -1, dtype=np.int32)
    sp[idx] = 0
    stack_enter[idx, 0] = enter0[idx]

    last_tri = len(bvh.tri_order) - 1

    while idx.size:
        spi = sp[idx]
        node = stack_node[idx, spi].astype(np.int64)
        ent = stack_enter[idx, spi]
        sp[idx] = spi - 1

        live = ent <= best_t[idx]
        cur = idx[live]
        node = node[live]

        if cur.size:
            counts = bvh.count[node]
            leaf = counts > 0

            if leaf.any():
                lray = cur[leaf]
                lnode = node[leaf]
                starts = bvh.start[lnode]
                cnts = bvh.count[lnode]
                lt = best_t[lray]
                ltri = best_tri[lray]
                ox, oy, oz = rays.ox[lray], rays.oy[lray], rays.oz[lray]
                dx, dy, dz = rays.dx[lray], rays.dy[lray], rays.dz[lray]
                for j in range(LEAF_SIZE):
                    has = cnts > j
                    if not has.any():
                        break
                    tid = bvh.tri_order[np.minimum(starts + j, last_tri)]
                    t = _mt_t(
                        ox, oy, oz, dx, dy, dz,
                        va[0][tid], va[1][tid], va[2][tid],
                        va[3][tid], va[4][tid], va[5][tid],
                        va[6][tid], va[7][tid], va[8][tid],
                        t_min,
                    )
                    t = np.where(has, t, np.inf)
                    # lexicographic (t, triangle_index) minimum
                    better = (t < lt) | ((t == lt) & (tid < ltri))
                    lt = np.where(better, t, lt)
                    ltri = np.where(better, tid, ltri)
                best_t[lray] = lt
                best_tri[lray] = ltri

            internal = ~leaf
            if internal.any():
                ir = cur[internal]
                inode = node[internal]
                sub = rays.take(ir)
                lc = bvh.left[inode]
                rc = bvh.right[inode]
                el = _box_enter_cols(bvh, lc, sub, t_min)
                er = _box_enter_cols(bvh, rc, sub, t_min)
                bt = best_t[ir]
                okl = np.isfinite(el) & (el <= bt)
                okr = np.isfinite(er) & (er <= bt)
                both = okl & okr
                l_near = el <= er
                far_node = np.where(l_near, rc, lc)
                far_ent = np.where(l_near, er, el)
                near_node = np.where(both, np.where(l_near, lc, rc), np.where(okl, lc, rc))
                near_ent = np.where(both, np.where(l_near, el, er), np.where(okl, el, er))

                pb = np.flatnonzero(both)
                if pb.size:
                    rows = ir[pb]
                    sp[rows] += 1
                    stack_node[rows, sp[rows]] = far_node[pb]
                    stack_enter[rows, sp[rows]] = far_ent[pb]
                pa = np.flatnonzero(okl | okr)
                if pa.size:
                    rows = ir[pa]
                    sp[rows] += 1
                    stack_node[rows, sp[rows]] = near_node[pa]
                    stack_enter[rows, sp[rows]] = near_ent[pa]

        idx = idx[sp[idx] >= 0]

    return best_tri, best_t


def cast_rays(
    bvh: Bvh, mesh: Mesh, origins: np.ndarray, dirs: np.ndarray, chunk: int = 65536
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest hit for a batch of rays.

    Returns (triangle_index (-1 on miss), t, front_facing).
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(origins)
    tri_out = np.full(n, -1, dtype=np.int64)
    t_out = np.full(n, np.inf)
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        tri_out[s:e], t_out[s:e] = _cast_chunk(bvh, mesh, origins[s:e], dirs[s:e])
    front = _front_facing(mesh, tri_out, dirs)
    return tri_out, t_out, front


def _front_facing(mesh: Mesh, tri_idx: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """direction . winding normal < 0, False on misses."""
    front = np.zeros(len(tri_idx), dtype=bool)
    got = tri_idx >= 0
    if got.any():
        tri = mesh.triangles[tri_idx[got]]
        a = mesh.vertices[tri[:, 0]]
        b = mesh.vertices[tri[:, 1]]
        c = mesh.vertices[tri[:, 2]]
        normal = np.cross(b - a, c - a)
        front[got] = np.einsum("ij,ij->i", dirs[got], normal) < 0.0
    return front


def brute_rays(
    mesh: Mesh, origins: np.ndarray, dirs: np.ndarray, chunk_rows: int = 4_000_000
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear-scan counterpart of cast_rays with identical tie-breaking."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    va = _tri_cols(mesh)
    vb = tuple(col[None, :] for col in va)
    t_count = len(mesh.triangles)
    lo, hi = bounding_box(mesh)
    t_min = T_MIN_SCALE * float(np.linalg.norm(hi - lo))

    n = len(origins)
    tri_out = np.full(n, -1, dtype=np.int64)
    t_out = np.full(n, np.inf)
    rays_per_chunk = max(1, chunk_rows // max(t_count, 1))
    for s in range(0, n, rays_per_chunk):
        e = min(s + rays_per_chunk, n)
        r = e - s
        o = origins[s:e]
        d = dirs[s:e]
        t = _mt_t(
            o[:, 0:1], o[:, 1:2], o[:, 2:3],
            d[:, 0:1], d[:, 1:2], d[:, 2:3],
            *vb,
            t_min,
        )
        # argmin returns the first minimum: the lowest triangle index on ties
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(r), idx]
        hit = np.isfinite(tmin)
        tri_out[s:e] = np.where(hit, idx, -1)
        t_out[s:e] = tmin
    front = _front_facing(mesh, tri_out, dirs)
    return tri_out, t_out, front


def _make_hit(mesh: Mesh, tri: int, t: float, origin, direction, front: bool) -> Hit:
    return Hit(
        triangle_index=int(tri),
        original_face=int(mesh.source_face_of[tri]),
        t=float(t),
        point=np.asarray(origin) + float(t) * np.asarray(direction),
        front_facing=bool(front),
    )


def intersect_nearest(bvh: Bvh, mesh: Mesh, ray: Ray) -> Hit | None:
    """Nearest hit along the ray; back faces register too (policy lives upstream)."""
    tri, t, front = cast_rays(bvh, mesh, ray.origin[None, :], ray.direction[None, :])
    if tri[0] < 0:
        return None
    return _make_hit(mesh, tri[0], t[0], ray.origin, ray.direction, front[0])


def intersect_brute(mesh: Mesh, ray: Ray) -> Hit | None:
    """Verification oracle: linear scan over every triangle."""
    tri, t, front = brute_rays(mesh, ray.origin[None, :], ray.direction[None, :])
    if tri[0] < 0:
        return None
    return _make_hit(mesh, tri[0], t[0], ray.origin, ray.direction, front[0])
