"""meshroi: interactive 3D mesh region annotation engine.

Brush and lasso gestures select visible faces of a textured OBJ mesh via
occlusion-correct per-pixel ray casting (BVH accelerated), with a selection
volume repair step for missed faces. Annotations persist as face-index sets
in a deterministic JSON document bound to the mesh fingerprint.
"""

from . import errors
from .annotations import (
    FILE_EXTENSION,
    FORMAT_NAME,
    FORMAT_VERSION,
    AnnotationDocument,
    AnnotationRecord,
    load_document,
    save_document,
)
from .mesh import (
    AdjacencyMap,
    Mesh,
    MeshFingerprint,
    bounding_box,
    build_adjacency,
    face_centroid,
    face_normal,
    fingerprint,
    load_obj,
    parse_obj,
    scene_diagonal,
    to_obj_text,
)
from .raycast import (
    Bvh,
    Camera,
    Hit,
    Ray,
    brute_rays,
    build_bvh,
    cast_rays,
    intersect_brute,
    intersect_nearest,
    pixel_to_ray,
    pixels_to_rays,
)
from .selection import (
    BrushStroke,
    LassoOutline,
    PixelFootprint,
    SelectionSet,
    cast_footprint,
    convex_hull,
    rasterize_brush,
    rasterize_lasso,
    refine_selection,
    select_brush,
    select_lasso,
    selection_volume,
)
from .session import (
    ReplayError,
    Session,
    SessionStats,
    StageTimings,
    parse_trace,
    replay_trace,
    validate_document_file,
)

__all__ = [
    "errors",
    "AnnotationDocument",
    "AnnotationRecord",
    "FORMAT_NAME",
    "FORMAT_VERSION",
    "FILE_EXTENSION",
    "load_document",
    "save_document",
    "AdjacencyMap",
    "Mesh",
    "MeshFingerprint",
    "bounding_box",
    "build_adjacency",
    "face_centroid",
    "face_normal",
    "fingerprint",
    "load_obj",
    "parse_obj",
    "scene_diagonal",
    "to_obj_text",
    "Bvh",
    "Camera",
    "Hit",
    "Ray",
    "brute_rays",
    "build_bvh",
    "cast_rays",
    "intersect_brute",
    "intersect_nearest",
    "pixel_to_ray",
    "pixels_to_rays",
    "BrushStroke",
    "LassoOutline",
    "PixelFootprint",
    "SelectionSet",
    "cast_footprint",
    "convex_hull",
    "rasterize_brush",
    "rasterize_lasso",
    "refine_selection",
    "select_brush",
    "select_lasso",
    "selection_volume",
    "ReplayError",
    "Session",
    "SessionStats",
    "StageTimings",
    "parse_trace",
    "replay_trace",
    "validate_document_file",
]

__version__ = "0.1.0"
