/** Wire types for the engine boundary API (JSON lines). */

export type Rgb = [number, number, number];

export interface CameraPose {
  position: [number, number, number];
  target: [number, number, number];
  up: [number, number, number];
  vfov_deg: number;
  viewport: [number, number];
  near: number;
}

export interface EngineErrorShape {
  code: string;
  message: string;
  detail?: string | null;
}

export interface MeshInfo {
  vertex_count: number;
  face_count: number;
  triangle_count: number;
  fingerprint: { sha256: string; face_count: number };
  texture_path: string | null;
  dropped_degenerate: number;
  blob: string; // base64: f32 positions, u32 indices, u32 face map, optional f32 corner UVs
  blob_layout: {
    vertex_count: number;
    triangle_count: number;
    has_uv: boolean;
    order: string[];
  };
  bvh_build_ms: number;
}

export interface GestureResult {
  faces: number[];
  count: number;
  timings: { raster_ms: number; cast_ms: number; refine_ms: number };
  gesture_kind: string;
}

export interface AnnotationEntry {
  id: string;
  color: Rgb;
  text: string;
  faces: number[];
}

export interface SessionStats {
  vertex_count: number;
  face_count: number;
  triangle_count: number;
  selected_face_count: number;
  annotation_count: number;
  last_timings: { raster_ms: number; cast_ms: number; refine_ms: number };
}

/** One recorded gesture-trace entry; mirrors what `annotate replay` consumes. */
export interface TraceEntry {
  kind?: "brush" | "lasso";
  camera?: CameraPose;
  points?: [number, number][];
  width_px?: number;
  additive?: boolean;
  action: "select" | { type: "annotate"; text: string; color: Rgb };
}

export interface GestureTrace {
  version: 1;
  entries: TraceEntry[];
}
