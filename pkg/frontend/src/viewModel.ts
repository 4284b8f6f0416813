import type {
  AnnotationEntry,
  CameraPose,
  GestureResult,
  GestureTrace,
  MeshInfo,
  Rgb,
  SessionStats,
  TraceEntry,
} from "./protocol.js";

/** Narrow view of the client the view model needs (mockable in tests). */
export interface EngineApi {
  request<T = any>(method: string, params?: object): Promise<T>;
  onDisconnect(cb: () => void): void;
}

export type Tool = "navigate" | "brush" | "lasso";

/** Corner frame: live system status. */
export interface CornerFrame {
  fps: number;
  vertexCount: number;
  polygonCount: number;
  selectedCount: number;
  selectedRegionName: string | null;
  mousePos: { x: number; y: number } | null;
}

/** Tools frame: tool pick and settings. */
export interface ToolsFrame {
  activeTool: Tool;
  brushWidthPx: number;
  color: Rgb;
}

/** Properties frame: the annotation list. */
export interface PropertiesFrame {
  annotations: AnnotationEntry[];
  selectedId: string | null;
}

/** Main toolbar: file state and engine connectivity. */
export interface ToolbarFrame {
  meshPath: string | null;
  documentPath: string | null;
  unsavedChanges: boolean;
  engineConnected: boolean;
}

export interface Notice {
  kind: "info" | "warning" | "error";
  text: string;
}

/**
 * All viewer state and behavior, free of any DOM or renderer dependency.
 *
 * Every selection and every byte of persistence come from the engine; this
 * class only captures gestures, mirrors responses into the four frames, and
 * records a replayable trace of what it sent.
 */
export class AnnotatorViewModel {
  readonly corner: CornerFrame = {
    fps: 0,
    vertexCount: 0,
    polygonCount: 0,
    selectedCount: 0,
    selectedRegionName: null,
    mousePos: null,
  };
  readonly tools: ToolsFrame = { activeTool: "navigate", brushWidthPx: 16, color: [220, 40, 40] };
  readonly properties: PropertiesFrame = { annotations: [], selectedId: null };
  readonly toolbar: ToolbarFrame = {
    meshPath: null,
    documentPath: null,
    unsavedChanges: false,
    engineConnected: true,
  };

  /** face index -> display colour, rebuilt from annotations + current selection */
  highlightMap = new Map<number, Rgb>();
  pendingPoints: [number, number][] = [];
  notices: Notice[] = [];
  meshInfo: MeshInfo | null = null;
  currentSelection: number[] = [];

  private engine: EngineApi;
  private camera: CameraPose | null = null;
  private drawing = false;
  private traceEntries: TraceEntry[] = [];
  private changeListeners: (() => void)[] = [];

  constructor(engine: EngineApi) {
    this.engine = engine;
    engine.onDisconnect(() => {
      this.toolbar.engineConnected = false;
      this.pushNotice("error", "engine disconnected — tools disabled, reconnect to continue");
      this.emitChange();
    });
  }

  // -- subscriptions ------------------------------------------------------

  onChange(cb: () => void): void {
    this.changeListeners.push(cb);
  }

  private emitChange(): void {
    for (const cb of this.changeListeners) cb();
  }

  private pushNotice(kind: Notice["kind"], text: string): void {
    this.notices.push({ kind, text });
  }

  // -- session ------------------------------------------------------------

  async loadMesh(path: string): Promise<MeshInfo> {
    const info = await this.engine.request<MeshInfo>("load_mesh", { path });
    this.meshInfo = info;
    this.toolbar.meshPath = path;
    this.toolbar.unsavedChanges = false;
    this.corner.vertexCount = info.vertex_count;
    this.corner.polygonCount = info.face_count;
    this.corner.selectedCount = 0;
    this.corner.selectedRegionName = null;
    this.properties.annotations = [];
    this.properties.selectedId = null;
    this.currentSelection = [];
    this.traceEntries = [];
    this.rebuildHighlights();
    this.emitChange();
    return info;
  }

  async setCamera(pose: CameraPose): Promise<void> {
    await this.engine.request("set_camera", pose);
    this.camera = pose;
  }

  getCamera(): CameraPose | null {
    return this.camera;
  }

  setFps(fps: number): void {
    this.corner.fps = fps;
    this.emitChange();
  }

  setMousePos(x: number, y: number): void {
    this.corner.mousePos = { x, y };
  }

  // -- tools frame ---------------------------------------------------------

  setTool(tool: Tool): void {
    this.tools.activeTool = tool;
    this.pendingPoints = [];
    this.drawing = false;
    this.emitChange();
  }

  setBrushWidth(px: number): void {
    this.tools.brushWidthPx = Math.max(1, Math.round(px));
  }

  setColor(color: Rgb): void {
    this.tools.color = color;
  }

  // -- gesture capture -------------------------------------------------------
  // Whole gestures go to the engine on release, never per-event streaming,
  // so the recorded trace replays exactly.

  pointerDown(x: number, y: number): void {
    if (!this.interactive() || this.tools.activeTool !== "brush") return;
    this.drawing = true;
    this.pendingPoints = [[x, y]];
  }

  pointerMove(x: number, y: number): void {
    this.setMousePos(x, y);
    if (this.drawing && this.tools.activeTool === "brush") {
      this.pendingPoints.push([x, y]);
    }
  }

  async pointerUp(additive = false): Promise<GestureResult | null> {
    if (!this.drawing || this.tools.activeTool !== "brush") return null;
    this.drawing = false;
    const points = this.pendingPoints;
    this.pendingPoints = [];
    if (points.length === 0) return null;
    return this.sendGesture("brush", points, this.tools.brushWidthPx, additive);
  }

  lassoClick(x: number, y: number): void {
    if (!this.interactive() || this.tools.activeTool !== "lasso") return;
    this.pendingPoints.push([x, y]);
  }

  async lassoComplete(additive = false): Promise<GestureResult | null> {
    if (this.tools.activeTool !== "lasso") return null;
    const points = this.pendingPoints;
    if (points.length < 3) {
      this.pushNotice("warning", "a lasso needs at least three points");
      this.emitChange();
      return null;
    }
    this.pendingPoints = [];
    if (!isConvex(points)) {
      // the engine hulls concave outlines; say so instead of failing silently
      this.pushNotice("warning", "convex regions only — outline reduced to its convex hull");
    }
    return this.sendGesture("lasso", points, undefined, additive);
  }

  /** Esc: throw away the half-built gesture. */
  cancelGesture(): void {
    this.pendingPoints = [];
    this.drawing = false;
    this.emitChange();
  }

  private interactive(): boolean {
    return this.toolbar.engineConnected && this.meshInfo !== null;
  }

  private async sendGesture(
    kind: "brush" | "lasso",
    points: [number, number][],
    width_px: number | undefined,
    additive: boolean,
  ): Promise<GestureResult> {
    if (!this.camera) throw new Error("no camera set");
    const params: any = { kind, points, additive };
    if (width_px !== undefined) params.width_px = width_px;
    const result = await this.engine.request<GestureResult>("gesture_select", params);

    const entry: TraceEntry = { kind, camera: this.camera, points, action: "select" };
    if (width_px !== undefined) entry.width_px = width_px;
    if (additive) entry.additive = true;
    this.traceEntries.push(entry);

    this.currentSelection = result.faces;
    this.corner.selectedCount = result.count;
    this.corner.selectedRegionName = null;
    this.properties.selectedId = null;
    this.rebuildHighlights();
    this.emitChange();
    return result;
  }

  // -- annotations ----------------------------------------------------------

  async commitAnnotation(text: string): Promise<string> {
    const color = this.tools.color;
    const { id } = await this.engine.request<{ id: string }>("commit_annotation", {
      text,
      color,
    });
    this.traceEntries.push({ action: { type: "annotate", text, color } });
    this.toolbar.unsavedChanges = true;
    await this.refreshAnnotations();
    return id;
  }

  async refreshAnnotations(): Promise<void> {
    const { annotations } = await this.engine.request<{ annotations: AnnotationEntry[] }>(
      "list_annotations",
    );
    this.properties.annotations = annotations;
    this.rebuildHighlights();
    this.emitChange();
  }

  selectAnnotation(id: string | null): void {
    this.properties.selectedId = id;
    const rec = this.properties.annotations.find((a) => a.id === id);
    this.corner.selectedRegionName = rec ? (rec.text || rec.id) : null;
    this.rebuildHighlights();
    this.emitChange();
  }

  async editAnnotationText(id: string, text: string): Promise<void> {
    await this.engine.request("update_annotation", { id, text });
    this.toolbar.unsavedChanges = true;
    await this.refreshAnnotations();
    if (this.properties.selectedId === id) this.selectAnnotation(id);
  }

  /**
   * Destructive: the caller must supply the user's confirmation. Without a
   * confirming answer nothing is sent.
   */
  async deleteAnnotation(id: string, confirm: () => boolean): Promise<boolean> {
    if (!confirm()) return false;
    await this.engine.request("delete_annotation", { id });
    if (this.properties.selectedId === id) this.selectAnnotation(null);
    this.toolbar.unsavedChanges = true;
    await this.refreshAnnotations();
    return true;
  }

  // -- persistence ----------------------------------------------------------

  async saveDocument(path: string): Promise<string> {
    const { json } = await this.engine.request<{ json: string }>("save_document", { path });
    this.toolbar.documentPath = path;
    this.toolbar.unsavedChanges = false;
    this.emitChange();
    return json;
  }

  async loadDocument(path: string, allowMeshMismatch = false): Promise<number> {
    const { annotation_count } = await this.engine.request<{ annotation_count: number }>(
      "load_document",
      { path, allow_mesh_mismatch: allowMeshMismatch },
    );
    this.toolbar.documentPath = path;
    this.toolbar.unsavedChanges = false;
    await this.refreshAnnotations();
    return annotation_count;
  }

  async stats(): Promise<SessionStats> {
    return this.engine.request<SessionStats>("get_stats");
  }

  /** Replayable record of everything selection-affecting this session sent. */
  traceJson(): GestureTrace {
    return { version: 1, entries: this.traceEntries };
  }

  // -- highlighting -----------------------------------------------------------

  /**
   * Annotations paint their faces in creation order (later records win on
   * overlap), the selected record re-paints on top of that, and the current
   * selection paints last in the preselected colour.
   */
  private rebuildHighlights(): void {
    const map = new Map<number, Rgb>();
    for (const rec of this.properties.annotations) {
      for (const f of rec.faces) map.set(f, rec.color);
    }
    if (this.properties.selectedId) {
      const rec = this.properties.annotations.find((a) => a.id === this.properties.selectedId);
      if (rec) for (const f of rec.faces) map.set(f, rec.color);
    }
    for (const f of this.currentSelection) map.set(f, this.tools.color);
    this.highlightMap = map;
  }
}

/** Sign-consistency of consecutive cross products. */
export function isConvex(points: [number, number][]): boolean {
  const n = points.length;
  if (n < 4) return true;
  let sign = 0;
  for (let i = 0; i < n; i++) {
    const [ax, ay] = points[i];
    const [bx, by] = points[(i + 1) % n];
    const [cx, cy] = points[(i + 2) % n];
    const cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (cross !== 0) {
      const s = Math.sign(cross);
      if (sign === 0) sign = s;
      else if (s !== sign) return false;
    }
  }
  return true;
}
