/**
 * Browser shell: wires the four information frames, the canvas and pointer
 * events to the view model. Connects to the engine through a websocket
 * bridge in front of `annotate serve --socket` (see README).
 */

import { EngineClient } from "./engineClient.js";
import { decodeMeshBlob, MeshView, OrbitState } from "./render.js";
import { WebSocketTransport } from "./stdioTransport.js";
import { AnnotatorViewModel, type Tool } from "./viewModel.js";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const engine = new EngineClient(
  new WebSocketTransport((window as any).ENGINE_WS_URL ?? "ws://127.0.0.1:9100"),
);
const vm = new AnnotatorViewModel(engine);

const canvas = $<HTMLCanvasElement>("viewport");
const view = new MeshView(canvas, (fps) => vm.setFps(fps));
let orbit: OrbitState | null = null;

// -- frame rendering ---------------------------------------------------------

function renderCorner(): void {
  $("fps").textContent = String(vm.corner.fps);
  $("model-info").textContent = `${vm.corner.vertexCount} vertices, ${vm.corner.polygonCount} polygons`;
  $("selected-count").textContent = `${vm.corner.selectedCount} polygons selected`;
  $("region-name").textContent = vm.corner.selectedRegionName ?? "—";
  const mp = vm.corner.mousePos;
  $("mouse-pos").textContent = mp ? `${mp.x.toFixed(0)}, ${mp.y.toFixed(0)}` : "—";
}

function renderProperties(): void {
  const list = $("annotation-list");
  list.innerHTML = "";
  for (const rec of vm.properties.annotations) {
    const row = document.createElement("li");
    row.className = rec.id === vm.properties.selectedId ? "selected" : "";

    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = `rgb(${rec.color.join(",")})`;

    const label = document.createElement("input");
    label.value = rec.text;
    label.title = `${rec.faces.length} polygons`;
    label.addEventListener("change", () => void vm.editAnnotationText(rec.id, label.value));

    const del = document.createElement("button");
    del.textContent = "✕";
    del.addEventListener("click", () =>
      void vm.deleteAnnotation(rec.id, () => window.confirm(`Delete annotation "${rec.text || rec.id}"?`)),
    );

    row.append(swatch, label, del);
    row.addEventListener("click", (ev) => {
      if (ev.target === label || ev.target === del) return;
      vm.selectAnnotation(rec.id);
    });
    list.append(row);
  }
}

function renderNotices(): void {
  const host = $("notices");
  host.innerHTML = "";
  for (const notice of vm.notices.slice(-3)) {
    const div = document.createElement("div");
    div.className = `notice ${notice.kind}`;
    div.textContent = notice.text;
    host.append(div);
  }
}

vm.onChange(() => {
  renderCorner();
  renderProperties();
  renderNotices();
  view.applyHighlights(vm.highlightMap);
  $("disconnect-banner").style.display = vm.toolbar.engineConnected ? "none" : "block";
  for (const el of document.querySelectorAll<HTMLButtonElement>(".needs-engine")) {
    el.disabled = !vm.toolbar.engineConnected;
  }
});

// -- toolbar ---------------------------------------------------------------

$("open-mesh").addEventListener("click", async () => {
  const path = window.prompt("OBJ path on the engine host:");
  if (!path) return;
  const info = await vm.loadMesh(path);
  const decoded = decodeMeshBlob(info);
  view.setMesh(decoded, info.texture_path);
  // frame the model from its positions
  let lo = [Infinity, Infinity, Infinity];
  let hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < decoded.positions.length; i += 3) {
    for (let k = 0; k < 3; k++) {
      lo[k] = Math.min(lo[k], decoded.positions[i + k]);
      hi[k] = Math.max(hi[k], decoded.positions[i + k]);
    }
  }
  const center: [number, number, number] = [
    (lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2,
  ];
  const radius = Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) / 2 || 1;
  orbit = new OrbitState(center, radius, [canvas.width, canvas.height]);
  await pushCamera();
});

$("save-doc").addEventListener("click", async () => {
  const path = window.prompt("Save document as:", vm.toolbar.documentPath ?? "out.anno.json");
  if (path) await vm.saveDocument(path);
});

$("load-doc").addEventListener("click", async () => {
  const path = window.prompt("Load document:");
  if (!path) return;
  if (vm.toolbar.unsavedChanges && !window.confirm("Discard unsaved changes?")) return;
  await vm.loadDocument(path);
});

$("help").addEventListener("click", () => {
  vm.notices.push({
    kind: "info",
    text: "navigate: drag orbits, shift-drag pans, wheel zooms · brush: drag to paint · lasso: click corners, double-click closes · Esc cancels",
  });
  renderNotices();
});

// -- tools frame ---------------------------------------------------------------

for (const tool of ["navigate", "brush", "lasso"] as Tool[]) {
  $(`tool-${tool}`).addEventListener("click", () => vm.setTool(tool));
}
$<HTMLInputElement>("brush-width").addEventListener("input", (ev) =>
  vm.setBrushWidth(Number((ev.target as HTMLInputElement).value)),
);
$<HTMLInputElement>("color").addEventListener("input", (ev) => {
  const hex = (ev.target as HTMLInputElement).value;
  vm.setColor([
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ]);
});
$("commit").addEventListener("click", async () => {
  const text = $<HTMLInputElement>("annotation-text").value;
  await vm.commitAnnotation(text);
  $<HTMLInputElement>("annotation-text").value = "";
});

// -- pointer handling ---------------------------------------------------------
// engine pixel-center space: css pixel (x, y) has its center at (x - 0.5, y - 0.5)

function gesturePoint(ev: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [ev.clientX - rect.left - 0.5, ev.clientY - rect.top - 0.5];
}

async function pushCamera(): Promise<void> {
  if (!orbit) return;
  const pose = orbit.pose();
  view.applyCamera(pose);
  await vm.setCamera(pose);
}

let navDrag: { x: number; y: number } | null = null;

canvas.addEventListener("pointerdown", (ev) => {
  const [x, y] = gesturePoint(ev);
  if (vm.tools.activeTool === "navigate") {
    navDrag = { x: ev.clientX, y: ev.clientY };
  } else if (vm.tools.activeTool === "brush") {
    vm.pointerDown(x, y);
  } else {
    vm.lassoClick(x, y);
  }
});

canvas.addEventListener("pointermove", (ev) => {
  const [x, y] = gesturePoint(ev);
  vm.pointerMove(x, y);
  renderCorner();
  if (navDrag && orbit) {
    const dx = ev.clientX - navDrag.x;
    const dy = ev.clientY - navDrag.y;
    navDrag = { x: ev.clientX, y: ev.clientY };
    if (ev.shiftKey) orbit.pan(dx, dy);
    else orbit.rotate(dx, dy);
    void pushCamera();
  }
});

canvas.addEventListener("pointerup", (ev) => {
  navDrag = null;
  if (vm.tools.activeTool === "brush") void vm.pointerUp(ev.ctrlKey);
});

canvas.addEventListener("dblclick", (ev) => {
  if (vm.tools.activeTool === "lasso") void vm.lassoComplete(ev.ctrlKey);
});

canvas.addEventListener("wheel", (ev) => {
  if (!orbit) return;
  ev.preventDefault();
  orbit.zoom(ev.deltaY);
  void pushCamera();
});

window.addEventListener("keydown", (ev) => {
  if (ev.key === "Escape") vm.cancelGesture();
});

document.addEventListener("texture-load-failed", (ev) => {
  vm.notices.push({
    kind: "warning",
    text: `texture failed to load (${(ev as CustomEvent).detail}) — rendering untextured`,
  });
  renderNotices();
});

// -- render loop ---------------------------------------------------------------

function frame(now: number): void {
  view.renderFrame(now);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
