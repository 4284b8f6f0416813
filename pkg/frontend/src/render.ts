import * as THREE from "three";

import type { CameraPose, MeshInfo, Rgb } from "./protocol.js";

const BASE_COLOR: Rgb = [200, 200, 200];

export interface DecodedMesh {
  positions: Float32Array;
  indices: Uint32Array;
  faceOf: Uint32Array;
  uvs: Float32Array | null;
}

/** Unpack the engine's little-endian geometry blob. */
export function decodeMeshBlob(info: MeshInfo): DecodedMesh {
  const raw = Uint8Array.from(atob(info.blob), (c) => c.charCodeAt(0));
  const v = info.blob_layout.vertex_count;
  const t = info.blob_layout.triangle_count;
  let off = 0;
  const positions = new Float32Array(raw.buffer, off, v * 3);
  off += v * 3 * 4;
  const indices = new Uint32Array(raw.buffer.slice(off, off + t * 3 * 4));
  off += t * 3 * 4;
  const faceOf = new Uint32Array(raw.buffer.slice(off, off + t * 4));
  off += t * 4;
  let uvs: Float32Array | null = null;
  if (info.blob_layout.has_uv) {
    uvs = new Float32Array(raw.buffer.slice(off, off + t * 3 * 2 * 4));
  }
  return { positions: positions.slice(), indices, faceOf, uvs };
}

/**
 * Renders the annotated mesh. Geometry is expanded to unindexed triangles so
 * each face can carry a flat overlay colour; the engine stays the only
 * source of which faces are highlighted.
 */
export class MeshView {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene: THREE.Scene;
  readonly camera: THREE.PerspectiveCamera;
  private geometry: THREE.BufferGeometry | null = null;
  private faceOf: Uint32Array | null = null;
  private colors: Float32Array | null = null;
  private fpsWindow: number[] = [];
  private onFps: (fps: number) => void;

  constructor(canvas: HTMLCanvasElement, onFps: (fps: number) => void) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x202228);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 1000);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.75));
    const key = new THREE.DirectionalLight(0xffffff, 1.0);
    key.position.set(1, 2, 3);
    this.scene.add(key);
    this.onFps = onFps;
  }

  setMesh(decoded: DecodedMesh, texturePath: string | null): void {
    if (this.geometry) {
      this.scene.remove(this.scene.getObjectByName("model")!);
      this.geometry.dispose();
    }
    const triCount = decoded.indices.length / 3;
    const pos = new Float32Array(triCount * 9);
    const uv = decoded.uvs ? new Float32Array(triCount * 6) : null;
    for (let i = 0; i < decoded.indices.length; i++) {
      const vi = decoded.indices[i];
      pos[i * 3] = decoded.positions[vi * 3];
      pos[i * 3 + 1] = decoded.positions[vi * 3 + 1];
      pos[i * 3 + 2] = decoded.positions[vi * 3 + 2];
    }
    if (uv && decoded.uvs) uv.set(decoded.uvs);

    this.colors = new Float32Array(triCount * 9);
    this.faceOf = decoded.faceOf;
    this.geometry = new THREE.BufferGeometry();
    this.geometry.setAttribute("position", new THREE.BufferAttribute(pos, 3));
    this.geometry.setAttribute("color", new THREE.BufferAttribute(this.colors, 3));
    if (uv) this.geometry.setAttribute("uv", new THREE.BufferAttribute(uv, 2));
    this.geometry.computeVertexNormals();

    const material = new THREE.MeshLambertMaterial({ vertexColors: true });
    if (texturePath) {
      new THREE.TextureLoader().load(
        texturePath,
        (tex) => {
          material.map = tex;
          material.needsUpdate = true;
        },
        undefined,
        () => {
          // keep rendering untextured; the shell shows the notice
          document.dispatchEvent(new CustomEvent("texture-load-failed", { detail: texturePath }));
        },
      );
    }
    const model = new THREE.Mesh(this.geometry, material);
    model.name = "model";
    this.scene.add(model);
    this.applyHighlights(new Map());
  }

  /** Per-face flat tint; unhighlighted faces get the base colour. */
  applyHighlights(map: Map<number, Rgb>): void {
    if (!this.colors || !this.faceOf || !this.geometry) return;
    const n = this.faceOf.length;
    for (let t = 0; t < n; t++) {
      const rgb = map.get(this.faceOf[t]) ?? BASE_COLOR;
      for (let corner = 0; corner < 3; corner++) {
        const base = (t * 3 + corner) * 3;
        this.colors[base] = rgb[0] / 255;
        this.colors[base + 1] = rgb[1] / 255;
        this.colors[base + 2] = rgb[2] / 255;
      }
    }
    (this.geometry.getAttribute("color") as THREE.BufferAttribute).needsUpdate = true;
  }

  applyCamera(pose: CameraPose): void {
    this.camera.position.set(...pose.position);
    this.camera.up.set(...pose.up);
    this.camera.lookAt(...pose.target);
    this.camera.fov = pose.vfov_deg;
    this.camera.near = pose.near;
    this.camera.aspect = pose.viewport[0] / pose.viewport[1];
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(pose.viewport[0], pose.viewport[1], false);
  }

  renderFrame(now: number): void {
    this.renderer.render(this.scene, this.camera);
    this.fpsWindow.push(now);
    while (this.fpsWindow.length && this.fpsWindow[0] < now - 1000) this.fpsWindow.shift();
    this.onFps(this.fpsWindow.length);
  }
}

/** Minimal orbit/pan/zoom state; emits a full camera pose after every change. */
export class OrbitState {
  target: [number, number, number];
  distance: number;
  yaw = 0.4;
  pitch = 0.35;
  vfovDeg = 45;
  viewport: [number, number];

  constructor(center: [number, number, number], radius: number, viewport: [number, number]) {
    this.target = center;
    this.distance = radius * 2.5;
    this.viewport = viewport;
  }

  rotate(dxPx: number, dyPx: number): void {
    this.yaw -= dxPx * 0.008;
    this.pitch = Math.max(-1.45, Math.min(1.45, this.pitch + dyPx * 0.008));
  }

  pan(dxPx: number, dyPx: number): void {
    const scale = (this.distance * Math.tan((this.vfovDeg * Math.PI) / 360)) / this.viewport[1];
    const [rx, ry, rz] = this.rightVector();
    const [ux, uy, uz] = this.upVector();
    this.target = [
      this.target[0] - (rx * dxPx - ux * dyPx) * 2 * scale,
      this.target[1] - (ry * dxPx - uy * dyPx) * 2 * scale,
      this.target[2] - (rz * dxPx - uz * dyPx) * 2 * scale,
    ];
  }

  zoom(wheelDelta: number): void {
    this.distance *= Math.exp(wheelDelta * 0.001);
  }

  pose(): CameraPose {
    return {
      position: this.position(),
      target: this.target,
      up: [0, 1, 0],
      vfov_deg: this.vfovDeg,
      viewport: this.viewport,
      near: Math.max(1e-4, this.distance / 1000),
    };
  }

  private position(): [number, number, number] {
    const cp = Math.cos(this.pitch);
    return [
      this.target[0] + this.distance * cp * Math.sin(this.yaw),
      this.target[1] + this.distance * Math.sin(this.pitch),
      this.target[2] + this.distance * cp * Math.cos(this.yaw),
    ];
  }

  private rightVector(): [number, number, number] {
    return [Math.cos(this.yaw), 0, -Math.sin(this.yaw)];
  }

  private upVector(): [number, number, number] {
    const sp = Math.sin(this.pitch);
    return [-sp * Math.sin(this.yaw), Math.cos(this.pitch), -sp * Math.cos(this.yaw)];
  }
}
