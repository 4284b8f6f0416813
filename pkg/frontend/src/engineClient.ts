import type { EngineErrorShape } from "./protocol.js";

/** Byte/line transport the client rides on (stdio pipe, websocket bridge...). */
export interface Transport {
  send(line: string): void;
  onLine(cb: (line: string) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export class EngineError extends Error {
  readonly code: string;
  readonly detail: string | null;

  constructor(shape: EngineErrorShape) {
    super(shape.message);
    this.code = shape.code;
    this.detail = shape.detail ?? null;
  }
}

interface Pending {
  resolve: (value: any) => void;
  reject: (err: Error) => void;
}

/**
 * Request/response client over JSON lines. Requests carry incrementing ids;
 * replies resolve the matching promise. The engine processes messages in
 * order, so callers may simply await each call.
 */
export class EngineClient {
  private transport: Transport;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private closed = false;
  private closeListeners: (() => void)[] = [];

  constructor(transport: Transport) {
    this.transport = transport;
    transport.onLine((line) => this.handleLine(line));
    transport.onClose(() => this.handleClose());
  }

  request<T = any>(method: string, params: object = {}): Promise<T> {
    if (this.closed) {
      return Promise.reject(new EngineError({ code: "disconnected", message: "engine is gone" }));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ id, method, params });
    return new Promise<T>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.transport.send(line);
    });
  }

  onDisconnect(cb: () => void): void {
    this.closeListeners.push(cb);
  }

  close(): void {
    this.transport.close();
  }

  private handleLine(line: string): void {
    let msg: any;
    try {
      msg = JSON.parse(line);
    } catch {
      return; // stray non-protocol output; ignore
    }
    const entry = this.pending.get(msg.id);
    if (!entry) return;
    this.pending.delete(msg.id);
    if (msg.error) {
      entry.reject(new EngineError(msg.error));
    } else {
      entry.resolve(msg.result);
    }
  }

  private handleClose(): void {
    this.closed = true;
    for (const entry of this.pending.values()) {
      entry.reject(new EngineError({ code: "disconnected", message: "engine is gone" }));
    }
    this.pending.clear();
    for (const cb of this.closeListeners) cb();
  }
}

/** Splits an incoming byte stream into newline-terminated frames. */
export class LineSplitter {
  private buffer = "";

  constructor(private emit: (line: string) => void) {}

  push(chunk: string): void {
    this.buffer += chunk;
    for (;;) {
      const idx = this.buffer.indexOf("\n");
      if (idx < 0) break;
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (line) this.emit(line);
    }
  }
}
