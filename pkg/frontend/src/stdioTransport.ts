import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";

import { LineSplitter, type Transport } from "./engineClient.js";

export interface StdioOptions {
  command?: string;
  args?: string[];
  env?: Record<string, string>;
  cwd?: string;
}

/**
 * Runs the engine as a child process speaking JSON lines on stdio
 * (`annotate serve --pipe`). Node-only; browsers use a websocket bridge.
 */
export class StdioTransport implements Transport {
  private child: ChildProcessWithoutNullStreams;
  private lineCb: ((line: string) => void) | null = null;
  private closeCb: (() => void) | null = null;

  constructor(options: StdioOptions = {}) {
    const command = options.command ?? "python3";
    const args = options.args ?? ["-m", "meshroi", "serve", "--pipe"];
    this.child = spawn(command, args, {
      env: { ...process.env, ...options.env },
      cwd: options.cwd,
      stdio: ["pipe", "pipe", "pipe"],
    });
    const splitter = new LineSplitter((line) => this.lineCb?.(line));
    this.child.stdout.setEncoding("utf-8");
    this.child.stdout.on("data", (chunk: string) => splitter.push(chunk));
    this.child.on("close", () => this.closeCb?.());
  }

  send(line: string): void {
    this.child.stdin.write(line + "\n");
  }

  onLine(cb: (line: string) => void): void {
    this.lineCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.child.stdin.end();
  }

  /** Collected stderr is handy when the engine fails to start. */
  captureStderr(): () => string {
    let out = "";
    this.child.stderr.setEncoding("utf-8");
    this.child.stderr.on("data", (chunk: string) => {
      out += chunk;
    });
    return () => out;
  }
}

/** Browser-side transport; expects a websocket<->tcp bridge in front of
 * `annotate serve --socket`. */
export class WebSocketTransport implements Transport {
  private ws: WebSocket;
  private lineCb: ((line: string) => void) | null = null;
  private closeCb: (() => void) | null = null;
  private queue: string[] = [];

  constructor(url: string) {
    this.ws = new WebSocket(url);
    const splitter = new LineSplitter((line) => this.lineCb?.(line));
    this.ws.onmessage = (ev) => splitter.push(String(ev.data));
    this.ws.onclose = () => this.closeCb?.();
    this.ws.onopen = () => {
      for (const line of this.queue) this.ws.send(line + "\n");
      this.queue = [];
    };
  }

  send(line: string): void {
    if (this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(line + "\n");
    } else {
      this.queue.push(line);
    }
  }

  onLine(cb: (line: string) => void): void {
    this.lineCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.ws.close();
  }
}
