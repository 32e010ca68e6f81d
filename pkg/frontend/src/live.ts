// Event-flow controller: one SSE subscription feeding the UI, in either
// delivery mode. Push frames carry the whole state; notify frames carry a
// sequence number and trigger a pull. Dropped streams reconnect with
// exponential backoff, and the fresh stream's initial frame re-establishes
// sequence continuity. DOM-free; the stream and fetch are injected.

import type { Connection, ContextJson, EventMode } from "./state.js";

export interface StreamHandle {
  close(): void;
}

export interface StreamHandlers {
  onOpen(): void;
  onContext(context: ContextJson): void;
  onAvailable(seq: number): void;
  onError(): void;
}

export type StreamFactory = (mode: EventMode, handlers: StreamHandlers) => StreamHandle;

export interface LiveFeedDeps {
  openStream: StreamFactory;
  fetchContext: () => Promise<ContextJson>;
  onContext: (context: ContextJson) => void;
  onConnection: (connection: Connection) => void;
  schedule?: (cb: () => void, ms: number) => unknown;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
}

export class LiveFeed {
  private handle: StreamHandle | null = null;
  private backoff: number;
  private stopped = true;
  private mode: EventMode;
  private generation = 0; // invalidates events from superseded streams

  constructor(private deps: LiveFeedDeps, mode: EventMode = "push") {
    this.mode = mode;
    this.backoff = deps.initialBackoffMs ?? 1000;
  }

  get currentMode(): EventMode {
    return this.mode;
  }

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    this.handle?.close();
    this.handle = null;
  }

  /** Switching delivery modes reopens the stream; the new initial frame
   * brings the consumer back in sync. */
  setMode(mode: EventMode): void {
    if (mode === this.mode) return;
    this.mode = mode;
    if (this.stopped) return;
    this.handle?.close();
    this.handle = null;
    this.open();
  }

  private open(): void {
    const generation = ++this.generation;
    this.deps.onConnection("connecting");
    this.handle = this.deps.openStream(this.mode, {
      onOpen: () => {
        if (generation !== this.generation) return;
        this.backoff = this.deps.initialBackoffMs ?? 1000;
        this.deps.onConnection("open");
      },
      onContext: (context) => {
        if (generation === this.generation) this.deps.onContext(context);
      },
      onAvailable: () => {
        if (generation === this.generation) void this.pull();
      },
      onError: () => this.dropped(generation),
    });
  }

  private async pull(): Promise<void> {
    try {
      this.deps.onContext(await this.deps.fetchContext());
    } catch {
      // the stream error path handles reconnects; a lost pull is retried
      // implicitly by the next available frame
    }
  }

  private dropped(generation: number): void {
    if (this.stopped || generation !== this.generation) return;
    this.generation++; // a second error from the same stream is now stale
    this.handle?.close();
    this.handle = null;
    this.deps.onConnection("dropped");
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.deps.maxBackoffMs ?? 30_000);
    const schedule = this.deps.schedule ?? ((cb: () => void, ms: number) => setTimeout(cb, ms));
    schedule(() => {
      if (!this.stopped) this.open();
    }, delay);
  }
}
