// Event-flow controller: one SSE subscription feeding the UI, in either
// delivery mode. Push frames carry the whole state; notify frames carry a
// sequence number and trigger a pull. Dropped streams reconnect with
// exponential backoff, and the fresh stream's initial frame re-establishes
// sequence continuity. DOM-free; the stream and fetch are injected.
export class LiveFeed {
    deps;
    handle = null;
    backoff;
    stopped = true;
    mode;
    generation = 0; // invalidates events from superseded streams
    constructor(deps, mode = "push") {
        this.deps = deps;
        this.mode = mode;
        this.backoff = deps.initialBackoffMs ?? 1000;
    }
    get currentMode() {
        return this.mode;
    }
    start() {
        this.stopped = false;
        this.open();
    }
    stop() {
        this.stopped = true;
        this.handle?.close();
        this.handle = null;
    }
    /** Switching delivery modes reopens the stream; the new initial frame
     * brings the consumer back in sync. */
    setMode(mode) {
        if (mode === this.mode)
            return;
        this.mode = mode;
        if (this.stopped)
            return;
        this.handle?.close();
        this.handle = null;
        this.open();
    }
    open() {
        const generation = ++this.generation;
        this.deps.onConnection("connecting");
        this.handle = this.deps.openStream(this.mode, {
            onOpen: () => {
                if (generation !== this.generation)
                    return;
                this.backoff = this.deps.initialBackoffMs ?? 1000;
                this.deps.onConnection("open");
            },
            onContext: (context) => {
                if (generation === this.generation)
                    this.deps.onContext(context);
            },
            onAvailable: () => {
                if (generation === this.generation)
                    void this.pull();
            },
            onError: () => this.dropped(generation),
        });
    }
    async pull() {
        try {
            this.deps.onContext(await this.deps.fetchContext());
        }
        catch {
            // the stream error path handles reconnects; a lost pull is retried
            // implicitly by the next available frame
        }
    }
    dropped(generation) {
        if (this.stopped || generation !== this.generation)
            return;
        this.generation++; // a second error from the same stream is now stale
        this.handle?.close();
        this.handle = null;
        this.deps.onConnection("dropped");
        const delay = this.backoff;
        this.backoff = Math.min(this.backoff * 2, this.deps.maxBackoffMs ?? 30_000);
        const schedule = this.deps.schedule ?? ((cb, ms) => setTimeout(cb, ms));
        schedule(() => {
            if (!this.stopped)
                this.open();
        }, delay);
    }
}
//# sourceMappingURL=live.js.map