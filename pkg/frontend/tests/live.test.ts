import assert from "node:assert/strict";
import { test } from "node:test";

import { LiveFeed, StreamHandlers } from "../src/live.js";
import { ContextJson, EventMode, UiState, applyContext, initialState, setConnection } from "../src/state.js";

function ctx(seq: number, movement = "UNKNOWN"): ContextJson {
  return {
    seq,
    updated_at: seq,
    movement,
    noise_db: null,
    noise: "UNKNOWN",
    stable_surface: null,
    rotating: null,
    lux: null,
    light: "UNKNOWN",
    zones: { BIG_MALL: seq >= 2 },
    networks: [],
  };
}

/** A scripted gateway: keeps a published-state history and drives any number
 * of fake SSE streams the way the real hub would. */
class FakeGateway {
  history: ContextJson[] = [ctx(0)];
  streams: { mode: EventMode; handlers: StreamHandlers; closed: boolean }[] = [];
  failNextOpens = 0;

  get current(): ContextJson {
    return this.history[this.history.length - 1];
  }

  open(mode: EventMode, handlers: StreamHandlers) {
    const stream = { mode, handlers, closed: false };
    this.streams.push(stream);
    if (this.failNextOpens > 0) {
      this.failNextOpens--;
      queueMicrotask(() => handlers.onError());
    } else {
      handlers.onOpen();
      this.deliver(stream, this.current);
    }
    return { close: () => (stream.closed = true) };
  }

  publish(context: ContextJson): void {
    this.history.push(context);
    for (const stream of this.streams) {
      if (!stream.closed) this.deliver(stream, context);
    }
  }

  private deliver(stream: { mode: EventMode; handlers: StreamHandlers }, context: ContextJson): void {
    if (stream.mode === "push") stream.handlers.onContext(context);
    else stream.handlers.onAvailable(context.seq);
  }

  async fetchContext(): Promise<ContextJson> {
    return this.current;
  }
}

function harness(mode: EventMode, gateway: FakeGateway) {
  let state: UiState = initialState();
  const timers: { cb: () => void; ms: number }[] = [];
  const feed = new LiveFeed(
    {
      openStream: (m, handlers) => gateway.open(m, handlers),
      fetchContext: () => gateway.fetchContext(),
      onContext: (context) => {
        state = applyContext(state, context);
      },
      onConnection: (connection) => {
        state = setConnection(state, connection);
      },
      schedule: (cb, ms) => timers.push({ cb, ms }),
      initialBackoffMs: 100,
    },
    mode,
  );
  return {
    feed,
    timers,
    get state() {
      return state;
    },
  };
}

async function settle(): Promise<void> {
  // lets queued promise callbacks (notify pulls) run
  for (let i = 0; i < 5; i++) await Promise.resolve();
}

test("push mode renders every published state in order", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  assert.equal(h.state.renderedSeq, 0);
  gateway.publish(ctx(1, "WALKING"));
  gateway.publish(ctx(2, "VEHICLE"));
  await settle();
  assert.equal(h.state.renderedSeq, 2);
  assert.equal(h.state.context?.movement, "VEHICLE");
  assert.equal(h.state.connection, "open");
});

test("notify mode pulls and converges to the same final state as push", async () => {
  const pushGateway = new FakeGateway();
  const notifyGateway = new FakeGateway();
  const pushH = harness("push", pushGateway);
  const notifyH = harness("notify", notifyGateway);
  pushH.feed.start();
  notifyH.feed.start();
  await settle();
  for (const gateway of [pushGateway, notifyGateway]) {
    gateway.publish(ctx(1, "WALKING"));
    gateway.publish(ctx(2, "VEHICLE"));
    gateway.publish(ctx(3, "STATIONARY"));
  }
  await settle();
  assert.deepEqual(notifyH.state.context, pushH.state.context);
  assert.equal(notifyH.state.renderedSeq, 3);
});

test("stream drop reconnects with backoff and re-syncs from the initial frame", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  gateway.publish(ctx(1));
  await settle();
  // the gateway dies and publishes happen while we are away
  gateway.streams[0].handlers.onError();
  assert.equal(h.state.connection, "dropped");
  gateway.publish(ctx(2));
  gateway.publish(ctx(3));
  assert.equal(h.state.renderedSeq, 1);
  // backoff timer fires -> new stream -> initial frame carries seq 3
  assert.equal(h.timers.length, 1);
  assert.equal(h.timers[0].ms, 100);
  h.timers[0].cb();
  await settle();
  assert.equal(h.state.connection, "open");
  assert.equal(h.state.renderedSeq, 3);
});

test("backoff grows while reopens keep failing, then resets on success", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  gateway.failNextOpens = 2;
  gateway.streams[0].handlers.onError(); // drop; retry in 100
  h.timers[0].cb(); // reopen fails async
  await settle();
  h.timers[1].cb(); // reopen fails again
  await settle();
  assert.deepEqual(
    h.timers.map((t) => t.ms),
    [100, 200, 400],
  );
  h.timers[2].cb(); // this one succeeds; onOpen resets the backoff
  await settle();
  assert.equal(h.state.connection, "open");
  gateway.streams[3].handlers.onError();
  assert.equal(h.timers[3].ms, 100);
});

test("mode switch reopens the stream and converges", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  gateway.publish(ctx(1, "WALKING"));
  await settle();
  h.feed.setMode("notify");
  await settle();
  assert.ok(gateway.streams[0].closed);
  assert.equal(gateway.streams[1].mode, "notify");
  gateway.publish(ctx(2, "VEHICLE"));
  await settle();
  assert.equal(h.state.renderedSeq, 2);
  assert.equal(h.state.context?.movement, "VEHICLE");
});

test("duplicate errors from one stream schedule a single reconnect", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  gateway.streams[0].handlers.onError();
  gateway.streams[0].handlers.onError(); // EventSource can misfire twice
  assert.equal(h.timers.length, 1);
  h.timers[0].cb();
  await settle();
  assert.equal(gateway.streams.length, 2); // exactly one replacement stream
});

test("events from a superseded stream are ignored", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  gateway.publish(ctx(1));
  await settle();
  const stale = gateway.streams[0].handlers;
  h.feed.setMode("notify"); // reopens; stream 0 is now superseded
  await settle();
  stale.onContext(ctx(9, "VEHICLE"));
  await settle();
  assert.equal(h.state.renderedSeq, 1); // stale frame did not render
});

test("stop closes the stream and stops reconnecting", async () => {
  const gateway = new FakeGateway();
  const h = harness("push", gateway);
  h.feed.start();
  await settle();
  h.feed.stop();
  assert.ok(gateway.streams[0].closed);
  gateway.streams[0].handlers.onError();
  assert.equal(h.timers.length, 0); // no reconnect scheduled after stop
});
