import assert from "node:assert/strict";
import { test } from "node:test";
import { rateLimit } from "../src/ratelimit.js";
function clockAndTimers() {
    let nowMs = 0;
    const timers = [];
    return {
        now: () => nowMs,
        schedule: (cb, ms) => timers.push({ at: nowMs + ms, cb }),
        advance(toMs) {
            nowMs = toMs;
            for (const timer of timers.splice(0)) {
                if (timer.at <= nowMs)
                    timer.cb();
                else
                    timers.push(timer);
            }
        },
    };
}
test("first call fires immediately", () => {
    const t = clockAndTimers();
    const calls = [];
    const limited = rateLimit((v) => calls.push(v), 100, t.now, t.schedule);
    limited(1);
    assert.deepEqual(calls, [1]);
});
test("burst coalesces to the trailing value", () => {
    const t = clockAndTimers();
    const calls = [];
    const limited = rateLimit((v) => calls.push(v), 100, t.now, t.schedule);
    limited(1);
    limited(2);
    limited(3);
    assert.deepEqual(calls, [1]);
    t.advance(100);
    assert.deepEqual(calls, [1, 3]); // latest args win
});
test("steady drag stays at or under one call per interval", () => {
    const t = clockAndTimers();
    const calls = [];
    const limited = rateLimit((v) => calls.push(v), 100, t.now, t.schedule);
    for (let ms = 0; ms <= 1000; ms += 10) {
        t.advance(ms);
        limited(ms);
    }
    t.advance(1200);
    assert.ok(calls.length <= 12, `expected <= 12 calls, got ${calls.length}`);
    assert.equal(calls[calls.length - 1], 1000); // final position delivered
});
test("flushPending delivers the trailing call early", () => {
    const t = clockAndTimers();
    const calls = [];
    const limited = rateLimit((v) => calls.push(v), 100, t.now, t.schedule);
    limited(1);
    limited(2);
    limited.flushPending();
    assert.deepEqual(calls, [1, 2]);
});
test("spaced calls all fire", () => {
    const t = clockAndTimers();
    const calls = [];
    const limited = rateLimit((v) => calls.push(v), 100, t.now, t.schedule);
    limited(1);
    t.advance(150);
    limited(2);
    t.advance(300);
    limited(3);
    assert.deepEqual(calls, [1, 2, 3]);
});
