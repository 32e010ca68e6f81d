import assert from "node:assert/strict";
import { test } from "node:test";
import { applyContext, acknowledgeMove, initialState, moveOptimistic, revertMove, setConnection, trueZones, } from "../src/state.js";
function ctx(seq, extra = {}) {
    return {
        seq,
        updated_at: seq * 1000,
        movement: "UNKNOWN",
        noise_db: null,
        noise: "UNKNOWN",
        stable_surface: null,
        rotating: null,
        lux: null,
        light: "UNKNOWN",
        zones: {},
        networks: [],
        ...extra,
    };
}
test("rendered seq never decreases", () => {
    let state = initialState();
    state = applyContext(state, ctx(3));
    assert.equal(state.renderedSeq, 3);
    const stale = applyContext(state, ctx(2));
    assert.equal(stale, state); // dropped, same object
    state = applyContext(state, ctx(4));
    assert.equal(state.renderedSeq, 4);
});
test("equal seq re-renders (notify pull after initial frame)", () => {
    let state = initialState();
    state = applyContext(state, ctx(5));
    const refreshed = applyContext(state, ctx(5, { movement: "WALKING" }));
    assert.equal(refreshed.context?.movement, "WALKING");
});
test("random frame order renders the latest state", () => {
    const frames = [1, 4, 2, 7, 5, 3, 6].map((n) => ctx(n));
    let state = initialState();
    const seen = [];
    for (const frame of frames) {
        const next = applyContext(state, frame);
        if (next !== state)
            seen.push(next.renderedSeq);
        state = next;
    }
    assert.deepEqual(seen, [...seen].sort((a, b) => a - b));
    assert.equal(state.renderedSeq, 7);
});
test("optimistic move and revert", () => {
    let state = initialState({ x: 1, y: 1 });
    state = moveOptimistic(state, { x: 9, y: 9 });
    assert.deepEqual(state.device, { x: 9, y: 9 });
    assert.deepEqual(state.acknowledged, { x: 1, y: 1 });
    state = revertMove(state, "position update failed");
    assert.deepEqual(state.device, { x: 1, y: 1 });
    assert.equal(state.banner, "position update failed");
});
test("acknowledged move clears the banner", () => {
    let state = initialState();
    state = revertMove(state, "oops");
    state = moveOptimistic(state, { x: 2, y: 3 });
    state = acknowledgeMove(state, { x: 2, y: 3 });
    assert.deepEqual(state.acknowledged, { x: 2, y: 3 });
    assert.equal(state.banner, null);
});
test("connection transitions set and clear the banner", () => {
    let state = initialState();
    state = setConnection(state, "open");
    assert.equal(state.banner, null);
    state = setConnection(state, "dropped");
    assert.match(state.banner ?? "", /retrying/);
    state = setConnection(state, "open");
    assert.equal(state.banner, null);
});
test("trueZones sorts and filters", () => {
    const state = applyContext(initialState(), ctx(1, { zones: { B: true, A: true, C: false } }));
    assert.deepEqual(trueZones(state.context), ["A", "B"]);
    assert.deepEqual(trueZones(null), []);
});
