import assert from "node:assert/strict";
import { test } from "node:test";
import { canvasToWorld, fitViewport, rssiRadius, worldToCanvas } from "../src/geometry.js";
const ENV = {
    nodes: [
        { mac: "aa:bb:cc:dd:ee:01", ssid: "mall", kind: "WIFI", pos: [12, 10], tx_power_dbm: -40, path_loss_exponent: 2.0 },
        { mac: "aa:bb:cc:dd:ee:02", ssid: "cafe", kind: "WIFI", pos: [38, 22], tx_power_dbm: -45, path_loss_exponent: 2.2 },
    ],
    noise_sigma_db: 0,
    detect_floor_dbm: -95,
    device: { x: 70, y: 10 },
};
test("round trip world -> canvas -> world", () => {
    const vp = fitViewport(ENV, 760, 520);
    for (const p of [{ x: 12, y: 10 }, { x: 70, y: 10 }, { x: 0, y: 0 }]) {
        const back = canvasToWorld(vp, worldToCanvas(vp, p));
        assert.ok(Math.abs(back.x - p.x) < 1e-9);
        assert.ok(Math.abs(back.y - p.y) < 1e-9);
    }
});
test("everything of interest lands inside the canvas", () => {
    const vp = fitViewport(ENV, 760, 520);
    const points = [...ENV.nodes.map((n) => ({ x: n.pos[0], y: n.pos[1] })), ENV.device];
    for (const p of points) {
        const c = worldToCanvas(vp, p);
        assert.ok(c.x >= 0 && c.x <= 760, `x ${c.x}`);
        assert.ok(c.y >= 0 && c.y <= 520, `y ${c.y}`);
    }
});
test("empty environment still produces a usable viewport", () => {
    const vp = fitViewport({ nodes: [], noise_sigma_db: 0, detect_floor_dbm: -95 }, 400, 400);
    assert.ok(Number.isFinite(vp.scale) && vp.scale > 0);
});
test("rssi radius matches the log-distance closed form", () => {
    // tx -40, n 2: rssi -60 at 10 m, -70 at ~31.62 m
    assert.ok(Math.abs(rssiRadius(-40, 2, -60) - 10) < 1e-9);
    assert.ok(Math.abs(rssiRadius(-40, 2, -70) - Math.pow(10, 1.5)) < 1e-9);
    // weaker threshold -> larger radius
    assert.ok(rssiRadius(-40, 2, -75) > rssiRadius(-40, 2, -70));
});
