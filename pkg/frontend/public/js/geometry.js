// World (meters) to canvas (pixels) mapping and radio geometry helpers.
/** Fit the environment (plus margin) into a canvas, preserving aspect. */
export function fitViewport(env, canvasW, canvasH, marginM = 12) {
    const xs = env.nodes.map((n) => n.pos[0]);
    const ys = env.nodes.map((n) => n.pos[1]);
    if (env.device) {
        xs.push(env.device.x);
        ys.push(env.device.y);
    }
    if (xs.length === 0) {
        xs.push(0);
        ys.push(0);
    }
    const minX = Math.min(...xs) - marginM;
    const maxX = Math.max(...xs) + marginM;
    const minY = Math.min(...ys) - marginM;
    const maxY = Math.max(...ys) + marginM;
    const scale = Math.min(canvasW / (maxX - minX), canvasH / (maxY - minY));
    // center the world box in the canvas
    const padX = (canvasW / scale - (maxX - minX)) / 2;
    const padY = (canvasH / scale - (maxY - minY)) / 2;
    return { originX: minX - padX, originY: minY - padY, scale, canvasW, canvasH };
}
export function worldToCanvas(vp, p) {
    return { x: (p.x - vp.originX) * vp.scale, y: (p.y - vp.originY) * vp.scale };
}
export function canvasToWorld(vp, p) {
    return { x: p.x / vp.scale + vp.originX, y: p.y / vp.scale + vp.originY };
}
/** Distance at which the log-distance model yields the given rssi. */
export function rssiRadius(txPowerDbm, pathLossExponent, rssiDbm) {
    return Math.pow(10, (txPowerDbm - rssiDbm) / (10 * pathLossExponent));
}
//# sourceMappingURL=geometry.js.map