// Floor-plan console: drag the virtual device among beacons, tune ambient
// light/noise, and watch the live context and the adapted demo page respond.
import { GatewayClient } from "./api.js";
import { canvasToWorld, fitViewport, rssiRadius, worldToCanvas, } from "./geometry.js";
import { LiveFeed } from "./live.js";
import { acknowledgeMove, applyContext, initialState, moveOptimistic, revertMove, setConnection, setMode, } from "./state.js";
import { rateLimit } from "./ratelimit.js";
const client = new GatewayClient("");
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing #${id}`);
    return node;
}
const canvas = el("floor");
const ctx2d = canvas.getContext("2d");
const statusBadge = el("status");
const banner = el("banner");
const seqBadge = el("seq");
const badges = {
    movement: el("badge-movement"),
    noise: el("badge-noise"),
    light: el("badge-light"),
    stable: el("badge-stable"),
    rotating: el("badge-rotating"),
};
const zonesList = el("zones");
const networksBody = el("networks");
const luxSlider = el("lux");
const luxValue = el("lux-value");
const rmsSlider = el("rms");
const rmsValue = el("rms-value");
const demoPane = el("demo");
const modeButtons = Array.from(document.querySelectorAll("[data-mode]"));
let state = initialState();
let env = { nodes: [], noise_sigma_db: 0, detect_floor_dbm: -95 };
let predicates = [];
let viewport = fitViewport(env, canvas.width, canvas.height);
let demoTemplate = "";
let adaptedForSeq = -2;
function update(next) {
    const contextChanged = next.context !== state.context;
    state = next;
    render();
    if (contextChanged)
        void refreshDemo();
}
// --- rendering ---------------------------------------------------------------
const ZONE_COLORS = ["#2f81f7", "#d29922", "#3fb950", "#db61a2"];
function render() {
    statusBadge.textContent = state.connection;
    statusBadge.className = `pill ${state.connection}`;
    banner.textContent = state.banner ?? "";
    banner.hidden = !state.banner;
    const context = state.context;
    seqBadge.textContent = context ? `seq ${context.seq}` : "seq –";
    badges.movement.textContent = context?.movement ?? "–";
    badges.noise.textContent = context
        ? context.noise_db === null
            ? context.noise
            : `${context.noise} (${context.noise_db.toFixed(1)} dBFS)`
        : "–";
    badges.light.textContent = context
        ? context.lux === null
            ? context.light
            : `${context.light} (${Math.round(context.lux)} lx)`
        : "–";
    badges.stable.textContent = fmtBool(context?.stable_surface);
    badges.rotating.textContent = fmtBool(context?.rotating);
    renderZones(context);
    renderNetworks(context);
    drawFloor();
    for (const button of modeButtons) {
        button.classList.toggle("active", button.dataset.mode === state.mode);
    }
}
function fmtBool(value) {
    return value === null || value === undefined ? "unknown" : value ? "yes" : "no";
}
function renderZones(context) {
    zonesList.textContent = "";
    if (!context)
        return;
    const ids = Object.keys(context.zones).sort();
    for (const id of ids) {
        const chip = document.createElement("span");
        chip.className = `chip ${context.zones[id] ? "in" : "out"}`;
        chip.textContent = `${id}: ${context.zones[id] ? "inside" : "outside"}`;
        zonesList.appendChild(chip);
    }
    if (ids.length === 0) {
        zonesList.textContent = "no predicates registered";
    }
}
function renderNetworks(context) {
    networksBody.textContent = "";
    for (const net of context?.networks ?? []) {
        const row = document.createElement("tr");
        for (const cell of [net.SSID || "(hidden)", net.MAC, `${net.RSSI} dBm`, net.kind]) {
            const td = document.createElement("td");
            td.textContent = cell;
            row.appendChild(td);
        }
        networksBody.appendChild(row);
    }
}
function drawFloor() {
    const { width, height } = canvas;
    ctx2d.clearRect(0, 0, width, height);
    ctx2d.fillStyle = "#0d1117";
    ctx2d.fillRect(0, 0, width, height);
    drawGrid();
    for (const [index, node] of env.nodes.entries()) {
        drawBeacon(node, index);
    }
    drawDevice();
}
function drawGrid() {
    ctx2d.strokeStyle = "#1d2530";
    ctx2d.lineWidth = 1;
    const step = 10 * viewport.scale; // 10 m grid
    const offset = worldToCanvas(viewport, { x: 0, y: 0 });
    for (let x = offset.x % step; x < canvas.width; x += step) {
        ctx2d.beginPath();
        ctx2d.moveTo(x, 0);
        ctx2d.lineTo(x, canvas.height);
        ctx2d.stroke();
    }
    for (let y = offset.y % step; y < canvas.height; y += step) {
        ctx2d.beginPath();
        ctx2d.moveTo(0, y);
        ctx2d.lineTo(canvas.width, y);
        ctx2d.stroke();
    }
}
function zoneColor(index) {
    return ZONE_COLORS[index % ZONE_COLORS.length];
}
function drawBeacon(node, index) {
    const at = worldToCanvas(viewport, { x: node.pos[0], y: node.pos[1] });
    const color = zoneColor(index);
    // enter-threshold rings for predicates that reference this node
    for (const predicate of predicates) {
        for (const condition of predicate.conditions) {
            if (!conditionMatchesNode(condition, node))
                continue;
            const radius = rssiRadius(node.tx_power_dbm, node.path_loss_exponent, condition.minRssi);
            ctx2d.beginPath();
            ctx2d.setLineDash([6, 4]);
            ctx2d.strokeStyle = color;
            ctx2d.lineWidth = 1.5;
            ctx2d.arc(at.x, at.y, radius * viewport.scale, 0, Math.PI * 2);
            ctx2d.stroke();
            ctx2d.setLineDash([]);
            ctx2d.fillStyle = color;
            ctx2d.font = "12px system-ui";
            ctx2d.fillText(predicate.id, at.x + radius * viewport.scale * 0.72, at.y - radius * viewport.scale * 0.72);
        }
    }
    ctx2d.beginPath();
    ctx2d.fillStyle = color;
    ctx2d.arc(at.x, at.y, 6, 0, Math.PI * 2);
    ctx2d.fill();
    ctx2d.fillStyle = "#c9d1d9";
    ctx2d.font = "12px system-ui";
    ctx2d.fillText(node.ssid || node.mac, at.x + 9, at.y + 4);
}
function conditionMatchesNode(condition, node) {
    if (condition.matchBy === "MAC") {
        return condition.pattern.toLowerCase() === node.mac.toLowerCase();
    }
    if (condition.pattern.endsWith("*")) {
        return node.ssid.startsWith(condition.pattern.slice(0, -1));
    }
    return node.ssid === condition.pattern;
}
function drawDevice() {
    const at = worldToCanvas(viewport, state.device);
    ctx2d.beginPath();
    ctx2d.fillStyle = "#e6edf3";
    ctx2d.arc(at.x, at.y, 8, 0, Math.PI * 2);
    ctx2d.fill();
    ctx2d.beginPath();
    ctx2d.strokeStyle = "#2f81f7";
    ctx2d.lineWidth = 3;
    ctx2d.arc(at.x, at.y, 11, 0, Math.PI * 2);
    ctx2d.stroke();
}
// --- demo pane ---------------------------------------------------------------
async function refreshDemo() {
    const seq = state.context?.seq ?? -1;
    if (!demoTemplate || seq === adaptedForSeq)
        return;
    adaptedForSeq = seq;
    try {
        demoPane.srcdoc = await client.adapt(demoTemplate, "css");
    }
    catch {
        // leave the previous rendering in place
    }
}
// --- interactions ------------------------------------------------------------
const postPosition = rateLimit((target) => {
    client
        .postPosition(target)
        .then(() => update(acknowledgeMove(state, target)))
        .catch(() => update(revertMove(state, "position update failed")));
}, 100); // <= 10 posts per second
let dragging = false;
function pointerWorld(event) {
    const rect = canvas.getBoundingClientRect();
    return canvasToWorld(viewport, {
        x: ((event.clientX - rect.left) / rect.width) * canvas.width,
        y: ((event.clientY - rect.top) / rect.height) * canvas.height,
    });
}
canvas.addEventListener("pointerdown", (event) => {
    dragging = true;
    canvas.setPointerCapture(event.pointerId);
    const target = pointerWorld(event);
    update(moveOptimistic(state, target));
    postPosition(target);
});
canvas.addEventListener("pointermove", (event) => {
    if (!dragging)
        return;
    const target = pointerWorld(event);
    update(moveOptimistic(state, target));
    postPosition(target);
});
canvas.addEventListener("pointerup", () => {
    dragging = false;
    postPosition.flushPending();
});
luxSlider.addEventListener("input", () => {
    const lux = sliderToLux(Number(luxSlider.value));
    luxValue.textContent = `${Math.round(lux)} lx`;
    void client.postAmbient({ lux }).catch(() => update(revertMove(state, "ambient update failed")));
});
rmsSlider.addEventListener("input", () => {
    const rms = Number(rmsSlider.value) / 100;
    rmsValue.textContent = rms.toFixed(2);
    void client.postAmbient({ audio_rms: rms }).catch(() => update(revertMove(state, "ambient update failed")));
});
function sliderToLux(position) {
    // 0..100 slider to 0..10000 lx, log-ish so indoor ranges are reachable
    if (position <= 0)
        return 0;
    return Math.round(Math.pow(10, (position / 100) * 4));
}
for (const button of modeButtons) {
    button.addEventListener("click", () => {
        const mode = button.dataset.mode;
        update(setMode(state, mode));
        feed.setMode(mode);
    });
}
// --- boot ---------------------------------------------------------------------
const feed = new LiveFeed({
    openStream: (mode, handlers) => client.openEvents(mode, handlers),
    fetchContext: () => client.context(),
    onContext: (context) => update(applyContext(state, context)),
    onConnection: (connection) => update(setConnection(state, connection)),
});
async function boot() {
    try {
        env = await client.env();
        if (env.device) {
            state = initialState(env.device);
        }
    }
    catch {
        update(revertMove(state, "sim bridge not reachable (start the gateway with --sim)"));
    }
    try {
        predicates = await client.predicates();
    }
    catch {
        predicates = [];
    }
    viewport = fitViewport(env, canvas.width, canvas.height);
    try {
        demoTemplate = await (await fetch("demo.html")).text();
    }
    catch {
        demoTemplate = "";
    }
    render();
    feed.start();
}
void boot();
//# sourceMappingURL=main.js.map