// Thin client over the gateway's documented HTTP/SSE endpoints.
async function getJson(url) {
    const response = await fetch(url);
    if (!response.ok)
        throw new Error(`${url}: HTTP ${response.status}`);
    return (await response.json());
}
async function postJson(url, body) {
    const response = await fetch(url, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
    });
    if (!response.ok)
        throw new Error(`${url}: HTTP ${response.status}`);
}
export class GatewayClient {
    base;
    constructor(base = "") {
        this.base = base;
    }
    env() {
        return getJson(`${this.base}/api/v1/sim/env`);
    }
    context() {
        return getJson(`${this.base}/api/v1/context`);
    }
    predicates() {
        return getJson(`${this.base}/api/v1/predicates`);
    }
    postPosition(p) {
        return postJson(`${this.base}/api/v1/sim/position`, { x: p.x, y: p.y });
    }
    postAmbient(values) {
        return postJson(`${this.base}/api/v1/sim/ambient`, values);
    }
    async adapt(html, mode = "css") {
        const response = await fetch(`${this.base}/api/v1/adapt?mode=${mode}`, {
            method: "POST",
            headers: { "Content-Type": "text/html" },
            body: html,
        });
        if (!response.ok)
            throw new Error(`adapt: HTTP ${response.status}`);
        return await response.text();
    }
    /** Open the SSE stream; the caller owns reconnect policy, so the native
     * EventSource auto-retry is disabled by closing on error. */
    openEvents(mode, handlers) {
        const source = new EventSource(`${this.base}/api/v1/events?mode=${mode}`);
        source.onopen = () => handlers.onOpen();
        source.addEventListener("context", (event) => {
            handlers.onContext(JSON.parse(event.data));
        });
        source.addEventListener("available", (event) => {
            handlers.onAvailable(JSON.parse(event.data).seq);
        });
        source.onerror = () => {
            source.close();
            handlers.onError();
        };
        return { close: () => source.close() };
    }
}
