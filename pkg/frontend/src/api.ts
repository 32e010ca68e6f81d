// Thin client over the gateway's documented HTTP/SSE endpoints.

import type { EnvJson } from "./geometry.js";
import type { StreamHandle, StreamHandlers } from "./live.js";
import type { ContextJson, EventMode, Point } from "./state.js";

export interface PredicateConditionJson {
  matchBy: string;
  pattern: string;
  minRssi: number;
  kind?: string;
}

export interface PredicateJson {
  id: string;
  conditions: PredicateConditionJson[];
  mode: string;
  exitMarginDb: number;
  dwellScans: number;
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) throw new Error(`${url}: HTTP ${response.status}`);
  return (await response.json()) as T;
}

async function postJson(url: string, body: unknown): Promise<void> {
  const response = await fetch(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) throw new Error(`${url}: HTTP ${response.status}`);
}

export class GatewayClient {
  constructor(private base = "") {}

  env(): Promise<EnvJson> {
    return getJson(`${this.base}/api/v1/sim/env`);
  }

  context(): Promise<ContextJson> {
    return getJson(`${this.base}/api/v1/context`);
  }

  predicates(): Promise<PredicateJson[]> {
    return getJson(`${this.base}/api/v1/predicates`);
  }

  postPosition(p: Point): Promise<void> {
    return postJson(`${this.base}/api/v1/sim/position`, { x: p.x, y: p.y });
  }

  postAmbient(values: { lux?: number; audio_rms?: number }): Promise<void> {
    return postJson(`${this.base}/api/v1/sim/ambient`, values);
  }

  async adapt(html: string, mode: "css" | "prune" = "css"): Promise<string> {
    const response = await fetch(`${this.base}/api/v1/adapt?mode=${mode}`, {
      method: "POST",
      headers: { "Content-Type": "text/html" },
      body: html,
    });
    if (!response.ok) throw new Error(`adapt: HTTP ${response.status}`);
    return await response.text();
  }

  /** Open the SSE stream; the caller owns reconnect policy, so the native
   * EventSource auto-retry is disabled by closing on error. */
  openEvents(mode: EventMode, handlers: StreamHandlers): StreamHandle {
    const source = new EventSource(`${this.base}/api/v1/events?mode=${mode}`);
    source.onopen = () => handlers.onOpen();
    source.addEventListener("context", (event) => {
      handlers.onContext(JSON.parse((event as MessageEvent).data) as ContextJson);
    });
    source.addEventListener("available", (event) => {
      handlers.onAvailable((JSON.parse((event as MessageEvent).data) as { seq: number }).seq);
    });
    source.onerror = () => {
      source.close();
      handlers.onError();
    };
    return { close: () => source.close() };
  }
}
