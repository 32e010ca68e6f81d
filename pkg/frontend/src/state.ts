// UI state and its reducer. Pure module: no DOM, no network.

export interface NetworkJson {
  SSID: string;
  MAC: string;
  RSSI: number;
  kind: string;
}

export interface ContextJson {
  seq: number;
  updated_at: number;
  movement: string;
  noise_db: number | null;
  noise: string;
  stable_surface: boolean | null;
  rotating: boolean | null;
  lux: number | null;
  light: string;
  zones: Record<string, boolean>;
  networks: NetworkJson[];
}

export type Connection = "connecting" | "open" | "dropped";
export type EventMode = "push" | "notify";

export interface Point {
  x: number;
  y: number;
}

export interface UiState {
  device: Point; // optimistic marker position, meters
  acknowledged: Point; // last position the gateway accepted
  context: ContextJson | null;
  renderedSeq: number; // never decreases
  connection: Connection;
  mode: EventMode;
  banner: string | null;
}

export function initialState(device: Point = { x: 0, y: 0 }): UiState {
  return {
    device: { ...device },
    acknowledged: { ...device },
    context: null,
    renderedSeq: -1,
    connection: "connecting",
    mode: "push",
    banner: null,
  };
}

/** Apply a context snapshot; stale frames (seq lower than one already
 * rendered) are dropped so the UI can never move backwards. */
export function applyContext(state: UiState, context: ContextJson): UiState {
  if (context.seq < state.renderedSeq) {
    return state;
  }
  return { ...state, context, renderedSeq: context.seq };
}

export function setConnection(state: UiState, connection: Connection): UiState {
  if (state.connection === connection) return state;
  return { ...state, connection, banner: connection === "dropped" ? "connection lost, retrying" : null };
}

export function setMode(state: UiState, mode: EventMode): UiState {
  return { ...state, mode };
}

export function moveOptimistic(state: UiState, to: Point): UiState {
  return { ...state, device: { ...to } };
}

export function acknowledgeMove(state: UiState, at: Point): UiState {
  return { ...state, acknowledged: { ...at }, banner: null };
}

/** A failed position post reverts the marker to the acknowledged spot. */
export function revertMove(state: UiState, message: string): UiState {
  return { ...state, device: { ...state.acknowledged }, banner: message };
}

export function trueZones(context: ContextJson | null): string[] {
  if (!context) return [];
  return Object.keys(context.zones)
    .filter((id) => context.zones[id])
    .sort();
}
