// UI state and its reducer. Pure module: no DOM, no network.
export function initialState(device = { x: 0, y: 0 }) {
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
export function applyContext(state, context) {
    if (context.seq < state.renderedSeq) {
        return state;
    }
    return { ...state, context, renderedSeq: context.seq };
}
export function setConnection(state, connection) {
    if (state.connection === connection)
        return state;
    return { ...state, connection, banner: connection === "dropped" ? "connection lost, retrying" : null };
}
export function setMode(state, mode) {
    return { ...state, mode };
}
export function moveOptimistic(state, to) {
    return { ...state, device: { ...to } };
}
export function acknowledgeMove(state, at) {
    return { ...state, acknowledged: { ...at }, banner: null };
}
/** A failed position post reverts the marker to the acknowledged spot. */
export function revertMove(state, message) {
    return { ...state, device: { ...state.acknowledged }, banner: message };
}
export function trueZones(context) {
    if (!context)
        return [];
    return Object.keys(context.zones)
        .filter((id) => context.zones[id])
        .sort();
}
