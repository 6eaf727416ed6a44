/**
 * Wire protocol shared with the simulation service.
 *
 * Every message carries the protocol version and a session id; the client
 * rejects frames from other protocol versions instead of guessing.
 */
export const PROTOCOL_VERSION = 1;
/** Command envelope; mirrors the teacher's candidate set limits. */
export const V_MIN = 0.0;
export const V_MAX = 0.8;
export const OMEGA_LIMIT = 0.4 * Math.PI;
export function clampCommand(v, omega) {
    return [
        Math.min(V_MAX, Math.max(V_MIN, v)),
        Math.min(OMEGA_LIMIT, Math.max(-OMEGA_LIMIT, omega)),
    ];
}
export function commandMessage(v, omega) {
    const [cv, comega] = clampCommand(v, omega);
    return { type: "command", v: PROTOCOL_VERSION, v_lin: cv, omega: comega };
}
export function startEpisodeMessage(opts = {}) {
    return { type: "start_episode", v: PROTOCOL_VERSION, ...opts };
}
export function labelMessage(value) {
    return { type: "label", v: PROTOCOL_VERSION, value };
}
export function overlayRequestMessage(gamma = 1.0) {
    return { type: "overlay_request", v: PROTOCOL_VERSION, gamma };
}
/**
 * Parse one incoming frame. Returns null for messages the client should
 * ignore (wrong version, unknown type, malformed JSON) so a bad frame can
 * never corrupt client state.
 */
export function parseServerMessage(raw) {
    let data;
    try {
        data = JSON.parse(raw);
    }
    catch {
        return null;
    }
    if (typeof data !== "object" || data === null)
        return null;
    const msg = data;
    if (msg.v !== PROTOCOL_VERSION)
        return null;
    switch (msg.type) {
        case "state":
        case "episode_started":
        case "episode_end":
        case "label_ack":
        case "overlay":
        case "error":
            return msg;
        default:
            return null;
    }
}
