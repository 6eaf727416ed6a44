/**
 * Wire protocol shared with the simulation service.
 *
 * Every message carries the protocol version and a session id; the client
 * rejects frames from other protocol versions instead of guessing.
 */

export const PROTOCOL_VERSION = 1;

export type Mode = "teleop" | "teacher-drive" | "student-drive" | "replay";

export interface StateMessage {
  type: "state";
  v: number;
  session: string;
  tick: number;
  t: number;
  mode: Mode;
  robot: [number, number, number];
  humans: [number, number, number, number, number][];
  goal: [number, number] | null;
  ranges: number[] | null;
  clearance: number;
  command: [number, number];
  uncertainty?: { epistemic: number[]; aleatoric: number[] };
}

export interface EpisodeStartedMessage {
  type: "episode_started";
  v: number;
  session: string;
  variant: string;
  mode: Mode;
  seed: number;
}

export interface EpisodeEndMessage {
  type: "episode_end";
  v: number;
  session: string;
  result: { termination: string; success: boolean } & Record<string, unknown>;
}

export interface LabelAckMessage {
  type: "label_ack";
  v: number;
  session: string;
  path: string | null;
}

export interface OverlayMessage {
  type: "overlay";
  v: number;
  session: string | null;
  grid: string;
}

export interface ErrorMessage {
  type: "error";
  v: number;
  session: string | null;
  message: string;
}

export type ServerMessage =
  | StateMessage
  | EpisodeStartedMessage
  | EpisodeEndMessage
  | LabelAckMessage
  | OverlayMessage
  | ErrorMessage;

export interface StartEpisodeMessage {
  type: "start_episode";
  v: number;
  variant?: string;
  mode?: Mode;
  seed?: number;
  paced?: boolean;
  session?: string;
  record?: string;
}

export interface CommandMessage {
  type: "command";
  v: number;
  v_lin: number;
  omega: number;
}

export interface LabelMessage {
  type: "label";
  v: number;
  value: 1 | -1 | "discard";
}

export interface OverlayRequestMessage {
  type: "overlay_request";
  v: number;
  gamma?: number;
}

export type ClientMessage =
  | StartEpisodeMessage
  | CommandMessage
  | LabelMessage
  | OverlayRequestMessage;

/** Command envelope; mirrors the teacher's candidate set limits. */
export const V_MIN = 0.0;
export const V_MAX = 0.8;
export const OMEGA_LIMIT = 0.4 * Math.PI;

export function clampCommand(v: number, omega: number): [number, number] {
  return [
    Math.min(V_MAX, Math.max(V_MIN, v)),
    Math.min(OMEGA_LIMIT, Math.max(-OMEGA_LIMIT, omega)),
  ];
}

export function commandMessage(v: number, omega: number): CommandMessage {
  const [cv, comega] = clampCommand(v, omega);
  return { type: "command", v: PROTOCOL_VERSION, v_lin: cv, omega: comega };
}

export function startEpisodeMessage(
  opts: Omit<StartEpisodeMessage, "type" | "v"> = {},
): StartEpisodeMessage {
  return { type: "start_episode", v: PROTOCOL_VERSION, ...opts };
}

export function labelMessage(value: 1 | -1 | "discard"): LabelMessage {
  return { type: "label", v: PROTOCOL_VERSION, value };
}

export function overlayRequestMessage(gamma = 1.0): OverlayRequestMessage {
  return { type: "overlay_request", v: PROTOCOL_VERSION, gamma };
}

/**
 * Parse one incoming frame. Returns null for messages the client should
 * ignore (wrong version, unknown type, malformed JSON) so a bad frame can
 * never corrupt client state.
 */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  if (msg.v !== PROTOCOL_VERSION) return null;
  switch (msg.type) {
    case "state":
    case "episode_started":
    case "episode_end":
    case "label_ack":
    case "overlay":
    case "error":
      return msg as unknown as ServerMessage;
    default:
      return null;
  }
}
