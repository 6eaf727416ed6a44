/**
 * Keyboard teleoperation: incremental key-step control.
 *
 * Arrow presses step the latched command instead of acting as
 * velocity-while-held, which matches the service's latched-command protocol
 * and produces smoother 10 Hz demonstrations. Every accepted press yields a
 * new clamped command.
 */

import { clampCommand, OMEGA_LIMIT, V_MAX, V_MIN } from "./protocol.js";

export const V_STEP = 0.1;
export const OMEGA_STEP = 0.05 * Math.PI;

export interface TeleopState {
  v: number;
  omega: number;
}

export function initialTeleopState(): TeleopState {
  return { v: 0.0, omega: 0.0 };
}

/**
 * Apply one key press. Returns the new state and whether the command
 * changed (a command message is sent only on change).
 */
export function applyKey(
  state: TeleopState,
  key: string,
): { state: TeleopState; changed: boolean } {
  let { v, omega } = state;
  switch (key) {
    case "ArrowUp":
      v += V_STEP;
      break;
    case "ArrowDown":
      v -= V_STEP;
      break;
    // left arrow turns counter-clockwise (positive omega), matching the
    // top-down view with x right and y up
    case "ArrowLeft":
      omega += OMEGA_STEP;
      break;
    case "ArrowRight":
      omega -= OMEGA_STEP;
      break;
    case " ":
    case "Space":
      v = 0.0;
      omega = 0.0;
      break;
    default:
      return { state, changed: false };
  }
  // snap to the step grid so repeated presses cannot accumulate float
  // error and land just shy of the envelope limits
  v = Math.round(v / V_STEP) * V_STEP;
  omega = Math.round(omega / OMEGA_STEP) * OMEGA_STEP;
  [v, omega] = clampCommand(v, omega);
  const changed = v !== state.v || omega !== state.omega;
  return { state: { v, omega }, changed };
}

export function withinEnvelope(state: TeleopState): boolean {
  return (
    state.v >= V_MIN &&
    state.v <= V_MAX &&
    state.omega >= -OMEGA_LIMIT &&
    state.omega <= OMEGA_LIMIT
  );
}
