/**
 * Client application state machine.
 *
 * Pure with respect to the transport: it consumes raw frames and emits
 * outgoing messages through a socket interface, so the whole loop is
 * testable without a browser. Rendering reads the latest state snapshot
 * (last-write-wins); a dropped frame never corrupts state.
 */
import { applyKey, initialTeleopState } from "./input.js";
import { GridParseError, parseRewardGrid } from "./overlay.js";
import { commandMessage, labelMessage, overlayRequestMessage, parseServerMessage, startEpisodeMessage, } from "./protocol.js";
export class TeleopApp {
    constructor(socket) {
        this.socket = socket;
        this.phase = "idle";
        this.session = null;
        this.teleop = initialTeleopState();
        this.lastState = null;
        this.lastResult = null;
        this.tallies = { positive: 0, negative: 0, discarded: 0 };
        this.overlay = null;
        this.overlayNotice = null;
        this.overlayEnabled = false;
        this.lastError = null;
        this.pendingLabel = null;
    }
    startEpisode(opts = {}) {
        if (this.phase === "running")
            return;
        this.teleop = initialTeleopState();
        this.lastState = null;
        this.lastResult = null;
        this.socket.send(JSON.stringify(startEpisodeMessage(opts)));
    }
    /** Keyboard handler; sends a clamped command only when it changes. */
    handleKey(key) {
        if (this.phase !== "running")
            return;
        const { state, changed } = applyKey(this.teleop, key);
        this.teleop = state;
        if (changed) {
            this.socket.send(JSON.stringify(commandMessage(state.v, state.omega)));
        }
    }
    label(value) {
        // labeling before episode end: control is disabled
        if (this.phase !== "ended")
            return false;
        this.pendingLabel = value;
        this.socket.send(JSON.stringify(labelMessage(value)));
        return true;
    }
    requestOverlay(gamma = 1.0) {
        this.socket.send(JSON.stringify(overlayRequestMessage(gamma)));
    }
    toggleOverlay() {
        this.overlayEnabled = !this.overlayEnabled;
    }
    /** Feed one raw websocket frame. */
    receive(raw) {
        const msg = parseServerMessage(raw);
        if (msg === null)
            return;
        switch (msg.type) {
            case "episode_started":
                this.phase = "running";
                this.session = msg.session;
                break;
            case "state":
                // last-write-wins snapshot for the render loop
                this.lastState = msg;
                break;
            case "episode_end":
                this.phase = "ended";
                this.lastResult = msg.result;
                break;
            case "label_ack": {
                const value = this.pendingLabel;
                this.pendingLabel = null;
                if (value === 1)
                    this.tallies.positive += 1;
                else if (value === -1)
                    this.tallies.negative += 1;
                else if (value === "discard")
                    this.tallies.discarded += 1;
                this.phase = "idle";
                this.session = null;
                break;
            }
            case "overlay":
                try {
                    this.overlay = parseRewardGrid(msg.grid);
                    this.overlayNotice = null;
                    this.overlayEnabled = true;
                }
                catch (err) {
                    if (!(err instanceof GridParseError))
                        throw err;
                    this.overlay = null;
                    this.overlayEnabled = false;
                    this.overlayNotice = `overlay disabled: ${err.message}`;
                }
                break;
            case "error":
                this.lastError = msg.message;
                break;
        }
    }
    tallyText() {
        return `${this.tallies.positive} / ${this.tallies.negative}`;
    }
}
