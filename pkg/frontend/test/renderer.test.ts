import { describe, expect, it } from "vitest";

import {
  Draw2d,
  drawFrame,
  formatHud,
  hudModel,
  metersToPixels,
  robotTriangle,
  worldToCanvas,
} from "../src/renderer.js";
import { PROTOCOL_VERSION, StateMessage } from "../src/protocol.js";

class RecordingContext implements Draw2d {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 1;
  globalAlpha = 1;
  calls: [string, ...unknown[]][] = [];
  beginPath() { this.calls.push(["beginPath"]); }
  moveTo(x: number, y: number) { this.calls.push(["moveTo", x, y]); }
  lineTo(x: number, y: number) { this.calls.push(["lineTo", x, y]); }
  arc(x: number, y: number, r: number, a0: number, a1: number) {
    this.calls.push(["arc", x, y, r, a0, a1]);
  }
  closePath() { this.calls.push(["closePath"]); }
  fill() { this.calls.push(["fill"]); }
  stroke() { this.calls.push(["stroke"]); }
  fillRect(x: number, y: number, w: number, h: number) {
    this.calls.push(["fillRect", x, y, w, h]);
  }
  clearRect(x: number, y: number, w: number, h: number) {
    this.calls.push(["clearRect", x, y, w, h]);
  }
  count(name: string): number {
    return this.calls.filter(([n]) => n === name).length;
  }
}

const view = { width: 400, height: 400 };

function makeState(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    v: PROTOCOL_VERSION,
    session: "s0001",
    tick: 5,
    t: 0.5,
    mode: "teleop",
    robot: [2, 2, Math.PI / 2],
    humans: [
      [1, 1, 0.3, 0, 0.25],
      [3, 3, 0, 0, 0.25],
    ],
    goal: [2, 3.5],
    ranges: [1, 1, 1, 1],
    clearance: 0.9,
    command: [0.3, -0.1],
    ...overrides,
  };
}

describe("coordinate transform", () => {
  it("maps world corners to canvas corners with y flipped", () => {
    expect(worldToCanvas(view, 0, 0)).toEqual([0, 400]);
    expect(worldToCanvas(view, 4, 4)).toEqual([400, 0]);
    expect(worldToCanvas(view, 2, 2)).toEqual([200, 200]);
  });

  it("scales meters to pixels linearly", () => {
    expect(metersToPixels(view, 1)).toBe(100);
    expect(metersToPixels(view, 0.25)).toBe(25);
  });
});

describe("robotTriangle", () => {
  it("puts the nose along the heading", () => {
    const [nose] = robotTriangle(2, 2, 0);
    expect(nose[0]).toBeGreaterThan(2);
    expect(nose[1]).toBeCloseTo(2, 12);
  });
});

describe("drawFrame", () => {
  it("clears and draws every primitive group", () => {
    const ctx = new RecordingContext();
    drawFrame(ctx, view, makeState());
    expect(ctx.count("clearRect")).toBe(1);
    // two humans -> two arcs; one has a velocity arrow
    expect(ctx.count("arc")).toBe(2);
    // robot triangle + humans fill
    expect(ctx.count("fill")).toBe(3);
    // rays + border + goal + one velocity arrow
    expect(ctx.count("stroke")).toBe(4 + 1 + 1 + 1);
  });

  it("stays under the primitive budget for the largest frames", () => {
    const ctx = new RecordingContext();
    drawFrame(
      ctx,
      view,
      makeState({ ranges: Array(72).fill(2.0) }),
    );
    expect(ctx.count("stroke") + ctx.count("fill")).toBeLessThanOrEqual(100);
  });

  it("handles replay frames without goal or ranges", () => {
    const ctx = new RecordingContext();
    drawFrame(ctx, view, makeState({ goal: null, ranges: null, mode: "replay" }));
    expect(ctx.count("clearRect")).toBe(1);
    expect(ctx.count("fill")).toBe(3);
  });
});

describe("HUD", () => {
  it("shows tick, mode, command, and clearance", () => {
    const text = formatHud(hudModel(makeState()));
    expect(text).toContain("tick 5");
    expect(text).toContain("mode teleop");
    expect(text).toContain("v 0.30 m/s");
    expect(text).toContain("clearance 0.90 m");
  });

  it("adds uncertainty bars in student-drive mode", () => {
    const state = makeState({
      mode: "student-drive",
      uncertainty: { epistemic: [0.001, 0.002], aleatoric: [0.01, 0.02] },
    });
    const text = formatHud(hudModel(state));
    expect(text).toContain("epis");
    expect(text).toContain("alea");
  });
});
