/**
 * Immediate-mode top-down scene renderer.
 *
 * Draws at most ~100 primitives per frame against a minimal subset of the
 * 2D canvas API, declared here as an interface so the drawing math is
 * testable without a DOM.
 */

import type { StateMessage } from "./protocol.js";

export const WORLD_MIN = 0.0;
export const WORLD_MAX = 4.0;
export const ROBOT_RADIUS = 0.2;

/** The slice of CanvasRenderingContext2D the renderer uses. */
export interface Draw2d {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export interface Viewport {
  width: number;
  height: number;
}

/** World (meters, y up) to canvas pixels (y down). */
export function worldToCanvas(
  view: Viewport,
  x: number,
  y: number,
): [number, number] {
  const span = WORLD_MAX - WORLD_MIN;
  const px = ((x - WORLD_MIN) / span) * view.width;
  const py = view.height - ((y - WORLD_MIN) / span) * view.height;
  return [px, py];
}

export function metersToPixels(view: Viewport, meters: number): number {
  return (meters / (WORLD_MAX - WORLD_MIN)) * view.width;
}

export interface Walls {
  segments: [number, number, number, number][];
}

// Elevator scenario walls are not streamed (they are config, not state);
// the client draws the world border and relies on the lidar fan for
// interior structure.
export function drawFrame(
  ctx: Draw2d,
  view: Viewport,
  state: StateMessage,
): void {
  ctx.clearRect(0, 0, view.width, view.height);
  ctx.globalAlpha = 1.0;

  // border
  ctx.strokeStyle = "#444";
  ctx.lineWidth = 2;
  ctx.beginPath();
  const [bx0, by0] = worldToCanvas(view, WORLD_MIN, WORLD_MIN);
  const [bx1, by1] = worldToCanvas(view, WORLD_MAX, WORLD_MAX);
  ctx.moveTo(bx0, by0);
  ctx.lineTo(bx1, by0);
  ctx.lineTo(bx1, by1);
  ctx.lineTo(bx0, by1);
  ctx.closePath();
  ctx.stroke();

  const [rx, ry, rtheta] = state.robot;

  // lidar fan
  if (state.ranges) {
    ctx.strokeStyle = "rgba(120, 180, 120, 0.35)";
    ctx.lineWidth = 1;
    const n = state.ranges.length;
    for (let i = 0; i < n; i++) {
      const angle = rtheta + (2 * Math.PI * i) / n;
      const r = state.ranges[i];
      const [ax, ay] = worldToCanvas(view, rx, ry);
      const [ex, ey] = worldToCanvas(
        view,
        rx + r * Math.cos(angle),
        ry + r * Math.sin(angle),
      );
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(ex, ey);
      ctx.stroke();
    }
  }

  // goal marker
  if (state.goal) {
    const [gx, gy] = worldToCanvas(view, state.goal[0], state.goal[1]);
    ctx.strokeStyle = "#2a7";
    ctx.lineWidth = 2;
    const s = metersToPixels(view, 0.12);
    ctx.beginPath();
    ctx.moveTo(gx - s, gy);
    ctx.lineTo(gx + s, gy);
    ctx.moveTo(gx, gy - s);
    ctx.lineTo(gx, gy + s);
    ctx.stroke();
  }

  // humans with velocity arrows
  for (const [hx, hy, hvx, hvy, radius] of state.humans) {
    const [cx, cy] = worldToCanvas(view, hx, hy);
    ctx.fillStyle = "rgba(200, 120, 60, 0.8)";
    ctx.beginPath();
    ctx.arc(cx, cy, metersToPixels(view, radius), 0, 2 * Math.PI);
    ctx.fill();
    const speed = Math.hypot(hvx, hvy);
    if (speed > 1e-3) {
      const [tx, ty] = worldToCanvas(view, hx + hvx, hy + hvy);
      ctx.strokeStyle = "#a52";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(cx, cy);
      ctx.lineTo(tx, ty);
      ctx.stroke();
    }
  }

  // robot as a pose triangle
  const nose = robotTriangle(rx, ry, rtheta);
  ctx.fillStyle = "#36c";
  ctx.beginPath();
  const pts = nose.map(([wx, wy]) => worldToCanvas(view, wx, wy));
  ctx.moveTo(pts[0][0], pts[0][1]);
  ctx.lineTo(pts[1][0], pts[1][1]);
  ctx.lineTo(pts[2][0], pts[2][1]);
  ctx.closePath();
  ctx.fill();
}

/** Triangle vertices in world coordinates: nose at the heading. */
export function robotTriangle(
  x: number,
  y: number,
  theta: number,
): [number, number][] {
  const r = ROBOT_RADIUS;
  const back = 2.4; // rad offset of the rear corners from the heading
  return [
    [x + r * Math.cos(theta), y + r * Math.sin(theta)],
    [x + r * Math.cos(theta + back), y + r * Math.sin(theta + back)],
    [x + r * Math.cos(theta - back), y + r * Math.sin(theta - back)],
  ];
}

export interface HudModel {
  tick: number;
  clearance: number;
  v: number;
  omega: number;
  mode: string;
  uncertainty?: { epistemic: number[]; aleatoric: number[] };
}

export function hudModel(state: StateMessage): HudModel {
  return {
    tick: state.tick,
    clearance: state.clearance,
    v: state.command[0],
    omega: state.command[1],
    mode: state.mode,
    uncertainty: state.uncertainty,
  };
}

export function formatHud(model: HudModel): string {
  const parts = [
    `tick ${model.tick}`,
    `mode ${model.mode}`,
    `v ${model.v.toFixed(2)} m/s`,
    `w ${model.omega.toFixed(2)} rad/s`,
    `clearance ${model.clearance.toFixed(2)} m`,
  ];
  if (model.uncertainty) {
    const e = model.uncertainty.epistemic;
    const a = model.uncertainty.aleatoric;
    parts.push(`epis ${e.map((v) => v.toExponential(1)).join("/")}`);
    parts.push(`alea ${a.map((v) => v.toExponential(1)).join("/")}`);
  }
  return parts.join("  |  ");
}
