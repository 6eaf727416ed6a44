/** Browser bootstrap: wires the app state machine to the DOM. */

import { TeleopApp } from "./app.js";
import { drawFrame, formatHud, hudModel } from "./renderer.js";
import { rasterizeOverlay } from "./overlay.js";
import type { Mode } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const overlayCanvas = el<HTMLCanvasElement>("overlay");
const hud = el<HTMLDivElement>("hud");
const status = el<HTMLDivElement>("status");
const tally = el<HTMLSpanElement>("tally");
const opacity = el<HTMLInputElement>("overlay-opacity");

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const ws = new WebSocket(wsUrl);
const app = new TeleopApp({ send: (raw) => ws.send(raw) });

ws.onmessage = (event) => {
  app.receive(String(event.data));
  syncControls();
};
ws.onclose = () => {
  status.textContent = "disconnected";
};

el<HTMLButtonElement>("start").onclick = () => {
  app.startEpisode({
    variant: el<HTMLSelectElement>("variant").value,
    mode: el<HTMLSelectElement>("mode").value as Mode,
    seed: Number(el<HTMLInputElement>("seed").value) || 0,
    paced: true,
  });
};
el<HTMLButtonElement>("label-pos").onclick = () => app.label(1);
el<HTMLButtonElement>("label-neg").onclick = () => app.label(-1);
el<HTMLButtonElement>("label-discard").onclick = () => app.label("discard");
el<HTMLButtonElement>("overlay-fetch").onclick = () => app.requestOverlay();
el<HTMLInputElement>("overlay-toggle").onchange = () => app.toggleOverlay();

window.addEventListener("keydown", (event) => {
  if (["ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight", " "].includes(event.key)) {
    event.preventDefault();
    app.handleKey(event.key);
  }
});

function syncControls(): void {
  const ended = app.phase === "ended";
  el<HTMLButtonElement>("label-pos").disabled = !ended;
  el<HTMLButtonElement>("label-neg").disabled = !ended;
  el<HTMLButtonElement>("label-discard").disabled = !ended;
  el<HTMLButtonElement>("start").disabled = app.phase === "running";
  tally.textContent = app.tallyText();
  if (app.lastError) status.textContent = `error: ${app.lastError}`;
  else if (app.overlayNotice) status.textContent = app.overlayNotice;
  else status.textContent = app.phase;
}

let overlayDirty = true;
el<HTMLButtonElement>("overlay-fetch").addEventListener("click", () => {
  overlayDirty = true;
});
opacity.oninput = () => {
  overlayDirty = true;
};

function renderOverlay(): void {
  const ctx = overlayCanvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
  if (!app.overlay || !app.overlayEnabled) return;
  const image = rasterizeOverlay(
    app.overlay,
    overlayCanvas.width,
    overlayCanvas.height,
    Number(opacity.value),
  );
  ctx.putImageData(
    new ImageData(image.data, image.width, image.height),
    0,
    0,
  );
}

function frame(): void {
  const ctx = canvas.getContext("2d");
  if (ctx && app.lastState) {
    drawFrame(ctx, { width: canvas.width, height: canvas.height }, app.lastState);
    hud.textContent = formatHud(hudModel(app.lastState));
  }
  if (overlayDirty || app.overlayEnabled !== lastOverlayEnabled) {
    renderOverlay();
    overlayDirty = false;
    lastOverlayEnabled = app.overlayEnabled;
  }
  requestAnimationFrame(frame);
}

let lastOverlayEnabled = app.overlayEnabled;
requestAnimationFrame(frame);
