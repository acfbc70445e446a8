// Browser entry: wires the socket, the keyboard, and two canvases. All
// layout rules live in render.ts; this file only paints what it is told.

import { SessionClient } from "./client.js";
import { InputLoop } from "./input.js";
import {
  DISCONNECTED_BANNER,
  screenView,
  toastText,
} from "./render.js";
import { ServerMessage, StateMessage } from "./protocol.js";

const TILE_COLORS: Record<number, string> = {
  0: "#e8e4d8", // free
  1: "#4a4a4a", // wall
  2: "#c9a227", // step
  3: "#4aa3df", // pond
  4: "#15803d", // cave
  5: "#1f2430", // unknown
};

const CELL = 14;
const PATCH_CELL = 34;

const mapCanvas = document.getElementById("map") as HTMLCanvasElement;
const patchCanvas = document.getElementById("patch") as HTMLCanvasElement;
const bannerEl = document.getElementById("banner")!;
const tickEl = document.getElementById("tick")!;
const gaugeEl = document.getElementById("gauge-needle") as HTMLElement;
const toastsEl = document.getElementById("toasts")!;

let worldMap: number[][] | null = null;

function drawMap(state: StateMessage): void {
  if (state.map) {
    worldMap = state.map;
  }
  if (!worldMap) return;
  const ctx = mapCanvas.getContext("2d")!;
  mapCanvas.width = worldMap[0].length * CELL;
  mapCanvas.height = worldMap.length * CELL;
  worldMap.forEach((row, y) =>
    row.forEach((tile, x) => {
      ctx.fillStyle = TILE_COLORS[tile] ?? "#f0f";
      ctx.fillRect(x * CELL, y * CELL, CELL - 1, CELL - 1);
    }),
  );
  const { marker } = screenView(state);
  const cx = (marker.x + 0.5) * CELL;
  const cy = (marker.y + 0.5) * CELL;
  ctx.strokeStyle = "#c0392b";
  ctx.fillStyle = "#c0392b";
  ctx.beginPath();
  ctx.arc(cx, cy, CELL * 0.3, 0, 2 * Math.PI);
  ctx.fill();
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + marker.dx * CELL, cy + marker.dy * CELL);
  ctx.stroke();
}

function drawPatch(state: StateMessage): void {
  const { patch } = screenView(state);
  const ctx = patchCanvas.getContext("2d")!;
  patchCanvas.width = patch[0].length * PATCH_CELL;
  patchCanvas.height = patch.length * PATCH_CELL;
  patch.forEach((row, y) =>
    row.forEach((cell, x) => {
      ctx.fillStyle = cell.shaded
        ? TILE_COLORS[5]
        : (TILE_COLORS[cell.tile] ?? "#f0f");
      ctx.fillRect(x * PATCH_CELL, y * PATCH_CELL, PATCH_CELL - 1, PATCH_CELL - 1);
    }),
  );
}

function toast(text: string): void {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = text;
  toastsEl.prepend(el);
  setTimeout(() => el.remove(), 8000);
}

const input = new InputLoop();

function onMessage(msg: ServerMessage): void {
  if (msg.type === "state") {
    input.onState();
    const screen = screenView(msg);
    bannerEl.textContent = screen.banner;
    bannerEl.className = msg.ctl === "E" ? "banner expert" : "banner";
    tickEl.textContent = screen.tick;
    gaugeEl.style.top = `${50 - screen.pitch * 50}%`;
    drawMap(msg);
    drawPatch(msg);
  } else if (msg.type === "train_result") {
    toast(toastText(msg));
  } else if (msg.type === "episode_end") {
    toast(msg.success ? "episode ended: cave found" : "episode ended");
    worldMap = null;
  } else {
    toast(`server: ${msg.msg}`);
  }
}

const client = new SessionClient(
  `ws://${location.host}/`,
  {
    onMessage,
    onClose: () => {
      input.onDisconnect();
      bannerEl.textContent = DISCONNECTED_BANNER;
      bannerEl.className = "banner down";
    },
  },
);

document.addEventListener("keydown", (event) => {
  if (event.repeat) return; // the rate lock handles cadence; ignore autorepeat
  const msg = input.keydown(event.key);
  if (msg) {
    client.send(msg);
    event.preventDefault();
  }
});
