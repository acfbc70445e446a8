// Pure view-model builders: state messages in, draw-ready data out. No DOM
// or canvas access here so every rule is unit-testable.

import { StateMessage, TrainResultMessage, TILES } from "./protocol.js";

export interface PatchCell {
  tile: number;
  // cells outside the agent's view are shaded so the human sees the
  // blindness the policy is acting under
  shaded: boolean;
}

export function patchView(patch: number[][]): PatchCell[][] {
  return patch.map((row) =>
    row.map((tile) => ({ tile, shaded: tile === TILES.UNKNOWN })),
  );
}

export function bannerText(ctl: "N" | "E"): string {
  return ctl === "E" ? "EXPERT CONTROL" : "POLICY DRIVING";
}

export const DISCONNECTED_BANNER = "DISCONNECTED";

export function tickLabel(t: number): string {
  return `tick ${t}`;
}

export function toastText(msg: TrainResultMessage): string {
  return (
    `trained on ${msg.n} samples, ` +
    `loss ${msg.before.toFixed(3)} → ${msg.after.toFixed(3)}`
  );
}

export interface AgentMarker {
  x: number;
  y: number;
  // unit heading for the yaw arrow; yaw 0 faces north (-y on screen)
  dx: number;
  dy: number;
}

export function agentMarker(state: StateMessage): AgentMarker {
  const rad = (state.yaw * Math.PI) / 180;
  return {
    x: state.x,
    y: state.y,
    dx: Math.sin(rad),
    dy: -Math.cos(rad),
  };
}

// -1 fully down, 0 level, +1 fully up; drives the vertical gauge
export function pitchFraction(pitch: number): number {
  return Math.max(-1, Math.min(1, pitch / 90));
}

export interface Screen {
  banner: string;
  tick: string;
  patch: PatchCell[][];
  marker: AgentMarker;
  pitch: number;
}

export function screenView(state: StateMessage): Screen {
  return {
    banner: bannerText(state.ctl),
    tick: tickLabel(state.t),
    patch: patchView(state.patch),
    marker: agentMarker(state),
    pitch: pitchFraction(state.pitch),
  };
}
