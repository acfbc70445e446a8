// Keyboard to protocol messages. The rate lock admits at most one action
// per received state so human corrections arrive at the same cadence as
// policy actions; extra presses between ticks are dropped, not queued.

import { ACTIONS, ClientMessage } from "./protocol.js";

export type Keymap = Record<string, number>;

export const DEFAULT_KEYMAP: Keymap = {
  ArrowUp: ACTIONS.FORWARD,
  ArrowDown: ACTIONS.BACK,
  ArrowLeft: ACTIONS.TURN_LEFT,
  ArrowRight: ACTIONS.TURN_RIGHT,
  " ": ACTIONS.JUMP_FORWARD,
  w: ACTIONS.PITCH_UP,
  s: ACTIONS.PITCH_DOWN,
  e: ACTIONS.END_EPISODE,
};

export const TOGGLE_KEY = "q";

export class InputLoop {
  inControl = false;
  private ready = false;
  private keymap: Keymap;

  constructor(keymap: Keymap = DEFAULT_KEYMAP) {
    this.keymap = keymap;
  }

  // call on every inbound state message; unlocks the next action
  onState(): void {
    this.ready = true;
  }

  onDisconnect(): void {
    this.inControl = false;
    this.ready = false;
  }

  keydown(key: string): ClientMessage | null {
    if (key.toLowerCase() === TOGGLE_KEY) {
      this.inControl = !this.inControl;
      return { type: this.inControl ? "takeover" : "release" };
    }
    const id = this.keymap[key] ?? this.keymap[key.toLowerCase()];
    if (id === undefined || !this.inControl || !this.ready) {
      return null;
    }
    this.ready = false;
    return { type: "action", id };
  }
}
