// Wire types for the session service socket. One JSON object per message;
// anything the validator rejects here would get the client disconnected.

export const ACTIONS = {
  FORWARD: 0,
  BACK: 1,
  TURN_LEFT: 2,
  TURN_RIGHT: 3,
  JUMP_FORWARD: 4,
  PITCH_UP: 5,
  PITCH_DOWN: 6,
  NOOP: 7,
  END_EPISODE: 8,
} as const;

export const NUM_ACTIONS = 9;

export const TILES = {
  FREE: 0,
  WALL: 1,
  STEP: 2,
  POND: 3,
  CAVE: 4,
  UNKNOWN: 5,
} as const;

export type ClientMessage =
  | { type: "takeover" }
  | { type: "release" }
  | { type: "action"; id: number };

export interface StateMessage {
  type: "state";
  t: number;
  x: number;
  y: number;
  yaw: number;
  pitch: number;
  ctl: "N" | "E";
  last: number;
  patch: number[][];
  map?: number[][];
  probs?: number[];
}

export interface TrainResultMessage {
  type: "train_result";
  n: number;
  before: number;
  after: number;
}

export interface EpisodeEndMessage {
  type: "episode_end";
  success: boolean;
}

export interface ErrorMessage {
  type: "error";
  msg: string;
}

export type ServerMessage =
  | StateMessage
  | TrainResultMessage
  | EpisodeEndMessage
  | ErrorMessage;

const SERVER_TYPES = new Set(["state", "train_result", "episode_end", "error"]);

export function parseServerMessage(raw: string): ServerMessage {
  const msg = JSON.parse(raw);
  if (typeof msg !== "object" || msg === null || !SERVER_TYPES.has(msg.type)) {
    throw new Error(`unexpected server message: ${raw.slice(0, 120)}`);
  }
  return msg as ServerMessage;
}
