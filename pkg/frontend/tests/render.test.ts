import { describe, expect, it } from "vitest";

import {
  agentMarker,
  bannerText,
  patchView,
  pitchFraction,
  screenView,
  tickLabel,
  toastText,
} from "../src/render.js";
import { StateMessage, TILES } from "../src/protocol.js";

function state(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    t: 0,
    x: 1,
    y: 1,
    yaw: 0,
    pitch: 0,
    ctl: "N",
    last: 7,
    patch: Array.from({ length: 7 }, () => Array(7).fill(TILES.FREE)),
    ...overrides,
  };
}

describe("agent view shading", () => {
  it("renders a pitch-90 state fully shaded", () => {
    // looking straight up the whole 7x7 view reads unknown
    const blind = state({
      pitch: 90,
      patch: Array.from({ length: 7 }, () => Array(7).fill(TILES.UNKNOWN)),
    });
    const screen = screenView(blind);
    expect(screen.patch).toHaveLength(7);
    for (const row of screen.patch) {
      expect(row.every((cell) => cell.shaded)).toBe(true);
    }
  });

  it("shades only the unknown cells of a level view", () => {
    const patch = patchView([
      [TILES.FREE, TILES.WALL, TILES.UNKNOWN],
      [TILES.CAVE, TILES.STEP, TILES.POND],
    ]);
    expect(patch.map((row) => row.map((c) => c.shaded))).toEqual([
      [false, false, true],
      [false, false, false],
    ]);
    expect(patch[0][1].tile).toBe(TILES.WALL);
  });
});

describe("status text", () => {
  it("labels the control owner", () => {
    expect(bannerText("E")).toBe("EXPERT CONTROL");
    expect(bannerText("N")).toBe("POLICY DRIVING");
  });

  it("counts ticks", () => {
    expect(tickLabel(42)).toBe("tick 42");
  });

  it("summarizes a training result", () => {
    const text = toastText({
      type: "train_result",
      n: 20,
      before: 1.2345,
      after: 0.4567,
    });
    expect(text).toBe("trained on 20 samples, loss 1.234 → 0.457");
  });
});

describe("pose widgets", () => {
  it("points the yaw arrow north at yaw 0", () => {
    const marker = agentMarker(state());
    expect(marker.dx).toBeCloseTo(0, 10);
    expect(marker.dy).toBeCloseTo(-1, 10);
  });

  it("points east after a quarter turn", () => {
    const marker = agentMarker(state({ yaw: 90 }));
    expect(marker.dx).toBeCloseTo(1, 10);
    expect(marker.dy).toBeCloseTo(0, 10);
  });

  it("maps pitch to a clamped unit fraction", () => {
    expect(pitchFraction(0)).toBe(0);
    expect(pitchFraction(45)).toBeCloseTo(0.5, 10);
    expect(pitchFraction(-90)).toBe(-1);
    expect(pitchFraction(180)).toBe(1);
  });
});
