// Round trip against a real service process: take over, drive twenty
// paced actions through the shipped input loop and client, release, and
// check the single resulting training batch. Slow but end to end.
import { afterAll, beforeAll, expect, test } from "vitest";
import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";

import { SessionClient, SocketLike } from "../src/client.js";
import { InputLoop } from "../src/input.js";
import { ACTIONS, ServerMessage, StateMessage } from "../src/protocol.js";

const PYTHON = process.env.PYTHON ?? "python3";

let server: ChildProcess | null = null;
let port = 0;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "takeover-ui-"));
  const policy = join(dir, "policy.bin");
  const seeded = spawnSync(
    PYTHON,
    ["-c",
     "import sys; from cavebench.policy import init_params, save_params; " +
     "save_params(init_params(0), sys.argv[1])",
     policy],
    { encoding: "utf-8" },
  );
  if (seeded.status !== 0) {
    throw new Error(`policy seeding failed: ${seeded.stderr}`);
  }

  port = await freePort();
  server = spawn(
    PYTHON,
    ["-u", "-m", "cavebench.cli", "serve", "--policy", policy, "--map", "eval:0",
     "--mode", "hdd", "--port", String(port), "--tick-rate", "50",
     "--seed", "3"],
    { cwd: dir, stdio: ["ignore", "pipe", "pipe"] },
  );
  await new Promise<void>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error("service never announced itself")), 15000);
    let stderr = "";
    server!.stdout!.on("data", (chunk: Buffer) => {
      if (chunk.toString().includes("listening")) {
        clearTimeout(timer);
        resolve();
      }
    });
    server!.stderr!.on("data", (chunk: Buffer) => { stderr += chunk; });
    server!.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited ${code}: ${stderr}`));
    });
  });
}, 30000);

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((resolve) => server!.once("exit", resolve));
  }
});

test("a takeover, twenty actions, and a release train exactly once", async () => {
  // turns and pitch nudges only: nothing that could end the episode early
  const script = ["ArrowLeft", "ArrowRight", "w", "s"];
  const input = new InputLoop();
  const sent: number[] = [];
  const applied: number[] = [];
  const trainResults: { n: number; before: number; after: number }[] = [];
  let released = false;

  const finished = new Promise<void>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timed out: sent ${sent.length}, ` +
                             `applied ${applied.length}`)), 20000);

    const onMessage = (msg: ServerMessage): void => {
      if (msg.type === "error") {
        clearTimeout(timer);
        reject(new Error(msg.msg));
        return;
      }
      if (msg.type === "train_result") {
        trainResults.push({ n: msg.n, before: msg.before, after: msg.after });
        // linger two ticks so a spurious second result would be seen
        setTimeout(() => { clearTimeout(timer); resolve(); }, 100);
        return;
      }
      if (msg.type !== "state") return;
      const state = msg as StateMessage;
      input.onState();
      if (state.ctl === "E" && state.last !== ACTIONS.NOOP) {
        applied.push(state.last);
      }
      if (!input.inControl && !released) {
        client.send(input.keydown("q")!); // takeover on the first state
        return;
      }
      if (sent.length < 20) {
        const out = input.keydown(script[sent.length % script.length]);
        if (out && out.type === "action") {
          sent.push(out.id);
          client.send(out);
        }
      } else if (!released) {
        released = true;
        client.send(input.keydown("q")!); // release
      }
    };

    const client = new SessionClient(
      `ws://127.0.0.1:${port}/`,
      { onMessage, onClose: () => input.onDisconnect() },
      (url) => new WebSocket(url) as unknown as SocketLike,
    );
  });

  await finished;
  expect(trainResults).toHaveLength(1);
  expect(trainResults[0].n).toBe(20);
  expect(Number.isFinite(trainResults[0].before)).toBe(true);
  expect(Number.isFinite(trainResults[0].after)).toBe(true);
  expect(applied).toEqual(sent);
  expect(sent).toHaveLength(20);
}, 30000);
