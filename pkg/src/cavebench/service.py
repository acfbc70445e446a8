"""Websocket session service: a live episode a human can watch and seize.

One sequential loop owns the environment and the policy. It advances the
world at a wall-clock tick rate (simulated time stays 2 ticks/s), applies
one action per tick, and broadcasts one state message per tick. A single
connected client may take over, drive with action messages, and release.
In HDD mode every release turns the recorded stint into a one-off
correction batch, trained synchronously while the clock pauses, then
discarded; the updated policy drives from the next tick.

Wire protocol (newline-free JSON per websocket message):
  client -> server: {"type":"takeover"} | {"type":"release"}
                    | {"type":"action","id":0-8}
  server -> client: {"type":"state","t","x","y","yaw","pitch","ctl","last",
                     "patch",["map"],["probs"]}
                    | {"type":"train_result","n","before","after"}
                    | {"type":"episode_end","success"}
                    | {"type":"error","msg"}
"map" rides only the first state message a client receives. Malformed
messages disconnect the client; an action sent without control only draws
an error message and is ignored.
"""
from __future__ import annotations

import asyncio
import http
import json
import os

import numpy as np

from . import policy as P
from .data import Source, Trajectory
from .env import ActionId, CaveGrid, NUM_ACTIONS
from .records import EXPERT, NOVICE, EpisodeRecord, TickEntry, save_episode_log
from .trainers import FinetuneConfig, correction_step

MODES = ("HDD", "HG_DAGGER", "OBSERVE")


class EndpointUnavailable(OSError):
    """The requested host/port cannot be bound."""


class ClientProtocolViolation(ValueError):
    """The client sent something outside the wire protocol."""


def _parse_client_message(raw):
    """Validate one inbound frame. Returns (kind, payload) or raises
    ClientProtocolViolation; payload is the action id for 'action'."""
    try:
        msg = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ClientProtocolViolation(f"not JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ClientProtocolViolation("message must be a JSON object")
    kind = msg.get("type")
    if kind in ("takeover", "release"):
        return kind, None
    if kind == "action":
        action = msg.get("id")
        if not isinstance(action, int) or not 0 <= action < NUM_ACTIONS:
            raise ClientProtocolViolation(f"bad action id {action!r}")
        return kind, action
    raise ClientProtocolViolation(f"unknown message type {kind!r}")


def _grid_ints(world):
    return [[int(world.tile(x, y)) for x in range(world.width)]
            for y in range(world.height)]


def _patch_ints(obs):
    # collapse the one-hot raster back to tile ids for the wire
    return np.argmax(obs.raster, axis=2).astype(int).tolist()


class Session:
    """Protocol state machine, independent of the socket layer.

    Inbound messages are queued; apply_queued() consumes them at a tick
    boundary, honoring at most one control transition and at most one
    applied action per tick (extras stay queued, order preserved).
    """

    def __init__(self, world, params, mode="HDD", seed=0, max_ticks=None,
                 finetune_cfg=None, map_id="live"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.world = world
        self.params = params
        self.mode = mode
        self.map_id = map_id
        self.seed_base = seed
        self.cfg = finetune_cfg or FinetuneConfig()
        self.env = CaveGrid(world) if max_ticks is None else CaveGrid(world, max_ticks)
        self.episode_index = 0
        self.owner = NOVICE
        self.buffer = []            # (obs vector, action) during expert control
        self.aggregate = []         # HG_DAGGER: stints kept for the session
        self.queue = []
        self.outbox = []            # messages produced by apply/step
        self.record = None
        self.state = None
        self.obs = None
        self._reset_episode()

    def _reset_episode(self):
        seed = self.seed_base + self.episode_index
        self.state, self.obs = self.env.reset(seed)
        self.record = EpisodeRecord(map_id=self.map_id, seed=seed)

    def _emit(self, **msg):
        self.outbox.append(msg)

    def enqueue(self, kind, payload=None):
        self.queue.append((kind, payload))

    def apply_queued(self):
        """Consume queued messages for this tick boundary. Returns the
        client action to apply this tick, or None."""
        applied = None
        transitioned = False
        consumed = 0
        for kind, payload in self.queue:
            # a transition after an applied action waits for the next tick:
            # the action must drive the world (and join the stint buffer)
            # under the ownership it was sent with
            if kind in ("takeover", "release") and (transitioned or applied is not None):
                break
            if kind == "action" and applied is not None:
                break
            consumed += 1
            if kind == "takeover":
                if self.mode == "OBSERVE":
                    self._emit(type="error", msg="control disabled in observe mode")
                elif self.owner == EXPERT:
                    self._emit(type="error", msg="already in control")
                else:
                    self.owner = EXPERT
                    transitioned = True
            elif kind == "release":
                if self.mode == "OBSERVE" or self.owner != EXPERT:
                    self._emit(type="error", msg="not in control")
                else:
                    self._finish_stint()
                    self.owner = NOVICE
                    transitioned = True
            elif kind == "action":
                if self.owner != EXPERT:
                    self._emit(type="error", msg="action without control ignored")
                else:
                    applied = ActionId(payload)
        del self.queue[:consumed]
        return applied

    def _finish_stint(self):
        """Release semantics: HDD trains the stint as a one-off correction
        batch and reports it; HG keeps the labels; empty stints are no-ops.
        The buffer never survives the release."""
        if self.buffer:
            if self.mode == "HDD":
                traj = Trajectory.from_pairs(
                    list(self.buffer), Source.CORRECTION,
                    map_id=self.map_id, seed=self.seed_base + self.episode_index,
                )
                self.params, result = correction_step(self.params, traj, self.cfg)
                self._emit(type="train_result", n=result.sample_count,
                           before=result.loss_before, after=result.loss_after)
            elif self.mode == "HG_DAGGER":
                self.aggregate.extend(self.buffer)
        self.buffer.clear()

    def client_disconnected(self):
        """A disconnect while holding control counts as a release at the
        next tick boundary, so the collected labels still train."""
        self.queue = [(k, p) for k, p in self.queue if k != "action"]
        if self.owner == EXPERT:
            self.enqueue("release")

    def tick(self):
        """Advance one tick. Returns the finished EpisodeRecord when this
        tick ended the episode, else None."""
        client_action = self.apply_queued()
        if self.owner == EXPERT:
            action = client_action if client_action is not None else ActionId.NOOP
            if client_action is not None:
                self.buffer.append((self.obs.vector, int(action)))
        else:
            action = P.act(self.params, self.obs)
        tick_index = self.state.tick
        next_state, result = self.env.step(self.state, action)
        self.record.append(TickEntry(
            tick=tick_index,
            action=int(action),
            moved=result.moved,
            intended_move=result.intended_move,
            pitch=next_state.pitch,
            position=next_state.position,
            control_owner=self.owner,
        ))
        self._emit(
            type="state", t=tick_index,
            x=next_state.position[0], y=next_state.position[1],
            yaw=next_state.yaw, pitch=next_state.pitch,
            ctl=self.owner, last=int(action),
            patch=_patch_ints(result.observation),
        )
        self.state, self.obs = next_state, result.observation
        done = result.terminated or self.env.is_terminal(self.state)
        if not done:
            return None
        self.record.success = bool(result.success)
        if self.owner == EXPERT:
            self._finish_stint()
            self.owner = NOVICE
        self._emit(type="episode_end", success=bool(result.success))
        finished = self.record
        self.episode_index += 1
        self._reset_episode()
        return finished


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class SessionService:
    """Socket layer around a Session: one client slot, broadcast per tick,
    optional static file serving for the browser client."""

    def __init__(self, world, params, mode="HDD", seed=0, tick_rate=10.0,
                 finetune_cfg=None, map_id="live", log_dir=None,
                 static_dir=None, send_probs=False, max_ticks=None):
        self.session = Session(world, params, mode=mode, seed=seed,
                               finetune_cfg=finetune_cfg, map_id=map_id,
                               max_ticks=max_ticks)
        self.tick_rate = float(tick_rate)
        self.log_dir = log_dir
        self.static_dir = static_dir
        self.send_probs = send_probs
        self.client = None
        self.client_has_map = False
        self._stopped = None  # created inside run()'s loop

    # -- client side -------------------------------------------------

    async def _handle_client(self, ws):
        if self.client is not None:
            await ws.send(json.dumps({"type": "error", "msg": "session busy"}))
            await ws.close()
            return
        self.client = ws
        self.client_has_map = False
        try:
            async for raw in ws:
                try:
                    kind, payload = _parse_client_message(raw)
                except ClientProtocolViolation as exc:
                    await self._safe_send(ws, {"type": "error", "msg": str(exc)})
                    break
                self.session.enqueue(kind, payload)
        except Exception:
            pass
        finally:
            if self.client is ws:
                self.client = None
                self.session.client_disconnected()
            try:
                await ws.close()
            except Exception:
                pass

    async def _safe_send(self, ws, msg):
        try:
            await asyncio.wait_for(ws.send(json.dumps(msg)), timeout=2.0)
            return True
        except Exception:
            return False

    async def _broadcast(self, messages):
        ws = self.client
        if ws is None:
            return
        for msg in messages:
            if msg.get("type") == "state":
                if not self.client_has_map:
                    msg = dict(msg, map=_grid_ints(self.session.world))
                    self.client_has_map = True
                if self.send_probs:
                    logits = P.forward(self.session.params,
                                       self.session.obs.vector[None, :])[0]
                    shifted = logits - logits.max()
                    probs = np.exp(shifted) / np.exp(shifted).sum()
                    msg = dict(msg, probs=[float(p) for p in probs])
            if not await self._safe_send(ws, msg):
                # a stalled client must never stall the simulation
                if self.client is ws:
                    self.client = None
                    self.session.client_disconnected()
                try:
                    await ws.close()
                except Exception:
                    pass
                return

    # -- static files -------------------------------------------------

    def _process_request(self, connection, request):
        if self.static_dir is None:
            return None
        if request.headers.get("Upgrade", "").lower() == "websocket":
            return None
        path = request.path.split("?", 1)[0]
        if path == "/":
            path = "/index.html"
        full = os.path.realpath(os.path.join(self.static_dir, path.lstrip("/")))
        root = os.path.realpath(self.static_dir)
        if not full.startswith(root + os.sep) and full != root:
            return connection.respond(http.HTTPStatus.FORBIDDEN, "forbidden\n")
        if not os.path.isfile(full):
            return connection.respond(http.HTTPStatus.NOT_FOUND, "not found\n")
        ext = os.path.splitext(full)[1]
        ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
        with open(full, "rb") as fh:
            body = fh.read()
        response = connection.respond(http.HTTPStatus.OK, "")
        # respond() froze Content-Length for its empty placeholder body
        del response.headers["Content-Length"]
        del response.headers["Content-Type"]
        response.headers["Content-Length"] = str(len(body))
        response.headers["Content-Type"] = ctype
        response.body = body
        return response

    # -- main loop -----------------------------------------------------

    async def run(self, host="127.0.0.1", port=8765, max_episodes=None):
        import websockets

        self._stopped = asyncio.Event()
        try:
            server = await websockets.serve(
                self._handle_client, host, port,
                process_request=self._process_request,
            )
        except OSError as exc:
            raise EndpointUnavailable(f"cannot bind {host}:{port}: {exc}") from exc
        # announced only once the socket is live; launchers wait for this line
        print(f"listening on ws://{host}:{port}", flush=True)
        episodes_done = 0
        try:
            while not self._stopped.is_set():
                started = asyncio.get_event_loop().time()
                finished = self.session.tick()
                outbox, self.session.outbox = self.session.outbox, []
                await self._broadcast(outbox)
                if finished is not None:
                    if self.log_dir:
                        os.makedirs(self.log_dir, exist_ok=True)
                        save_episode_log(finished, os.path.join(
                            self.log_dir,
                            f"episode_{self.session.episode_index - 1:04d}.jsonl"))
                    episodes_done += 1
                    if max_episodes is not None and episodes_done >= max_episodes:
                        break
                elapsed = asyncio.get_event_loop().time() - started
                delay = max(0.0, 1.0 / self.tick_rate - elapsed)
                await asyncio.sleep(delay)
        finally:
            server.close()
            try:
                # a client that never closes must not pin the process
                await asyncio.wait_for(server.wait_closed(), timeout=5.0)
            except asyncio.TimeoutError:
                pass

    def stop(self):
        if self._stopped is not None:
            self._stopped.set()


def serve(world, params, host="127.0.0.1", port=8765, save_policy=None,
          **kwargs):
    """Blocking entry point; Ctrl-C stops the loop. With save_policy the
    (possibly correction-updated) weights are written on shutdown."""
    service = SessionService(world, params, **kwargs)
    try:
        asyncio.run(service.run(host=host, port=port))
    except KeyboardInterrupt:
        pass
    finally:
        if save_policy:
            P.save_params(service.session.params, save_policy)
    return service
