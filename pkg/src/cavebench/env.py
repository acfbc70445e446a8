"""Deterministic cave-finding gridworld.

Tiles: free floor, walls, jump-only step blocks, ponds that trap the agent
until it pushes in the same direction three ticks in a row, and goal caves.
The agent has a yaw/pitch camera moving in 5-degree increments; raising or
lowering the camera masks rows of the egocentric observation, so blindness
is a real handicap rather than a cosmetic flag.

Every transition is a pure function of (world, state, action): replaying an
action sequence reproduces the exact same states bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

# One tick is half a simulated second; a 180 s game is 360 ticks.
TICKS_PER_SECOND = 2
DEFAULT_MAX_TICKS = 360

VIEW_SIZE = 7          # egocentric window is VIEW_SIZE x VIEW_SIZE
NUM_CHANNELS = 6       # five tile kinds + UNKNOWN
NUM_ACTIONS = 9
OBS_DIM = VIEW_SIZE * VIEW_SIZE * NUM_CHANNELS + 1 + NUM_ACTIONS  # 304


class TileKind(IntEnum):
    FREE = 0
    WALL = 1
    STEP = 2
    POND = 3
    CAVE = 4
    UNKNOWN = 5  # observation-only channel, never a map tile


class ActionId(IntEnum):
    FORWARD = 0
    BACK = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3
    JUMP_FORWARD = 4
    PITCH_UP = 5
    PITCH_DOWN = 6
    NOOP = 7
    END_EPISODE = 8


MOVE_ACTIONS = frozenset({ActionId.FORWARD, ActionId.BACK, ActionId.JUMP_FORWARD})

# 45-degree compass, clockwise from north; x grows east, y grows south.
DIR8 = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)]

CHAR_TO_TILE = {
    ".": TileKind.FREE,
    "#": TileKind.WALL,
    "S": TileKind.STEP,
    "~": TileKind.POND,
    "C": TileKind.CAVE,
}


class MalformedMap(ValueError):
    """Raised when a map text violates the grid format."""


class SteppedAfterTermination(RuntimeError):
    """Raised when step() is called on a terminal state."""


@dataclass(frozen=True)
class World:
    width: int
    height: int
    tiles: tuple  # row-major tuple of tuples of TileKind
    spawn: tuple  # (x, y)

    def tile(self, x: int, y: int) -> TileKind:
        """Tile at (x, y); anything outside the map reads as WALL."""
        if 0 <= x < self.width and 0 <= y < self.height:
            return self.tiles[y][x]
        return TileKind.WALL


@dataclass(frozen=True)
class EnvState:
    position: tuple        # (x, y)
    yaw: int               # degrees, multiple of 5, in [0, 355]
    pitch: int             # degrees, multiple of 5, in [-90, 90]
    tick: int
    pond_counter: int
    previous_action: ActionId
    rng_seed: int


@dataclass(frozen=True)
class Observation:
    raster: np.ndarray      # (7, 7, 6) one-hot float64
    pitch_norm: float       # pitch / 90
    prev_action: ActionId

    @property
    def vector(self) -> np.ndarray:
        """Flattened 304-dim float64 feature vector."""
        v = np.empty(OBS_DIM, dtype=np.float64)
        v[: VIEW_SIZE * VIEW_SIZE * NUM_CHANNELS] = self.raster.ravel()
        v[VIEW_SIZE * VIEW_SIZE * NUM_CHANNELS] = self.pitch_norm
        one_hot = np.zeros(NUM_ACTIONS, dtype=np.float64)
        one_hot[int(self.prev_action)] = 1.0
        v[VIEW_SIZE * VIEW_SIZE * NUM_CHANNELS + 1 :] = one_hot
        return v


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    moved: bool
    intended_move: bool
    terminated: bool
    success: bool


def load_map(map_text: str) -> World:
    """Parse an ASCII grid into a World.

    Characters: '.' free, '#' wall, 'S' step block, '~' pond, 'C' cave,
    '@' spawn (free floor underneath). Exactly one '@' and at least one 'C'
    are required; rows must be equal length and the border must be wall.
    """
    rows = [r for r in map_text.splitlines() if r != ""]
    if not rows:
        raise MalformedMap("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MalformedMap("ragged rows")
    height = len(rows)

    spawn = None
    cave_count = 0
    tiles = []
    for y, row in enumerate(rows):
        tile_row = []
        for x, ch in enumerate(row):
            if ch == "@":
                if spawn is not None:
                    raise MalformedMap("multiple '@' spawn markers")
                spawn = (x, y)
                tile = TileKind.FREE
            elif ch in CHAR_TO_TILE:
                tile = CHAR_TO_TILE[ch]
            else:
                raise MalformedMap(f"unknown character {ch!r} at ({x}, {y})")
            if tile is TileKind.CAVE:
                cave_count += 1
            tile_row.append(tile)
        tiles.append(tuple(tile_row))

    if spawn is None:
        raise MalformedMap("missing '@' spawn marker")
    if cave_count == 0:
        raise MalformedMap("missing 'C' cave tile")
    for x in range(width):
        if tiles[0][x] is not TileKind.WALL or tiles[height - 1][x] is not TileKind.WALL:
            raise MalformedMap("border must be wall")
    for y in range(height):
        if tiles[y][0] is not TileKind.WALL or tiles[y][width - 1] is not TileKind.WALL:
            raise MalformedMap("border must be wall")

    return World(width=width, height=height, tiles=tuple(tiles), spawn=spawn)


def world_to_text(world: World) -> str:
    """Inverse of load_map (spawn rendered as '@')."""
    tile_to_char = {v: k for k, v in CHAR_TO_TILE.items()}
    rows = []
    for y in range(world.height):
        row = []
        for x in range(world.width):
            row.append("@" if (x, y) == world.spawn else tile_to_char[world.tiles[y][x]])
        rows.append("".join(row))
    return "\n".join(rows) + "\n"


def facing_dir(yaw: int) -> tuple:
    """Unit step for the yaw rounded to the nearest 45-degree compass point."""
    return DIR8[int(round(yaw / 45.0)) % 8]


def _round_half_up(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


class CaveGrid:
    """Environment facade binding a World to the transition rules."""

    def __init__(self, world: World, max_ticks: int = DEFAULT_MAX_TICKS):
        self.world = world
        self.max_ticks = max_ticks

    def reset(self, seed: int) -> tuple:
        state = EnvState(
            position=self.world.spawn,
            yaw=0,
            pitch=0,
            tick=0,
            pond_counter=0,
            previous_action=ActionId.NOOP,
            rng_seed=seed,
        )
        return state, self.observe(state)

    def is_terminal(self, state: EnvState) -> bool:
        return state.previous_action is ActionId.END_EPISODE or state.tick >= self.max_ticks

    def observe(self, state: EnvState) -> Observation:
        return observe(state, self.world)

    def step(self, state: EnvState, action: ActionId) -> tuple:
        if self.is_terminal(state):
            raise SteppedAfterTermination(f"episode already over at tick {state.tick}")
        action = ActionId(action)

        x, y = state.position
        yaw, pitch = state.yaw, state.pitch
        pond_counter = state.pond_counter
        moved = False
        intended = False
        success = False
        terminated = False

        if action is ActionId.TURN_LEFT:
            yaw = (yaw - 5) % 360
            pond_counter = 0
        elif action is ActionId.TURN_RIGHT:
            yaw = (yaw + 5) % 360
            pond_counter = 0
        elif action is ActionId.PITCH_UP:
            pitch = min(90, pitch + 5)
            pond_counter = 0
        elif action is ActionId.PITCH_DOWN:
            pitch = max(-90, pitch - 5)
            pond_counter = 0
        elif action in MOVE_ACTIONS:
            intended = True
            dx, dy = facing_dir(yaw)
            if action is ActionId.BACK:
                dx, dy = -dx, -dy
            # Ponds hold the agent: a move out only lands on the third
            # consecutive attempt, then the counter starts over.
            gate_open = True
            if self.world.tile(x, y) is TileKind.POND:
                pond_counter += 1
                if pond_counter >= 3:
                    pond_counter = 0
                else:
                    gate_open = False
            else:
                pond_counter = 0
            if gate_open:
                target = self.world.tile(x + dx, y + dy)
                if action is ActionId.JUMP_FORWARD:
                    passable = target is not TileKind.WALL
                else:
                    passable = target not in (TileKind.WALL, TileKind.STEP)
                if passable:
                    x, y = x + dx, y + dy
                    moved = True
        elif action is ActionId.NOOP:
            pond_counter = 0
        elif action is ActionId.END_EPISODE:
            pond_counter = 0
            terminated = True
            dx, dy = facing_dir(yaw)
            if abs(pitch) < 45:
                for k in (1, 2, 3):
                    if self.world.tile(x + k * dx, y + k * dy) is TileKind.CAVE:
                        success = True
                        break

        tick = state.tick + 1
        if tick >= self.max_ticks:
            terminated = True

        new_state = replace(
            state,
            position=(x, y),
            yaw=yaw,
            pitch=pitch,
            tick=tick,
            pond_counter=pond_counter,
            previous_action=action,
        )
        result = StepResult(
            observation=self.observe(new_state),
            moved=moved,
            intended_move=intended,
            terminated=terminated,
            success=success,
        )
        return new_state, result


def visible_rows(pitch: int) -> int:
    """Rows of the 7-deep window still visible at a given camera pitch."""
    return _round_half_up(VIEW_SIZE * (1.0 - abs(pitch) / 90.0))


def observe(state: EnvState, world: World) -> Observation:
    """Egocentric 7x7 one-hot raster plus pitch scalar and previous action.

    Row 0 is the agent's own row (agent at column 3), rows extend ahead
    along the facing direction; the window rotates with yaw in 45-degree
    steps. Rows beyond the pitch-dependent visibility limit read UNKNOWN,
    cells outside the map read WALL.
    """
    fx, fy = facing_dir(state.yaw)
    rx, ry = -fy, fx  # clockwise perpendicular: the agent's right hand
    px, py = state.position
    limit = visible_rows(state.pitch)

    raster = np.zeros((VIEW_SIZE, VIEW_SIZE, NUM_CHANNELS), dtype=np.float64)
    half = VIEW_SIZE // 2
    for d in range(VIEW_SIZE):
        for c in range(VIEW_SIZE):
            if d >= limit:
                raster[d, c, TileKind.UNKNOWN] = 1.0
            else:
                wx = px + d * fx + (c - half) * rx
                wy = py + d * fy + (c - half) * ry
                raster[d, c, int(world.tile(wx, wy))] = 1.0

    return Observation(
        raster=raster,
        pitch_norm=state.pitch / 90.0,
        prev_action=state.previous_action,
    )
