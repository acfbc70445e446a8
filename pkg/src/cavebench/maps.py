"""Built-in map fixtures: training, fine-tuning, evaluation, and probe maps.

All maps come from seeded generators, so the fixtures are deterministic
without shipping large text files. Training maps are hazard-free
(no step blocks, no ponds) by design: the baseline dataset recorded on
them never demonstrates jumping or pond escapes, which is what leaves the
fine-tuning regimes something to fix. Fine-tune and evaluation maps place
hazards directly on the route to the cave.

Names resolve through get_world(): "train:0", "finetune:2", "eval:7",
"probe:step:4", "probe:wall:0", or a filesystem path to an ASCII map.
"""
from __future__ import annotations

import functools
import os
import random
from dataclasses import dataclass

from .env import DEFAULT_MAX_TICKS, TileKind, World, load_map, world_to_text

TRAINING_MAP_COUNT = 6
FINETUNE_MAP_COUNT = 8
EVAL_MAP_COUNT = 20
PROBE_VARIATIONS = 20

_TRAIN_SEED_BASE = 11000
_FINETUNE_SEED_BASE = 22000
_EVAL_SEED_BASE = 33000

# generated map sizes; evaluation maps are the large fixture size.
# training maps are sized so a demo runs a couple hundred ticks: 50 games
# then yield a baseline dataset around ten thousand transitions, which the
# fine-tuning budgets (roughly 10% of it) are calibrated against.
_TRAIN_SIZE = (38, 38)
_FINETUNE_SIZE = (26, 26)
_EVAL_SIZE = (32, 32)
_TRAIN_MIN_TICKS = 180
_EVAL_MIN_TICKS = 60


@dataclass(frozen=True)
class ProbeInstance:
    name: str
    world: World
    align_cell: tuple   # obstacle-adjacent cell used to align trajectories
    align_yaw: int      # facing at alignment (toward the obstacle)


def _blank(width, height):
    return [[TileKind.WALL] * width for _ in range(height)]


def _carve_room(tiles, x, y, w, h):
    for yy in range(y, y + h):
        for xx in range(x, x + w):
            tiles[yy][xx] = TileKind.FREE


def _carve_corridor(tiles, a, b, rng):
    """L-shaped 1-wide corridor between two cells; axis order is seeded."""
    (ax, ay), (bx, by) = a, b
    def h_line(x0, x1, y):
        for x in range(min(x0, x1), max(x0, x1) + 1):
            tiles[y][x] = TileKind.FREE
    def v_line(y0, y1, x):
        for y in range(min(y0, y1), max(y0, y1) + 1):
            tiles[y][x] = TileKind.FREE
    if rng.random() < 0.5:
        h_line(ax, bx, ay)
        v_line(ay, by, bx)
    else:
        v_line(ay, by, ax)
        h_line(ax, bx, by)


def _cell_path(tiles, start, goal_cells):
    """8-connected BFS over walkable cells; step blocks count as walkable
    (the expert can jump onto them). Returns the cell path or None."""
    from collections import deque

    height, width = len(tiles), len(tiles[0])
    goal_set = set(goal_cells)
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell in goal_set:
            path = []
            while cell is not None:
                path.append(cell)
                cell = prev[cell]
            return path[::-1]
        x, y = cell
        for dx, dy in ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and tiles[ny][nx] is not TileKind.WALL:
                if (nx, ny) not in prev:
                    prev[(nx, ny)] = (x, y)
                    queue.append((nx, ny))
    return None


def _generate_dungeon(seed, size, hazards, step_count=1):
    """Rooms-and-corridors layout; with hazards, step blocks and a pond
    are dropped directly onto the spawn-to-cave route."""
    rng = random.Random(seed)
    width, height = size
    tiles = _blank(width, height)

    rooms = []
    target_rooms = rng.randrange(5, 8)
    for _ in range(300):
        if len(rooms) == target_rooms:
            break
        w = rng.randrange(4, 8)
        h = rng.randrange(4, 8)
        x = rng.randrange(1, width - w - 1)
        y = rng.randrange(1, height - h - 1)
        if any(x - 1 < rx + rw and rx - 1 < x + w and y - 1 < ry + rh and ry - 1 < y + h
               for rx, ry, rw, rh in rooms):
            continue
        _carve_room(tiles, x, y, w, h)
        rooms.append((x, y, w, h))
    if len(rooms) < 3:
        return None

    # serpentine room order: sweep across horizontal bands, alternating
    # direction, so the route crosses the map several times
    band_h = max(1, height // 3)
    def serpentine_key(room):
        rx, ry, rw, rh = room
        band = (ry + rh // 2) // band_h
        cx = rx + rw // 2
        return (band, cx if band % 2 == 0 else -cx)
    rooms.sort(key=serpentine_key)

    centers = [(rx + rw // 2, ry + rh // 2) for rx, ry, rw, rh in rooms]
    for a, b in zip(centers, centers[1:]):
        _carve_corridor(tiles, a, b, rng)

    # dead-end stubs give wandering agents walls to press against
    for _ in range(rng.randrange(3, 6)):
        sx, sy, sw, sh = rooms[rng.randrange(len(rooms))]
        edge = rng.randrange(4)
        length = rng.randrange(2, 5)
        if edge == 0:
            x0, y0, dx, dy = rng.randrange(sx, sx + sw), sy - 1, 0, -1
        elif edge == 1:
            x0, y0, dx, dy = rng.randrange(sx, sx + sw), sy + sh, 0, 1
        elif edge == 2:
            x0, y0, dx, dy = sx - 1, rng.randrange(sy, sy + sh), -1, 0
        else:
            x0, y0, dx, dy = sx + sw, rng.randrange(sy, sy + sh), 1, 0
        for k in range(length):
            x, y = x0 + k * dx, y0 + k * dy
            if 1 <= x < width - 1 and 1 <= y < height - 1:
                tiles[y][x] = TileKind.FREE

    spawn = centers[0]
    cave_room = rooms[-1]
    cx = cave_room[0] + cave_room[2] - 1
    cy = cave_room[1] + cave_room[3] - 1
    tiles[cy][cx] = TileKind.CAVE
    if tiles[cy - 1][cx] is TileKind.FREE:
        tiles[cy - 1][cx] = TileKind.CAVE

    if hazards:
        path = _cell_path(tiles, spawn, [(cx, cy)])
        if path is None or len(path) < 12:
            return None
        # step blocks mid-route, inside corridors so they cannot be skirted;
        # spaced apart so each gets its own approach
        steps_placed = 0
        last_step_at = -10
        for k, (px, py) in enumerate(path[4:-4]):
            if steps_placed == step_count:
                break
            if k - last_step_at < 8:
                continue
            if tiles[py][px] is not TileKind.FREE:
                continue
            walled = sum(
                1 for ddx, ddy in ((0, 1), (0, -1), (1, 0), (-1, 0))
                if tiles[py + ddy][px + ddx] is TileKind.WALL
            )
            if walled >= 2 and (px, py) != spawn:
                tiles[py][px] = TileKind.STEP
                steps_placed += 1
                last_step_at = k
        if steps_placed < step_count:
            return None
        # a pond patch later on the route
        pond_placed = False
        for px, py in path[len(path) * 2 // 3 :]:
            if tiles[py][px] is not TileKind.FREE:
                continue
            for yy in range(py - 1, py + 2):
                for xx in range(px - 1, px + 2):
                    if 1 <= xx < width - 1 and 1 <= yy < height - 1 and tiles[yy][xx] is TileKind.FREE and (xx, yy) != spawn:
                        tiles[yy][xx] = TileKind.POND
                        pond_placed = True
            if pond_placed:
                break
        if not pond_placed:
            return None

    if tiles[spawn[1]][spawn[0]] is not TileKind.FREE:
        return None
    text_rows = []
    table = {TileKind.FREE: ".", TileKind.WALL: "#", TileKind.STEP: "S",
             TileKind.POND: "~", TileKind.CAVE: "C"}
    for y in range(height):
        row = "".join(
            "@" if (x, y) == spawn else table[tiles[y][x]] for x in range(width)
        )
        text_rows.append(row)
    try:
        return load_map("\n".join(text_rows))
    except Exception:
        return None


def _expert_can_solve(world, min_ticks=0, max_ticks=DEFAULT_MAX_TICKS - 20):
    """True when a pure expert rollout reaches the cave with time to spare."""
    from .expert import Unreachable, demonstrate

    try:
        ticks = 0
        success = False
        for _state, _obs, _action, result, _after in demonstrate(world, seed=0):
            ticks += 1
            success = result.success
        return success and min_ticks <= ticks <= max_ticks
    except Unreachable:
        return False


def _generate_checked(seed_base, index, size, hazards, min_ticks=0, step_count=1):
    for attempt in range(200):
        world = _generate_dungeon(seed_base + index * 1000 + attempt, size, hazards,
                                  step_count=step_count)
        if world is not None and _expert_can_solve(world, min_ticks=min_ticks):
            return world
    raise RuntimeError(f"map generation failed for seed base {seed_base} index {index}")


@functools.lru_cache(maxsize=None)
def training_world(i: int) -> World:
    return _generate_checked(_TRAIN_SEED_BASE, i, _TRAIN_SIZE, hazards=False,
                             min_ticks=_TRAIN_MIN_TICKS)


@functools.lru_cache(maxsize=None)
def finetune_world(i: int) -> World:
    # two route steps per map: supervisor stints during fine-tuning then
    # demonstrate the jump more than once per game
    return _generate_checked(_FINETUNE_SEED_BASE, i, _FINETUNE_SIZE, hazards=True,
                             min_ticks=_EVAL_MIN_TICKS, step_count=2)


@functools.lru_cache(maxsize=None)
def eval_world(i: int) -> World:
    return _generate_checked(_EVAL_SEED_BASE, i, _EVAL_SIZE, hazards=True,
                             min_ticks=_EVAL_MIN_TICKS)


def _probe_shell(width, height):
    return _blank(width, height)


def _finish_probe(tiles, spawn):
    table = {TileKind.FREE: ".", TileKind.WALL: "#", TileKind.STEP: "S",
             TileKind.POND: "~", TileKind.CAVE: "C"}
    rows = []
    for y in range(len(tiles)):
        rows.append("".join(
            "@" if (x, y) == spawn else table[tiles[y][x]] for x in range(len(tiles[0]))
        ))
    return load_map("\n".join(rows))


@functools.lru_cache(maxsize=None)
def step_probe(i: int) -> ProbeInstance:
    """North-running corridor with a step block; cave beyond, behind a
    zigzag long enough that the expert reference outlasts the probe window."""
    rng = random.Random(91000 + i)
    approach = 3 + (i % 4)          # spawn-to-obstacle distance
    width, height = 15, 14 + approach
    tiles = _probe_shell(width, height)
    cx = 5 + (i % 3)
    spawn_y = height - 2
    # corridor from spawn up to the step
    for y in range(spawn_y - approach - 1, spawn_y + 1):
        tiles[y][cx] = TileKind.FREE
    step_y = spawn_y - approach - 1
    tiles[step_y][cx] = TileKind.STEP
    # beyond the step: continue north then zigzag east to the cave
    for y in range(4, step_y):
        tiles[y][cx] = TileKind.FREE
    for x in range(cx, width - 3):
        tiles[4][x] = TileKind.FREE
    for y in range(2, 5):
        tiles[y][width - 3] = TileKind.FREE
    tiles[2][width - 3] = TileKind.CAVE
    # seeded side stubs vary the raster without changing the task
    for _ in range(rng.randrange(1, 4)):
        y = rng.randrange(5, step_y)
        side = rng.choice((-1, 1))
        if 1 <= cx + side < width - 1:
            tiles[y][cx + side] = TileKind.FREE
    world = _finish_probe(tiles, (cx, spawn_y))
    return ProbeInstance(
        name=f"probe:step:{i}",
        world=world,
        align_cell=(cx, step_y + 1),
        align_yaw=0,
    )


@functools.lru_cache(maxsize=None)
def wall_probe(i: int) -> ProbeInstance:
    """North-running corridor into a dead end; the cave lies back south, so
    the reference behaviour is a 180-degree turn and a walk out."""
    rng = random.Random(92000 + i)
    approach = 3 + (i % 4)
    width, height = 15, 16 + approach
    tiles = _probe_shell(width, height)
    cx = 5 + (i % 3)
    spawn_y = 4 + approach
    dead_end_y = 4
    for y in range(dead_end_y, spawn_y + 1):
        tiles[y][cx] = TileKind.FREE
    # route from spawn south then east to the cave
    for y in range(spawn_y, height - 3):
        tiles[y][cx] = TileKind.FREE
    for x in range(cx, width - 3):
        tiles[height - 3][x] = TileKind.FREE
    tiles[height - 3][width - 3] = TileKind.CAVE
    for _ in range(rng.randrange(1, 4)):
        y = rng.randrange(dead_end_y + 1, spawn_y)
        side = rng.choice((-1, 1))
        if 1 <= cx + side < width - 1:
            tiles[y][cx + side] = TileKind.FREE
    world = _finish_probe(tiles, (cx, spawn_y))
    return ProbeInstance(
        name=f"probe:wall:{i}",
        world=world,
        align_cell=(cx, dead_end_y),
        align_yaw=0,
    )


def probe_instances(kind: str):
    if kind == "STEP_PROBE":
        return [step_probe(i) for i in range(PROBE_VARIATIONS)]
    if kind == "WALL_PROBE":
        return [wall_probe(i) for i in range(PROBE_VARIATIONS)]
    raise ValueError(f"unknown probe kind {kind!r}")


def training_worlds():
    return [(f"train:{i}", training_world(i)) for i in range(TRAINING_MAP_COUNT)]


def finetune_worlds():
    return [(f"finetune:{i}", finetune_world(i)) for i in range(FINETUNE_MAP_COUNT)]


def eval_worlds():
    return [(f"eval:{i}", eval_world(i)) for i in range(EVAL_MAP_COUNT)]


def get_world(name: str) -> World:
    """Resolve a builtin map name or load an ASCII map file."""
    if os.path.exists(name):
        with open(name, "r", encoding="utf-8") as fh:
            return load_map(fh.read())
    parts = name.split(":")
    if len(parts) == 2 and parts[1].isdigit():
        index = int(parts[1])
        if parts[0] == "train":
            return training_world(index)
        if parts[0] == "finetune":
            return finetune_world(index)
        if parts[0] == "eval":
            return eval_world(index)
    if len(parts) == 3 and parts[0] == "probe" and parts[2].isdigit():
        if parts[1] == "step":
            return step_probe(int(parts[2])).world
        if parts[1] == "wall":
            return wall_probe(int(parts[2])).world
    raise KeyError(f"unknown map {name!r}")


def export_map(name: str, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(world_to_text(get_world(name)))
