"""Scripted supervisor with full map knowledge.

The supervisor plays two roles. As a demonstrator it plans a route to the
cave and executes it. As a gating overseer it watches a novice, takes over
when the novice is stuck against geometry or has pitched past a threshold,
applies a fixed recovery repertoire, and hands control back once it has
been driving cleanly for a while.

Recovery repertoire, in priority order when the supervisor holds control:

1. non-zero pitch: step pitch back toward level, one 5-degree notch per
   tick, before anything else (the view mask starves the policy of rows
   otherwise);
2. a queued turn-in-place macro (36 five-degree right turns, a 180-degree
   about-face) started when facing a wall with no plan;
3. jump when directly facing a step block with no plan;
4. otherwise follow the current route plan, computing one if needed.

Rules 2 and 3 only fire when no plan is active, so a plan mid-turn is never
preempted by the wall check (a rotating agent sweeps its facing across
walls constantly).
"""
from __future__ import annotations

from collections import deque

from .env import (
    DIR8,
    ActionId,
    CaveGrid,
    EnvState,
    TileKind,
    World,
    facing_dir,
)


class Unreachable(Exception):
    """No route from the given cell to the requested tile kind."""


class NotInControl(Exception):
    """expert_action was called while the novice held control."""


WALL_MACRO_TURNS = 36  # 36 right turns of 5 degrees = a 180-degree about-face

DEFAULT_STUCK_TICKS = 10
DEFAULT_PITCH_TAKEOVER_DEG = 30
DEFAULT_RELEASE_TICKS = 20


def _turns_to_dir(yaw, d):
    """Turns from yaw until facing direction index d, stopping at the first
    yaw inside d's 45-degree sector rather than its center.

    Stopping at the sector's entry edge keeps the exit decision visible:
    the view raster only changes when the facing sector changes, so a turn
    that pushes deep into the sector leaves several identical observations
    labeled TURN before the one labeled FORWARD, and a cloned policy then
    never learns to stop turning. Returns (actions, final_yaw); ties go
    right.
    """
    if facing_dir(yaw) == DIR8[d]:
        return [], yaw
    right_target = (45 * d - 20) % 360
    left_target = (45 * d + 20) % 360
    right_n = ((right_target - yaw) % 360) // 5
    left_n = ((yaw - left_target) % 360) // 5
    if right_n <= left_n:
        return [ActionId.TURN_RIGHT] * right_n, right_target
    return [ActionId.TURN_LEFT] * left_n, left_target


def plan_path(world: World, start, to_kind: TileKind, start_yaw=0, start_pond_counter=0):
    """Tick-optimal route to the cave, expanded to tick-level actions.

    Search runs over (cell, facing) states: a 45-degree turn costs 9 ticks
    (9 five-degree actions), a forward move costs 1, a move off a pond
    costs 3 (the pond gate eats two attempts), and edges onto a step block
    are jump edges. Minimizing ticks rather than cells keeps demos walking
    straight instead of stair-stepping through diagonals. The goal is any
    (cell, facing) from which ending works: a cave tile within three cells
    straight ahead. The expansion replays pond-gate attempts exactly.
    """
    import heapq

    if to_kind is not TileKind.CAVE:
        raise ValueError("only cave routes are planned")
    if world.tile(*start) is TileKind.WALL:
        raise Unreachable(f"start {start} is inside a wall")

    def end_dir_at(cell, d):
        x, y = cell
        dx, dy = DIR8[d]
        return any(
            world.tile(x + k * dx, y + k * dy) is TileKind.CAVE for k in (1, 2, 3)
        )

    start_state = (start, DIR8.index(facing_dir(start_yaw)))
    dist = {start_state: 0}
    prev = {}
    counter = 0
    heap = [(0, counter, start_state)]
    goal_state = None
    while heap:
        cost, _n, state = heapq.heappop(heap)
        if cost > dist.get(state, float("inf")):
            continue
        cell, d = state
        if end_dir_at(cell, d):
            goal_state = state
            break
        x, y = cell
        moves = []
        for nd in ((d - 1) % 8, (d + 1) % 8):
            moves.append(((cell, nd), 9))
        dx, dy = DIR8[d]
        nxt = (x + dx, y + dy)
        if world.tile(*nxt) is not TileKind.WALL:
            step_cost = 3 if world.tile(x, y) is TileKind.POND else 1
            moves.append(((nxt, d), step_cost))
        for nstate, c in moves:
            ncost = cost + c
            if ncost < dist.get(nstate, float("inf")):
                dist[nstate] = ncost
                prev[nstate] = state
                counter += 1
                heapq.heappush(heap, (ncost, counter, nstate))
    if goal_state is None:
        raise Unreachable(f"no route from {start} to {to_kind.name}")

    states = [goal_state]
    while states[-1] in prev:
        states.append(prev[states[-1]])
    states.reverse()

    actions = []
    yaw = start_yaw
    pond_counter = start_pond_counter
    for here, there in zip(states, states[1:]):
        (cell_a, da), (cell_b, db) = here, there
        if cell_a == cell_b:
            turns, yaw = _turns_to_dir(yaw, db)
            actions.extend(turns)
            if turns:
                pond_counter = 0
            continue
        move = (
            ActionId.JUMP_FORWARD
            if world.tile(*cell_b) is TileKind.STEP
            else ActionId.FORWARD
        )
        if world.tile(*cell_a) is TileKind.POND:
            actions.extend([move] * (3 - pond_counter))
        else:
            actions.append(move)
        pond_counter = 0
    actions.append(ActionId.END_EPISODE)
    return actions


class ExpertAgent:
    """Map-aware supervisor; see the module docstring for the behaviour."""

    def __init__(
        self,
        world: World,
        stuck_ticks: int = DEFAULT_STUCK_TICKS,
        pitch_threshold: int = DEFAULT_PITCH_TAKEOVER_DEG,
        release_ticks: int = DEFAULT_RELEASE_TICKS,
    ):
        self.world = world
        self.stuck_ticks = stuck_ticks
        self.pitch_threshold = pitch_threshold
        self.release_ticks = release_ticks
        self.has_control = False
        self._queue = deque()
        self._plan = deque()
        self._clean_ticks = 0   # consecutive plan-following ticks
        self._macro_spent = False

    # -- gating ---------------------------------------------------------

    def _window_stuck(self, window):
        """window: recent (intended_move, moved) pairs, oldest first."""
        if len(window) < self.stuck_ticks:
            return False
        tail = list(window)[-self.stuck_ticks:]
        return all(intended and not moved for intended, moved in tail)

    def should_takeover(self, window, state: EnvState) -> bool:
        if self.has_control:
            return False
        return self._window_stuck(window) or abs(state.pitch) >= self.pitch_threshold

    def should_release(self, window, state: EnvState) -> bool:
        if not self.has_control:
            return False
        if state.pitch != 0 or self._queue or self._window_stuck(window):
            return False
        return self._clean_ticks >= self.release_ticks

    def take_control(self):
        self.has_control = True
        self._queue.clear()
        self._plan.clear()
        self._clean_ticks = 0
        self._macro_spent = False

    def release_control(self):
        self.has_control = False
        self._queue.clear()
        self._plan.clear()
        self._clean_ticks = 0

    # -- acting ---------------------------------------------------------

    def expert_action(self, state: EnvState) -> ActionId:
        if not self.has_control:
            raise NotInControl("supervisor asked to act without control")
        if state.pitch != 0:
            self._plan.clear()
            self._clean_ticks = 0
            return ActionId.PITCH_DOWN if state.pitch > 0 else ActionId.PITCH_UP
        if self._queue:
            self._clean_ticks = 0
            return self._queue.popleft()
        if not self._plan:
            x, y = state.position
            fx, fy = facing_dir(state.yaw)
            ahead = self.world.tile(x + fx, y + fy)
            if ahead is TileKind.WALL and not self._macro_spent:
                # once per stint; afterwards route planning turns us instead
                self._macro_spent = True
                self._queue.extend([ActionId.TURN_RIGHT] * WALL_MACRO_TURNS)
                self._clean_ticks = 0
                return self._queue.popleft()
            if ahead is TileKind.STEP:
                self._clean_ticks = 0
                return ActionId.JUMP_FORWARD
            self._plan.extend(
                plan_path(self.world, state.position, TileKind.CAVE,
                          start_yaw=state.yaw, start_pond_counter=state.pond_counter)
            )
        self._clean_ticks += 1
        return self._plan.popleft()


def demonstrate(world: World, seed: int, max_ticks=None):
    """Full expert rollout from spawn.

    Yields (state_before, obs_before, action, result, state_after) per
    tick, so callers see both the decision context and its outcome; the
    final tuple carries the terminal result. Used for dataset generation
    and map validation.
    """
    env = CaveGrid(world) if max_ticks is None else CaveGrid(world, max_ticks=max_ticks)
    agent = ExpertAgent(world)
    agent.has_control = True
    agent._macro_spent = True  # demos follow routes; the spin is recovery-only
    state, obs = env.reset(seed)
    while not env.is_terminal(state):
        action = agent.expert_action(state)
        next_state, result = env.step(state, action)
        yield state, obs, action, result, next_state
        state, obs = next_state, result.observation
        if result.terminated:
            return
