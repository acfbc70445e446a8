"""Episode runners: plain rollouts, gated novice/supervisor rollouts, and
rollouts started from an arbitrary pose (used by the probe scorer)."""
from __future__ import annotations

from collections import deque

from .env import ActionId, CaveGrid, EnvState, World
from .expert import ExpertAgent
from .policy import PolicyParams, act
from .records import EXPERT, NOVICE, EpisodeRecord, TickEntry


def policy_controller(params: PolicyParams):
    def controller(state, obs, env):
        return act(params, obs)
    return controller


def expert_controller(agent: ExpertAgent):
    def controller(state, obs, env):
        return agent.expert_action(state)
    return controller


def run_episode(world: World, controller, seed: int, map_id: str,
                max_ticks=None, owner=NOVICE, collect=False):
    """Roll one episode from spawn under a single controller.

    Returns (EpisodeRecord, transitions) where transitions is a list of
    (observation vector, action) pairs when collect is set, else empty.
    """
    env = CaveGrid(world) if max_ticks is None else CaveGrid(world, max_ticks=max_ticks)
    state, obs = env.reset(seed)
    record = EpisodeRecord(map_id=map_id, seed=seed)
    transitions = []
    while not env.is_terminal(state):
        action = controller(state, obs, env)
        if collect:
            transitions.append((obs.vector, action))
        next_state, result = env.step(state, action)
        record.append(TickEntry(
            tick=state.tick,
            action=int(action),
            moved=result.moved,
            intended_move=result.intended_move,
            pitch=next_state.pitch,
            position=next_state.position,
            control_owner=owner,
        ))
        state, obs = next_state, result.observation
        if result.terminated:
            record.success = result.success
            break
    if record.success is None:
        record.success = False
    return record, transitions


def run_from_pose(world: World, controller, position, yaw=0, pitch=0,
                  prev_action=ActionId.FORWARD, ticks=40, map_id="pose"):
    """Roll from a mid-episode pose rather than the spawn. Used to build
    probe reference trajectories. Returns the action list (may be shorter
    than requested when the controller ends the episode)."""
    env = CaveGrid(world, max_ticks=ticks)
    state = EnvState(position=tuple(position), yaw=yaw, pitch=pitch, tick=0,
                     pond_counter=0, previous_action=prev_action, rng_seed=0)
    obs = env.observe(state)
    actions = []
    while not env.is_terminal(state) and len(actions) < ticks:
        action = controller(state, obs, env)
        actions.append(action)
        state, result = env.step(state, action)
        obs = result.observation
        if result.terminated:
            break
    return actions


class GatedRollout:
    """One novice episode supervised by an ExpertAgent.

    Control changes hands only at tick boundaries: release is evaluated
    before takeover, so at most one handover happens per tick. Callbacks:
    on_takeover(tick), on_expert_tick(obs_vector, action),
    on_release(partial) - partial is True when the episode ended while the
    supervisor still held control.
    """

    def __init__(self, world, map_id, agent: ExpertAgent, max_ticks=None):
        self.world = world
        self.map_id = map_id
        self.agent = agent
        self.max_ticks = max_ticks

    def run(self, params, seed: int,
            on_takeover=None, on_expert_tick=None, on_release=None):
        """params: a PolicyParams, or a zero-argument callable returning
        one (so corrections applied mid-episode drive the next tick)."""
        get_params = params if callable(params) else (lambda: params)
        env = (CaveGrid(self.world) if self.max_ticks is None
               else CaveGrid(self.world, max_ticks=self.max_ticks))
        agent = self.agent
        state, obs = env.reset(seed)
        record = EpisodeRecord(map_id=self.map_id, seed=seed)
        window = deque(maxlen=agent.stuck_ticks)
        while not env.is_terminal(state):
            if agent.has_control and agent.should_release(window, state):
                agent.release_control()
                if on_release:
                    on_release(False)
            elif not agent.has_control and agent.should_takeover(window, state):
                agent.take_control()
                if on_takeover:
                    on_takeover(state.tick)
            if agent.has_control:
                action = agent.expert_action(state)
                if on_expert_tick:
                    on_expert_tick(obs.vector, action)
                owner = EXPERT
            else:
                action = act(get_params(), obs)
                owner = NOVICE
            next_state, result = env.step(state, action)
            record.append(TickEntry(
                tick=state.tick,
                action=int(action),
                moved=result.moved,
                intended_move=result.intended_move,
                pitch=next_state.pitch,
                position=next_state.position,
                control_owner=owner,
            ))
            window.append((result.intended_move, result.moved))
            state, obs = next_state, result.observation
            if result.terminated:
                record.success = result.success
                break
        if record.success is None:
            record.success = False
        if agent.has_control:
            agent.release_control()
            if on_release:
                on_release(True)
        return record
