"""The four training regimes.

- train_bc: plain supervised learning over a fixed dataset.
- run_dagger: novice rollouts relabeled by the frozen baseline policy,
  merged into the aggregate set, 5 epochs per iteration.
- run_hg_dagger: gated rollouts; only supervisor-driven ticks are
  recorded, merged, re-trained; a doubt log tracks takeover moments.
- run_hdd: gated rollouts where each supervisor stint becomes a one-off
  correction batch, trained on the spot (the simulation clock pauses) and
  discarded. The baseline dataset is never read or written here.

All loops are deterministic given their configs: rollouts use argmax
policies, shuffles use seeded generators, and per-iteration shuffle seeds
are derived from the config seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import policy as P
from .data import Dataset, Source, Trajectory, merge
from .expert import ExpertAgent
from .records import EpisodeRecord
from .rollout import GatedRollout, run_episode


class EmptyDataset(Exception):
    """Training was asked to run over zero transitions."""


class EmptyCorrection(Exception):
    """A correction step received an empty buffer."""


class EmptyRollout(Exception):
    """A fine-tuning game produced zero ticks (degenerate map or cap)."""


@dataclass
class TrainConfig:
    epochs: int = 150
    minibatch_size: int = 64
    learning_rate: float = 1e-3
    shuffle_seed: int = 0


@dataclass
class FinetuneConfig:
    iterations: int = 15            # merge-and-retrain rounds (one game each)
    epochs_per_iteration: int = 5
    games: int = 58                 # correction-regime game count
    # correction aggressiveness balances two failure modes: too strong and
    # late turn-heavy stints erase the jump response, too weak and the wall
    # recovery never sticks, so games keep producing takeovers past budget
    correction_passes: int = 3
    correction_learning_rate: float = 1.5e-3
    minibatch_size: int = 64
    learning_rate: float = 1e-3
    shuffle_seed: int = 0
    seed_base: int = 500            # rollout seeds: seed_base + game index
    # per-game tick caps, sized so every regime adds roughly 10% of the
    # baseline dataset (the budget the comparisons assume)
    relabel_game_ticks: int = 72
    gated_game_ticks: int = 300
    correction_game_ticks: int = 240


@dataclass
class HgDaggerState:
    doubt_log: list = field(default_factory=list)  # (tick, rollout index)
    risk_threshold: float = 0.0

    def record_doubt(self, tick, rollout_index):
        self.doubt_log.append((tick, rollout_index))


@dataclass
class CorrectionResult:
    sample_count: int
    loss_before: float
    loss_after: float


class TrainLog:
    """JSON-lines training log; a None path makes it a no-op."""

    def __init__(self, path=None):
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, **fields):
        if self._fh:
            self._fh.write(json.dumps(fields) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def train_bc(params, dataset: Dataset, cfg: TrainConfig, log: TrainLog | None = None):
    """Returns (params, loss_curve); loss_curve holds per-epoch mean loss."""
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    X, y = dataset.matrices()
    rng = np.random.default_rng(cfg.shuffle_seed)
    params = params.copy()
    opt = P.init_opt_state(params, learning_rate=cfg.learning_rate)
    curve = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            batch = P.Batch(observations=X[idx], labels=y[idx])
            loss, grads = P.loss_and_grad(params, batch)
            params, opt = P.optimizer_step(params, grads, opt)
            total += loss * len(idx)
        curve.append(total / n)
        if log:
            log.write(event="epoch", epoch=epoch, loss=curve[-1])
    return params, curve


def _train_epochs(params, dataset, cfg: FinetuneConfig, epochs, shuffle_seed, log):
    sub = TrainConfig(
        epochs=epochs,
        minibatch_size=cfg.minibatch_size,
        learning_rate=cfg.learning_rate,
        shuffle_seed=shuffle_seed,
    )
    return train_bc(params, dataset, sub, log=log)


def run_dagger(params, frozen_bc, dataset: Dataset, worlds, cfg: FinetuneConfig,
               log: TrainLog | None = None):
    """Relabeling fine-tune. Returns (params, dataset, records)."""
    params = params.copy()
    records = []
    for i in range(cfg.iterations):
        map_id, world = worlds[i % len(worlds)]
        record, transitions = run_episode(
            world, _argmax_controller(params), seed=cfg.seed_base + i,
            map_id=map_id, max_ticks=cfg.relabel_game_ticks, collect=True,
        )
        if not record.entries:
            raise EmptyRollout(f"game {i} on {map_id} produced zero ticks")
        records.append(record)
        relabeled = [(obs, P.act(frozen_bc, obs)) for obs, _a in transitions]
        traj = Trajectory.from_pairs(relabeled, Source.RELABELED,
                                     map_id=map_id, seed=cfg.seed_base + i)
        dataset = merge(dataset, traj)
        params, curve = _train_epochs(
            params, dataset, cfg, cfg.epochs_per_iteration,
            shuffle_seed=cfg.shuffle_seed + i + 1, log=None,
        )
        if log:
            log.write(event="iteration", iteration=i, added=len(traj),
                      dataset_size=len(dataset), losses=curve)
    return params, dataset, records


def _argmax_controller(params):
    def controller(state, obs, env):
        return P.act(params, obs)
    return controller


def run_hg_dagger(params, expert_factory, dataset: Dataset, worlds,
                  cfg: FinetuneConfig, log: TrainLog | None = None):
    """Gated aggregation fine-tune.

    expert_factory: world -> ExpertAgent (fresh supervisor per game).
    Returns (params, risk_threshold, HgDaggerState, dataset, records).
    """
    params = params.copy()
    state = HgDaggerState()
    records = []
    for i in range(cfg.iterations):
        map_id, world = worlds[i % len(worlds)]
        agent = expert_factory(world)
        collected = []
        gated = GatedRollout(world, map_id, agent, max_ticks=cfg.gated_game_ticks)
        record = gated.run(
            params, seed=cfg.seed_base + i,
            on_takeover=lambda tick, _i=i: state.record_doubt(tick, _i),
            on_expert_tick=lambda obs, action: collected.append((obs, action)),
        )
        if not record.entries:
            raise EmptyRollout(f"game {i} on {map_id} produced zero ticks")
        records.append(record)
        traj = Trajectory.from_pairs(collected, Source.CORRECTION,
                                     map_id=map_id, seed=cfg.seed_base + i)
        dataset = merge(dataset, traj)
        params, curve = _train_epochs(
            params, dataset, cfg, cfg.epochs_per_iteration,
            shuffle_seed=cfg.shuffle_seed + i + 1, log=None,
        )
        if log:
            log.write(event="iteration", iteration=i, added=len(traj),
                      dataset_size=len(dataset), losses=curve,
                      takeovers=sum(1 for _t, j in state.doubt_log if j == i))
    state.risk_threshold = len(state.doubt_log) / cfg.iterations
    if log:
        log.write(event="risk_threshold", value=state.risk_threshold)
    return params, state.risk_threshold, state, dataset, records


def correction_step(params, d_exp: Trajectory, cfg: FinetuneConfig):
    """Full-batch passes over one correction buffer; fresh optimizer state
    per call. Returns (params, CorrectionResult)."""
    if len(d_exp) == 0:
        raise EmptyCorrection("empty correction buffer")
    if d_exp.source is not Source.CORRECTION:
        raise ValueError("correction buffers must be tagged as corrections")
    batch = P.Batch(observations=d_exp.observations, labels=d_exp.actions)
    loss_before, _ = P.loss_and_grad(params, batch)
    params = params.copy()
    opt = P.init_opt_state(params, learning_rate=cfg.correction_learning_rate)
    for _ in range(cfg.correction_passes):
        _loss, grads = P.loss_and_grad(params, batch)
        params, opt = P.optimizer_step(params, grads, opt)
    loss_after, _ = P.loss_and_grad(params, batch)
    return params, CorrectionResult(
        sample_count=len(d_exp),
        loss_before=float(loss_before),
        loss_after=float(loss_after),
    )


def run_hdd(params, expert_factory, worlds, cfg: FinetuneConfig,
            log: TrainLog | None = None):
    """Correction-only fine-tune over cfg.games games.

    No dataset parameter on purpose: this regime trains on transient
    buffers that die with their stint. Returns (params, corrections,
    records) where corrections is every CorrectionResult in order.
    """
    current = {"params": params.copy()}
    corrections = []
    records = []
    for i in range(cfg.games):
        map_id, world = worlds[i % len(worlds)]
        agent = expert_factory(world)
        buffer = []

        def on_expert_tick(obs, action):
            buffer.append((obs, action))

        def on_release(partial, _map_id=map_id, _i=i):
            if not buffer:
                return
            traj = Trajectory.from_pairs(buffer, Source.CORRECTION,
                                         map_id=_map_id, seed=cfg.seed_base + _i)
            new_params, result = correction_step(current["params"], traj, cfg)
            current["params"] = new_params
            corrections.append(result)
            buffer.clear()
            if log:
                log.write(event="correction", game=_i, n=result.sample_count,
                          loss_before=result.loss_before,
                          loss_after=result.loss_after, partial=partial)

        gated = GatedRollout(world, map_id, agent, max_ticks=cfg.correction_game_ticks)
        record = gated.run(
            lambda: current["params"], seed=cfg.seed_base + i,
            on_expert_tick=on_expert_tick,
            on_release=on_release,
        )
        if not record.entries:
            raise EmptyRollout(f"game {i} on {map_id} produced zero ticks")
        records.append(record)
    return current["params"], corrections, records
