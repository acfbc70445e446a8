"""Transition stores and the baseline dataset generator.

A Dataset is an immutable chain of blocks; merge() returns a new Dataset
sharing the old blocks, so the original is provably untouched and remains
an exact prefix. Per-transition source tags record how each label was
produced: demonstration, relabeling by a frozen policy, or supervisor
correction.

The baseline generator deliberately leaves capability gaps: training maps
may contain no step blocks or ponds, and the demonstrator never touches
the camera pitch, so jumping and camera recovery are absent from the
data. Label noise replaces a seeded fraction of stored labels with a
uniform draw over the full action set; executed actions are unaffected.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .env import NUM_ACTIONS, OBS_DIM, CaveGrid, TileKind
from .records import EXPERT, EpisodeRecord, TickEntry, load_episode_log, save_episode_log


class DatasetIntegrityError(ValueError):
    """A stored dataset does not rebuild to its recorded digest."""


class MapContainsHazard(Exception):
    """A training map holds a STEP or POND tile, violating the gap rule."""


class Source(IntEnum):
    DEMO = 0        # scripted demonstrator rollout
    RELABELED = 1   # novice-visited state relabeled by a frozen policy
    CORRECTION = 2  # recorded while a supervisor held control


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    source: Source


@dataclass
class Trajectory:
    observations: np.ndarray  # (n, OBS_DIM) float64
    actions: np.ndarray       # (n,) int64
    source: Source
    map_id: str = ""
    seed: int = 0

    @classmethod
    def from_pairs(cls, pairs, source, map_id="", seed=0):
        if pairs:
            obs = np.stack([np.asarray(o, dtype=np.float64) for o, _ in pairs])
            act = np.array([int(a) for _, a in pairs], dtype=np.int64)
        else:
            obs = np.empty((0, OBS_DIM), dtype=np.float64)
            act = np.empty((0,), dtype=np.int64)
        return cls(observations=obs, actions=act, source=source,
                   map_id=map_id, seed=seed)

    def __len__(self):
        return len(self.actions)


class Dataset:
    """Append-only transition store. Instances are immutable; merge()
    builds a new instance that shares this one's blocks."""

    def __init__(self, blocks=()):
        self._blocks = tuple(blocks)
        self._cache = None

    def __len__(self):
        return sum(len(a) for _o, a, _s in self._blocks)

    def matrices(self):
        """(observations, actions) as single arrays; cached per instance."""
        if self._cache is None:
            if not self._blocks:
                self._cache = (
                    np.empty((0, OBS_DIM), dtype=np.float64),
                    np.empty((0,), dtype=np.int64),
                )
            else:
                self._cache = (
                    np.concatenate([o for o, _a, _s in self._blocks]),
                    np.concatenate([a for _o, a, _s in self._blocks]),
                )
        return self._cache

    def source_tags(self):
        if not self._blocks:
            return np.empty((0,), dtype=np.int64)
        return np.concatenate([s for _o, _a, s in self._blocks])

    def transitions(self):
        obs, actions = self.matrices()
        tags = self.source_tags()
        for i in range(len(actions)):
            yield Transition(obs[i], int(actions[i]), Source(int(tags[i])))

    def prefix(self, n):
        """First n transitions as arrays, for prefix comparisons."""
        obs, actions = self.matrices()
        return obs[:n], actions[:n], self.source_tags()[:n]


def empty_dataset() -> Dataset:
    return Dataset()


def merge(d: Dataset, d_new: Trajectory) -> Dataset:
    if len(d_new) == 0:
        return d
    block = (
        np.ascontiguousarray(d_new.observations, dtype=np.float64),
        np.asarray(d_new.actions, dtype=np.int64),
        np.full(len(d_new), int(d_new.source), dtype=np.int64),
    )
    return Dataset(d._blocks + (block,))


def from_trajectories(trajectories) -> Dataset:
    d = empty_dataset()
    for t in trajectories:
        d = merge(d, t)
    return d


def checksum(d: Dataset) -> str:
    """Order-sensitive digest over (observation bytes, action, source)."""
    h = hashlib.sha256()
    for o_block, a_block, s_block in d._blocks:
        o_le = np.ascontiguousarray(o_block, dtype="<f8")
        for i in range(len(a_block)):
            h.update(o_le[i].tobytes())
            h.update(bytes([int(a_block[i]) & 0xFF]))
            h.update(bytes([int(s_block[i]) & 0xFF]))
    return h.hexdigest()


def _check_no_hazards(worlds):
    for map_id, world in worlds:
        for row in world.tiles:
            for tile in row:
                if tile in (TileKind.STEP, TileKind.POND):
                    raise MapContainsHazard(
                        f"training map {map_id} contains {tile.name}"
                    )


def generate_bc_dataset(worlds=None, games=50, noise_rate=0.05, seed=13):
    """Demonstrator rollouts over the training maps, cycled game by game.

    Returns (Dataset, episodes) where episodes is a list of
    (EpisodeRecord, labels) pairs carrying exactly what save_dataset_dir
    persists. Labels equal executed actions except where noise hit.
    """
    from .expert import demonstrate  # deferred: expert imports env only

    if worlds is None:
        from .maps import training_worlds
        worlds = training_worlds()
    _check_no_hazards(worlds)

    rng = np.random.default_rng(seed)
    dataset = empty_dataset()
    episodes = []
    for game in range(games):
        map_id, world = worlds[game % len(worlds)]
        record = EpisodeRecord(map_id=map_id, seed=game)
        pairs = []
        labels = []
        for state, obs, action, result, after in demonstrate(world, seed=game):
            label = int(action)
            if noise_rate > 0 and rng.random() < noise_rate:
                label = int(rng.integers(0, NUM_ACTIONS))
            pairs.append((obs.vector, label))
            labels.append(label)
            record.append(TickEntry(
                tick=state.tick,
                action=int(action),
                moved=result.moved,
                intended_move=result.intended_move,
                pitch=after.pitch,
                position=after.position,
                control_owner=EXPERT,
            ))
            record.success = result.success
        dataset = merge(dataset, Trajectory.from_pairs(
            pairs, Source.DEMO, map_id=map_id, seed=game))
        episodes.append((record, labels))
    return dataset, episodes


def save_dataset_dir(path, dataset, episodes, extra_meta=None):
    """One episode-log file per game plus a manifest with per-episode
    provenance and the dataset digest (re-verified by replay on load)."""
    os.makedirs(path, exist_ok=True)
    entries = []
    for i, (record, labels) in enumerate(episodes):
        fname = f"game_{i:03d}.jsonl"
        save_episode_log(record, os.path.join(path, fname), labels=labels)
        entries.append({
            "file": fname,
            "map": record.map_id,
            "seed": record.seed,
            "source": int(Source.DEMO),
            "transitions": len(record),
        })
    manifest = {
        "episodes": entries,
        "transitions": len(dataset),
        "digest": checksum(dataset),
    }
    if extra_meta:
        manifest.update(extra_meta)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def save_dataset_raw(path, dataset, extra_meta=None):
    """Flat array dump (obs/actions/sources as .npy plus meta.json) for
    datasets that cannot be rebuilt from episode replays, like aggregates
    holding relabeled or gated transitions."""
    os.makedirs(path, exist_ok=True)
    obs, actions = dataset.matrices()
    np.save(os.path.join(path, "observations.npy"), obs)
    np.save(os.path.join(path, "actions.npy"), actions)
    np.save(os.path.join(path, "sources.npy"), dataset.source_tags())
    meta = {"transitions": len(dataset), "digest": checksum(dataset)}
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def load_dataset_raw(path):
    """Returns (Dataset, meta); verifies the stored digest."""
    obs = np.load(os.path.join(path, "observations.npy"))
    actions = np.load(os.path.join(path, "actions.npy"))
    sources = np.load(os.path.join(path, "sources.npy"))
    with open(os.path.join(path, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    dataset = Dataset([(obs, actions, sources)]) if len(actions) else Dataset()
    digest = checksum(dataset)
    if digest != meta["digest"]:
        raise DatasetIntegrityError(
            f"raw dataset digest mismatch: meta {meta['digest']}, loaded {digest}"
        )
    return dataset, meta


def _rebuild(episodes):
    """Dataset from (record, labels) pairs by replaying actions in the
    environment to regenerate observations."""
    from .maps import get_world

    dataset = empty_dataset()
    for record, labels in episodes:
        world = get_world(record.map_id)
        env = CaveGrid(world, max_ticks=max(len(record), 1))
        state, obs = env.reset(record.seed)
        pairs = []
        for entry, label in zip(record.entries, labels):
            pairs.append((obs.vector, int(label)))
            state, result = env.step(state, entry.action)
            obs = result.observation
        dataset = merge(dataset, Trajectory.from_pairs(
            pairs, Source.DEMO, map_id=record.map_id, seed=record.seed))
    return dataset


def load_dataset_dir(path):
    """Returns (Dataset, manifest). Raises ValueError when the rebuilt
    digest does not match the manifest."""
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    episodes = []
    for entry in manifest["episodes"]:
        record, labels = load_episode_log(os.path.join(path, entry["file"]))
        episodes.append((record, labels))
    dataset = _rebuild(episodes)
    digest = checksum(dataset)
    if digest != manifest["digest"]:
        raise DatasetIntegrityError(
            f"dataset digest mismatch: manifest {manifest['digest']}, rebuilt {digest}"
        )
    return dataset, manifest
