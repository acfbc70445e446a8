"""Per-tick episode records and their JSON-lines file format.

One log file = one header line {"map", "seed", ...} followed by one object
per tick: {"t", "a", "moved", "im", "pitch", "x", "y", "ctl"}. "im" is
whether the action attempted a position change, "ctl" is "N" (novice) or
"E" (expert). A "success" key in the header and an optional per-tick
"lbl" key (training label, when it differs from the executed action) are
written by this package; readers ignore unknown keys, so files without
them load fine.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

NOVICE = "N"
EXPERT = "E"


@dataclass(frozen=True)
class TickEntry:
    tick: int
    action: int
    moved: bool
    intended_move: bool
    pitch: int
    position: tuple
    control_owner: str  # NOVICE or EXPERT


@dataclass
class EpisodeRecord:
    map_id: str
    seed: int
    entries: list = field(default_factory=list)
    success: bool | None = None

    def append(self, entry: TickEntry) -> None:
        if self.entries and entry.tick != self.entries[-1].tick + 1:
            raise ValueError("ticks must increase by 1")
        if not self.entries and entry.tick != 0:
            raise ValueError("first tick must be 0")
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)


def save_episode_log(record: EpisodeRecord, path: str, labels=None) -> None:
    """labels: optional per-tick training labels; only mismatches with the
    executed action are written (as "lbl")."""
    if labels is not None and len(labels) != len(record.entries):
        raise ValueError("labels length must match entry count")
    with open(path, "w", encoding="utf-8") as fh:
        header = {"map": record.map_id, "seed": record.seed}
        if record.success is not None:
            header["success"] = record.success
        fh.write(json.dumps(header) + "\n")
        for i, e in enumerate(record.entries):
            obj = {
                "t": e.tick,
                "a": int(e.action),
                "moved": e.moved,
                "im": e.intended_move,
                "pitch": e.pitch,
                "x": e.position[0],
                "y": e.position[1],
                "ctl": e.control_owner,
            }
            if labels is not None and int(labels[i]) != int(e.action):
                obj["lbl"] = int(labels[i])
            fh.write(json.dumps(obj) + "\n")


def load_episode_log(path: str):
    """Returns (EpisodeRecord, labels). labels is the executed action where
    no "lbl" override was stored."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"empty episode log {path}")
    header = json.loads(lines[0])
    record = EpisodeRecord(
        map_id=header["map"], seed=header["seed"], success=header.get("success")
    )
    labels = []
    for line in lines[1:]:
        obj = json.loads(line)
        record.append(TickEntry(
            tick=obj["t"],
            action=obj["a"],
            moved=obj["moved"],
            intended_move=obj["im"],
            pitch=obj["pitch"],
            position=(obj["x"], obj["y"]),
            control_owner=obj["ctl"],
        ))
        labels.append(obj.get("lbl", obj["a"]))
    return record, labels
