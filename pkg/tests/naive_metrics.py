"""Brute-force re-scan implementations of the streaming detectors, plus a
randomized episode generator. Deliberately quadratic and structured nothing
like the single-pass production code, so agreement between the two is
evidence rather than tautology."""
import numpy as np

from cavebench.metrics import (
    BLINDED_THRESHOLDS,
    COLLISION_FLOOR_TICKS,
    SEVERITY_BUCKETS,
    TICKS_PER_SECOND,
)
from cavebench.records import EXPERT, NOVICE, EpisodeRecord, TickEntry


def _blocked(entry):
    return entry.intended_move and not entry.moved


def naive_collision_events(rec):
    """Every (i, j) span is tested for being a maximal blocked run."""
    out = []
    n = len(rec.entries)
    for i in range(n):
        for j in range(i, n):
            span = rec.entries[i : j + 1]
            if not all(_blocked(e) for e in span):
                continue
            left_open = i == 0 or not _blocked(rec.entries[i - 1])
            right_open = j == n - 1 or not _blocked(rec.entries[j + 1])
            if left_open and right_open and len(span) >= COLLISION_FLOOR_TICKS:
                out.append((rec.entries[i].tick, len(span)))
    return out


def naive_severity_histogram(events):
    hist = {}
    for b in SEVERITY_BUCKETS:
        count = 0
        for _start, dur in events:
            s = dur / TICKS_PER_SECOND
            eligible = [bb for bb in SEVERITY_BUCKETS if bb <= s]
            if eligible and max(eligible) == b:
                count += 1
        hist[b] = count
    return hist


def naive_blinded(rec, thresholds=BLINDED_THRESHOLDS):
    counts = {}
    for t in thresholds:
        c = 0
        for i, e in enumerate(rec.entries):
            prev = abs(rec.entries[i - 1].pitch) if i > 0 else 0
            if prev < t <= abs(e.pitch):
                c += 1
        counts[t] = c
    return counts


def naive_uptime(rec):
    return len(rec.entries) - sum(dur for _start, dur in naive_collision_events(rec))


def synthetic_record(rng: np.random.Generator, length=None) -> EpisodeRecord:
    """Random episode with realistic structure: alternating clean and
    blocked segments of varied lengths (some under and some over the event
    floor) and a clamped 5-degree pitch walk."""
    if length is None:
        length = int(rng.integers(40, 201))
    rec = EpisodeRecord(map_id=f"synthetic:{rng.integers(1 << 30)}",
                        seed=int(rng.integers(1 << 30)),
                        success=bool(rng.integers(2)))
    pitch = 0
    tick = 0
    x, y = int(rng.integers(1, 20)), int(rng.integers(1, 20))
    while tick < length:
        blocked = bool(rng.integers(2))
        seg = int(rng.integers(1, 26))
        for _ in range(min(seg, length - tick)):
            pitch = int(np.clip(pitch + 5 * int(rng.integers(-1, 2)), -90, 90))
            if blocked:
                intended, moved = True, False
            else:
                # clean ticks mix real moves, turns, and settled pushes
                intended = bool(rng.integers(2))
                moved = intended
                if moved:
                    x += int(rng.integers(-1, 2))
                    y += int(rng.integers(-1, 2))
            rec.append(TickEntry(
                tick=tick,
                action=int(rng.integers(9)),
                moved=moved,
                intended_move=intended,
                pitch=pitch,
                position=(x, y),
                control_owner=NOVICE if rng.integers(2) else EXPERT,
            ))
            tick += 1
    return rec
