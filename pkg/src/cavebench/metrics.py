"""Evaluation metrics: collision events and severity, blindness counts,
uptime, probe similarity, and per-agent report assembly.

Definitions (all over per-tick episode records):
- collision event: a maximal run of ticks with intended_move and not
  moved, at least 10 ticks (5 s) long; an open run closes at episode end;
- severity buckets, in seconds: b <= duration < next(b) over
  {5,10,20,30,45,60,90,120,150}, the last open-ended;
- blinded count at threshold t: rising edges of |pitch| across t, with
  the pre-episode pitch defined as 0;
- uptime: episode ticks minus ticks inside collision events.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .env import ActionId
from .records import EpisodeRecord

SEVERITY_BUCKETS = (5, 10, 20, 30, 45, 60, 90, 120, 150)
BLINDED_THRESHOLDS = tuple(range(5, 95, 5))
COLLISION_FLOOR_TICKS = 10
TICKS_PER_SECOND = 2

PROBE_KINDS = ("STEP_PROBE", "WALL_PROBE")


class MismatchedSeeds(Exception):
    """Agents under comparison were evaluated on different (map, seed) sets."""


class ProbeUnreached(Exception):
    """The agent never reached the probe's obstacle cell. Raised only by
    single-instance helpers; the batch scorer records a zero instead."""


@dataclass(frozen=True)
class CollisionEvent:
    start_tick: int
    duration_ticks: int

    @property
    def duration_seconds(self) -> float:
        return self.duration_ticks / TICKS_PER_SECOND


def detect_collisions(rec: EpisodeRecord):
    """Single pass; maximal blocked runs at or above the 10-tick floor."""
    events = []
    run_start = None
    run_len = 0
    for e in rec.entries:
        if e.intended_move and not e.moved:
            if run_start is None:
                run_start = e.tick
                run_len = 0
            run_len += 1
        else:
            if run_start is not None and run_len >= COLLISION_FLOOR_TICKS:
                events.append(CollisionEvent(run_start, run_len))
            run_start = None
    if run_start is not None and run_len >= COLLISION_FLOOR_TICKS:
        events.append(CollisionEvent(run_start, run_len))
    return events


def severity_histogram(events):
    """bucket -> count; bucket b covers b <= duration_seconds < next(b)."""
    hist = {b: 0 for b in SEVERITY_BUCKETS}
    for ev in events:
        s = ev.duration_seconds
        chosen = None
        for b in SEVERITY_BUCKETS:
            if s >= b:
                chosen = b
        if chosen is not None:
            hist[chosen] += 1
    return hist


def detect_blinded(rec: EpisodeRecord, thresholds=BLINDED_THRESHOLDS):
    """threshold -> rising-edge count, single pass with pitch_{-1} = 0."""
    counts = {t: 0 for t in thresholds}
    prev = 0
    for e in rec.entries:
        cur = abs(e.pitch)
        if cur > prev:
            for t in thresholds:
                if prev < t <= cur:
                    counts[t] += 1
        prev = cur
    return counts


def uptime(rec: EpisodeRecord) -> int:
    return len(rec.entries) - sum(ev.duration_ticks for ev in detect_collisions(rec))


# -- probe similarity ----------------------------------------------------


@dataclass
class ProbeResult:
    kind: str
    score: float
    modal_trace: list          # per-offset modal action id, -1 when no data
    instance_scores: list
    reached: int               # instances that reached the obstacle cell
    reference_len: int


def _expert_pose_controller(world):
    from .expert import ExpertAgent

    agent = ExpertAgent(world)
    agent.take_control()

    def controller(state, obs, env):
        return agent.expert_action(state)

    return controller


def probe_reference(instance, window=40):
    """The supervisor's action sequence from the aligned pose."""
    from .rollout import run_from_pose

    return run_from_pose(
        instance.world,
        _expert_pose_controller(instance.world),
        position=instance.align_cell,
        yaw=instance.align_yaw,
        ticks=window,
    )


def probe_similarity(controller_factory, probe: str, instances=20, window=40,
                     align_start=False, max_ticks=None):
    """Per-tick action agreement with the supervisor reference.

    controller_factory: world -> controller(state, obs, env) -> ActionId.
    Each instance is aligned at the first tick the agent occupies the
    obstacle-adjacent cell; the following `window` actions are compared
    against the reference rolled from that pose. Instances that never
    reach the cell score zero. With align_start the candidate starts at
    the aligned pose itself (used for reference self-checks).
    """
    from .maps import probe_instances
    from .rollout import run_episode, run_from_pose

    specs = probe_instances(probe)[:instances]
    instance_scores = []
    traces = []
    reached = 0
    ref_len_min = window
    for idx, spec in enumerate(specs):
        ref = probe_reference(spec, window=window)
        eff = min(window, len(ref))
        ref_len_min = min(ref_len_min, eff)
        controller = controller_factory(spec.world)
        if align_start:
            actions = run_from_pose(
                spec.world, controller, position=spec.align_cell,
                yaw=spec.align_yaw, ticks=eff,
            )
        else:
            record, _ = run_episode(
                spec.world, controller, seed=idx, map_id=spec.name,
                max_ticks=max_ticks,
            )
            t0 = None
            for k, e in enumerate(record.entries):
                if tuple(e.position) == tuple(spec.align_cell):
                    t0 = k
                    break
            if t0 is None:
                instance_scores.append(0.0)
                traces.append([])
                continue
            actions = [e.action for e in record.entries[t0 + 1 : t0 + 1 + eff]]
        reached += 1
        agree = sum(
            1 for i in range(eff) if i < len(actions) and int(actions[i]) == int(ref[i])
        )
        instance_scores.append(agree / eff if eff else 0.0)
        traces.append([int(a) for a in actions])
    score = sum(instance_scores) / len(instance_scores) if instance_scores else 0.0
    modal = []
    for i in range(window):
        at_i = [tr[i] for tr in traces if len(tr) > i]
        if not at_i:
            modal.append(-1)
            continue
        counts = {}
        for a in at_i:
            counts[a] = counts.get(a, 0) + 1
        best = min(sorted(counts), key=lambda a: (-counts[a], a))
        modal.append(best)
    return ProbeResult(
        kind=probe,
        score=score,
        modal_trace=modal,
        instance_scores=instance_scores,
        reached=reached,
        reference_len=ref_len_min,
    )


def modal_turn_span_degrees(trace):
    """Longest contiguous same-direction turn run in a modal trace, in
    degrees (each entry is one 5-degree action)."""
    best = 0
    run = 0
    prev = None
    for a in trace:
        if a in (int(ActionId.TURN_LEFT), int(ActionId.TURN_RIGHT)) and a == prev:
            run += 1
        elif a in (int(ActionId.TURN_LEFT), int(ActionId.TURN_RIGHT)):
            run = 1
        else:
            run = 0
        prev = a
        best = max(best, run)
    return best * 5


# -- report assembly -----------------------------------------------------


@dataclass
class MetricsReport:
    agent: str
    games: int
    episode_lengths: list
    successes: list
    per_game_histogram: list
    per_game_stuck_seconds: list
    per_game_uptime: list
    per_game_blinded: list
    histogram_total: dict
    blinded_total: dict
    stuck_seconds_total: float
    mean_stuck_seconds: float
    mean_uptime: float
    probe_scores: dict = field(default_factory=dict)
    probe_traces: dict = field(default_factory=dict)

    def to_json_obj(self):
        return {
            "agent": self.agent,
            "games": self.games,
            "episode_lengths": self.episode_lengths,
            "successes": self.successes,
            "per_game_histogram": [
                {str(k): v for k, v in h.items()} for h in self.per_game_histogram
            ],
            "per_game_stuck_seconds": self.per_game_stuck_seconds,
            "per_game_uptime": self.per_game_uptime,
            "per_game_blinded": [
                {str(k): v for k, v in b.items()} for b in self.per_game_blinded
            ],
            "histogram_total": {str(k): v for k, v in self.histogram_total.items()},
            "blinded_total": {str(k): v for k, v in self.blinded_total.items()},
            "stuck_seconds_total": self.stuck_seconds_total,
            "mean_stuck_seconds": self.mean_stuck_seconds,
            "mean_uptime": self.mean_uptime,
            "probe_scores": self.probe_scores,
            "probe_traces": self.probe_traces,
        }


def build_report(records_by_agent: dict):
    """records_by_agent: agent name -> EpisodeRecord list. All agents must
    share the same ordered (map, seed) evaluation set."""
    keys = None
    for agent, records in records_by_agent.items():
        agent_keys = [(r.map_id, r.seed) for r in records]
        if keys is None:
            keys = agent_keys
        elif agent_keys != keys:
            raise MismatchedSeeds(
                f"agent {agent!r} was evaluated on a different (map, seed) set"
            )
    reports = {}
    for agent, records in records_by_agent.items():
        per_hist = []
        per_stuck = []
        per_up = []
        per_blind = []
        lengths = []
        succ = []
        for rec in records:
            events = detect_collisions(rec)
            per_hist.append(severity_histogram(events))
            per_stuck.append(
                sum(ev.duration_ticks for ev in events) / TICKS_PER_SECOND
            )
            per_up.append(uptime(rec))
            per_blind.append(detect_blinded(rec))
            lengths.append(len(rec.entries))
            succ.append(bool(rec.success))
        hist_total = {b: sum(h[b] for h in per_hist) for b in SEVERITY_BUCKETS}
        blind_total = {
            t: sum(b[t] for b in per_blind) for t in BLINDED_THRESHOLDS
        }
        n = max(len(records), 1)
        reports[agent] = MetricsReport(
            agent=agent,
            games=len(records),
            episode_lengths=lengths,
            successes=succ,
            per_game_histogram=per_hist,
            per_game_stuck_seconds=per_stuck,
            per_game_uptime=per_up,
            per_game_blinded=per_blind,
            histogram_total=hist_total,
            blinded_total=blind_total,
            stuck_seconds_total=float(sum(per_stuck)),
            mean_stuck_seconds=float(sum(per_stuck)) / n,
            mean_uptime=float(sum(per_up)) / n,
        )
    return reports


def write_report(reports: dict, path: str, extra=None) -> None:
    doc = {agent: rep.to_json_obj() for agent, rep in reports.items()}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
