"""Detectors, probe scoring, and report assembly."""
import json

import numpy as np
import pytest

from cavebench import metrics as M
from cavebench.env import ActionId
from cavebench.records import (
    NOVICE,
    EpisodeRecord,
    TickEntry,
    load_episode_log,
    save_episode_log,
)
from naive_metrics import (
    naive_blinded,
    naive_collision_events,
    naive_severity_histogram,
    naive_uptime,
    synthetic_record,
)

TL = int(ActionId.TURN_LEFT)
TR = int(ActionId.TURN_RIGHT)
FW = int(ActionId.FORWARD)


def make_record(pattern, pitches=None):
    """pattern: 'B' blocked tick, '.' moving tick, 'o' idle tick."""
    rec = EpisodeRecord(map_id="synthetic", seed=0)
    for t, ch in enumerate(pattern):
        pitch = pitches[t] if pitches is not None else 0
        rec.append(TickEntry(
            tick=t,
            action=int(ActionId.FORWARD if ch != "o" else ActionId.NOOP),
            moved=ch == ".",
            intended_move=ch != "o",
            pitch=pitch,
            position=(1, 1),
            control_owner=NOVICE,
        ))
    return rec


# -- collision events -----------------------------------------------------


def test_clean_episode_has_no_events():
    assert M.detect_collisions(make_record("." * 50)) == []


def test_short_stalls_stay_below_the_floor():
    assert M.detect_collisions(make_record("." * 5 + "B" * 9 + "." * 5)) == []


def test_twelve_blocked_ticks_make_one_event():
    events = M.detect_collisions(make_record("..." + "B" * 12 + "..."))
    assert events == [M.CollisionEvent(start_tick=3, duration_ticks=12)]
    assert events[0].duration_seconds == 6.0
    assert M.severity_histogram(events) == {5: 1, 10: 0, 20: 0, 30: 0, 45: 0,
                                            60: 0, 90: 0, 120: 0, 150: 0}


def test_a_single_free_tick_splits_runs():
    # 9 blocked, free, 10 blocked: only the second run reaches the floor
    events = M.detect_collisions(make_record("B" * 9 + "." + "B" * 10))
    assert events == [M.CollisionEvent(start_tick=10, duration_ticks=10)]


def test_an_open_run_closes_at_episode_end():
    events = M.detect_collisions(make_record("....." + "B" * 30))
    assert events == [M.CollisionEvent(start_tick=5, duration_ticks=30)]


def test_idle_ticks_are_not_blocked_ticks():
    # NOOP does not intend to move, so it breaks a run without being clean
    events = M.detect_collisions(make_record("B" * 8 + "o" + "B" * 8))
    assert events == []


def test_severity_picks_the_largest_bucket_at_or_below():
    def hist_for(ticks):
        return {
            b: n
            for b, n in M.severity_histogram(
                [M.CollisionEvent(0, ticks)]
            ).items()
            if n
        }

    assert hist_for(19) == {5: 1}      # 9.5 s sits in the 5 s bucket
    assert hist_for(20) == {10: 1}
    assert hist_for(300) == {150: 1}
    assert hist_for(1000) == {150: 1}  # the last bucket is open-ended


def test_empty_histogram_for_no_events():
    assert all(v == 0 for v in M.severity_histogram([]).values())


# -- blinded counts -------------------------------------------------------


def test_level_flight_never_counts():
    rec = make_record("." * 40)
    assert all(v == 0 for v in M.detect_blinded(rec).values())


def test_one_monotone_climb_counts_once_everywhere():
    pitches = [min(90, 5 * (t + 1)) for t in range(20)]
    rec = make_record("." * 20, pitches)
    assert all(v == 1 for v in M.detect_blinded(rec).values())


def test_each_recrossing_counts_again():
    rec = make_record("." * 4, [10, 0, 10, 0])
    counts = M.detect_blinded(rec)
    assert counts[5] == 2 and counts[10] == 2
    assert all(counts[t] == 0 for t in range(15, 95, 5))


def test_downward_pitch_blinds_too():
    rec = make_record("..", [-50, -50])
    counts = M.detect_blinded(rec)
    assert all(counts[t] == 1 for t in range(5, 55, 5))
    assert all(counts[t] == 0 for t in range(55, 95, 5))


def test_holding_a_high_pitch_is_one_crossing():
    rec = make_record("." * 6, [30, 30, 30, 60, 60, 60])
    counts = M.detect_blinded(rec)
    assert all(counts[t] == 1 for t in range(5, 65, 5))


def test_pre_episode_pitch_is_level():
    # a record that opens already pitched counts an edge at tick 0
    rec = make_record(".", [45])
    assert M.detect_blinded(rec)[45] == 1


# -- uptime ---------------------------------------------------------------


def test_uptime_of_a_clean_episode_is_its_length():
    assert M.uptime(make_record("." * 360)) == 360


def test_uptime_of_a_fully_stuck_episode_is_zero():
    assert M.uptime(make_record("B" * 360)) == 0


def test_uptime_subtracts_only_event_ticks():
    assert M.uptime(make_record("." * 340 + "B" * 20)) == 340
    # a stall under the floor costs nothing
    assert M.uptime(make_record("." * 351 + "B" * 9)) == 360


# -- streaming detectors vs brute force ------------------------------------


def test_detectors_match_the_brute_force_rescan():
    rng = np.random.default_rng(77)
    for _ in range(30):
        rec = synthetic_record(rng)
        events = M.detect_collisions(rec)
        assert [(e.start_tick, e.duration_ticks) for e in events] == \
            naive_collision_events(rec)
        assert M.severity_histogram(events) == naive_severity_histogram(
            naive_collision_events(rec))
        assert M.detect_blinded(rec) == naive_blinded(rec)
        assert M.uptime(rec) == naive_uptime(rec)


# -- probe similarity ------------------------------------------------------


def expert_factory(world):
    return M._expert_pose_controller(world)


def noop_factory(world):
    def controller(state, obs, env):
        return ActionId.NOOP

    return controller


def test_expert_agrees_with_itself_from_the_aligned_pose():
    for kind in M.PROBE_KINDS:
        result = M.probe_similarity(expert_factory, kind, align_start=True)
        assert result.score == 1.0, kind
        assert result.reached == 20


def test_expert_reaches_and_matches_the_step_probe_from_spawn():
    result = M.probe_similarity(expert_factory, "STEP_PROBE")
    assert result.score == 1.0
    assert result.reached == 20
    assert result.kind == "STEP_PROBE"


def test_route_following_avoids_the_wall_probe_pocket():
    # the planner routes around the dead end, so from spawn the aligned
    # cell is never visited and every instance scores zero
    result = M.probe_similarity(expert_factory, "WALL_PROBE")
    assert result.reached == 0
    assert result.score == 0.0
    assert result.modal_trace == [-1] * 40


def test_wall_probe_reference_opens_with_the_about_face():
    result = M.probe_similarity(expert_factory, "WALL_PROBE", align_start=True)
    assert result.modal_trace[:36] == [TR] * 36
    assert M.modal_turn_span_degrees(result.modal_trace) >= 180


def test_an_idle_agent_scores_zero():
    result = M.probe_similarity(noop_factory, "STEP_PROBE", max_ticks=60)
    assert result.score == 0.0
    assert result.reached == 0


def test_unknown_probe_kind_is_rejected():
    with pytest.raises(ValueError):
        M.probe_similarity(expert_factory, "LAVA_PROBE")


# -- modal trace span ------------------------------------------------------


def test_turn_span_is_measured_in_degrees():
    assert M.modal_turn_span_degrees([]) == 0
    assert M.modal_turn_span_degrees([TR] * 10) == 50
    assert M.modal_turn_span_degrees([TL] * 7) == 35
    assert M.modal_turn_span_degrees([FW, FW, FW]) == 0


def test_turn_span_needs_one_direction():
    assert M.modal_turn_span_degrees([TR, TL] * 10) == 5
    assert M.modal_turn_span_degrees([TR] * 3 + [TL] * 4) == 20
    assert M.modal_turn_span_degrees([TR] * 6 + [FW] + [TR] * 4) == 30


# -- report assembly -------------------------------------------------------


def test_agents_must_share_the_evaluation_set():
    a = [EpisodeRecord(map_id="m0", seed=1), EpisodeRecord(map_id="m1", seed=2)]
    b = [EpisodeRecord(map_id="m0", seed=1), EpisodeRecord(map_id="m1", seed=3)]
    with pytest.raises(M.MismatchedSeeds):
        M.build_report({"a": a, "b": b})


def test_a_perfect_agent_reports_zeros():
    recs = [make_record("." * 360) for _ in range(3)]
    for i, r in enumerate(recs):
        r.map_id, r.seed, r.success = f"m{i}", i, True
    rep = M.build_report({"clean": recs})["clean"]
    assert rep.games == 3
    assert rep.stuck_seconds_total == 0.0
    assert rep.mean_uptime == 360.0
    assert all(v == 0 for v in rep.histogram_total.values())
    assert all(v == 0 for v in rep.blinded_total.values())
    assert rep.successes == [True, True, True]


def test_report_totals_add_up(tmp_path):
    stuck = make_record("." * 100 + "B" * 30 + "." * 20)
    stuck.map_id, stuck.seed = "m0", 0
    pitched = make_record("." * 150, [min(90, 5 * (t + 1)) for t in range(150)])
    pitched.map_id, pitched.seed = "m1", 1
    rep = M.build_report({"x": [stuck, pitched]})["x"]
    assert rep.stuck_seconds_total == 15.0
    assert rep.mean_stuck_seconds == 7.5
    assert rep.histogram_total[10] == 1
    assert rep.per_game_uptime == [120, 150]
    assert rep.mean_uptime == 135.0
    assert rep.blinded_total[90] == 1

    out = tmp_path / "report.json"
    M.write_report({"x": rep}, str(out), extra={"note": "round trip"})
    doc = json.loads(out.read_text())
    assert doc["note"] == "round trip"
    assert doc["x"]["histogram_total"]["10"] == 1
    assert doc["x"]["blinded_total"]["90"] == 1


# -- episode logs ----------------------------------------------------------


def test_episode_log_round_trip(tmp_path):
    rec = make_record(".B.o", [0, 5, 5, 0])
    rec.success = True
    labels = [int(e.action) for e in rec.entries]
    labels[1] = int(ActionId.TURN_LEFT)  # one relabeled tick
    path = tmp_path / "game.jsonl"
    save_episode_log(rec, str(path), labels=labels)
    loaded, loaded_labels = load_episode_log(str(path))
    assert loaded.map_id == rec.map_id and loaded.seed == rec.seed
    assert loaded.success is True
    assert loaded_labels == labels
    assert [(e.tick, e.action, e.moved, e.intended_move, e.pitch,
             tuple(e.position), e.control_owner) for e in loaded.entries] == \
        [(e.tick, e.action, e.moved, e.intended_move, e.pitch,
          tuple(e.position), e.control_owner) for e in rec.entries]
    # only the overridden tick carries an explicit label
    lines = path.read_text().splitlines()
    assert "lbl" in lines[2] and "lbl" not in lines[1]


def test_ticks_must_be_contiguous():
    rec = EpisodeRecord(map_id="m", seed=0)
    rec.append(TickEntry(0, 0, True, True, 0, (1, 1), NOVICE))
    with pytest.raises(ValueError):
        rec.append(TickEntry(2, 0, True, True, 0, (1, 1), NOVICE))
    with pytest.raises(ValueError):
        EpisodeRecord(map_id="m", seed=0).append(
            TickEntry(1, 0, True, True, 0, (1, 1), NOVICE))
