"""End-to-end gates. One test per shipping criterion; the slow ones share the
session-scoped pair of full pipeline runs from conftest. Honest failures here
mean the build does not ship, so nothing below tunes itself to pass."""
import json
import time
from pathlib import Path

import numpy as np

from cavebench import data as D
from cavebench import metrics as M
from naive_metrics import (
    naive_blinded,
    naive_collision_events,
    naive_severity_histogram,
    naive_uptime,
    synthetic_record,
)
from test_policy import finite_difference_check

SEVERE_SECONDS = 60
FULL_GAMES = 20


def _report(run: Path) -> dict:
    return json.loads((run / "report.json").read_text())["agents"]


def _log_events(run: Path, name: str, event: str):
    lines = (run / "logs" / name).read_text().splitlines()
    return [d for d in map(json.loads, lines) if d["event"] == event]


# -- numeric gates (standalone, fast) -----------------------------------------


def test_analytic_gradients_match_central_differences():
    start = time.monotonic()
    worst = max(
        finite_difference_check(seed=0, batch_size=1, samples=40),
        finite_difference_check(seed=1, batch_size=8, samples=40),
        finite_difference_check(seed=2, batch_size=64, samples=40),
    )
    elapsed = time.monotonic() - start
    print(f"gradient check: worst rel err {worst:.3e} in {elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 30.0


def test_streaming_detectors_agree_with_a_quadratic_rescan():
    rng = np.random.default_rng(202608)
    for _ in range(100):
        rec = synthetic_record(rng)
        events = M.detect_collisions(rec)
        spans = [(e.start_tick, e.duration_ticks) for e in events]
        assert spans == naive_collision_events(rec)
        assert M.severity_histogram(events) == naive_severity_histogram(spans)
        assert M.detect_blinded(rec) == naive_blinded(rec)
        assert M.uptime(rec) == naive_uptime(rec)


# -- cloning stage -------------------------------------------------------------


def test_cloning_loss_halves_and_never_climbs_between_epoch_blocks(pipeline_runs):
    curve = [d["loss"] for d in
             _log_events(Path(pipeline_runs["first"]), "bc_train.jsonl", "epoch")]
    assert len(curve) == 150
    assert curve[-1] < 0.5 * curve[0]
    blocks = [sum(curve[i:i + 10]) / 10 for i in range(0, 150, 10)]
    for earlier, later in zip(blocks, blocks[1:]):
        assert later <= earlier
    elapsed = pipeline_runs["stage_seconds"]["train-bc"]
    print(f"bc: loss {curve[0]:.4f} -> {curve[-1]:.4f} in {elapsed:.0f}s")
    assert elapsed < 300.0


# -- driving quality -----------------------------------------------------------


def test_cloned_drivers_collide_while_corrected_ones_stay_unstuck(pipeline_runs):
    agents = _report(Path(pipeline_runs["first"]))
    bc, hdd = agents["bc"], agents["hdd"]

    games_with_collision = sum(
        1 for hist in bc["per_game_histogram"] if sum(hist.values()) >= 1)
    assert games_with_collision >= FULL_GAMES / 2
    assert sum(count for bucket, count in bc["histogram_total"].items()
               if int(bucket) >= SEVERE_SECONDS) >= 1

    assert all(count == 0 for bucket, count in hdd["histogram_total"].items()
               if int(bucket) >= SEVERE_SECONDS)
    for rival in ("bc", "dagger", "hg-dagger"):
        assert hdd["stuck_seconds_total"] < agents[rival]["stuck_seconds_total"]

    elapsed = pipeline_runs["stage_seconds"]["evaluate"]
    print(f"evaluate: {elapsed:.0f}s")
    assert elapsed < 120.0


def test_corrected_drivers_keep_control_for_nearly_the_whole_game(pipeline_runs):
    hdd = _report(Path(pipeline_runs["first"]))["hdd"]
    ratios = [up / length for up, length in
              zip(hdd["per_game_uptime"], hdd["episode_lengths"])]
    assert len(ratios) == FULL_GAMES
    assert sum(1 for r in ratios if r == 1.0) >= 1
    assert sum(1 for r in ratios if r >= 0.6) >= 18


def test_corrected_drivers_never_blind_themselves_past_thirty_degrees(pipeline_runs):
    agents = _report(Path(pipeline_runs["first"]))
    for threshold, count in agents["hdd"]["blinded_total"].items():
        if int(threshold) >= 30:
            assert count == 0, f"blinded at {threshold} degrees"
    assert agents["bc"]["blinded_total"]["30"] >= 1


def test_corrected_drivers_imitate_the_operator_most_closely(pipeline_runs):
    agents = _report(Path(pipeline_runs["first"]))
    for kind in ("step", "wall"):
        hdd = agents["hdd"]["probe_scores"][kind]
        assert hdd > agents["bc"]["probe_scores"][kind]
        assert hdd > agents["dagger"]["probe_scores"][kind]
    span = M.modal_turn_span_degrees(agents["hdd"]["probe_traces"]["wall"])
    print(f"hdd wall-probe contiguous turn span: {span} degrees")
    assert span >= 150


# -- dataset integrity ----------------------------------------------------------


def test_the_cloning_dataset_survives_every_finetune_untouched(pipeline_runs):
    run = Path(pipeline_runs["first"])
    base, _meta = D.load_dataset_dir(str(run / "dataset"))
    recorded = json.loads((run / "dataset" / "manifest.json").read_text())
    assert D.checksum(base) == recorded["digest"]

    # on-the-spot corrections train and vanish; nothing of them is stored
    hdd_meta = json.loads((run / "policies" / "hdd.bin.json").read_text())
    assert hdd_meta["base_dataset_digest"] == recorded["digest"]
    assert hdd_meta["corrections"] > 0
    assert not (run / "dataset_hdd").exists()

    base_obs, base_actions = base.matrices()
    base_sources = base.source_tags()
    for algo in ("dagger", "hg-dagger"):
        merged, _m = D.load_dataset_raw(str(run / f"dataset_{algo}"))
        obs, actions = merged.matrices()
        n = len(base)
        assert np.array_equal(obs[:n], base_obs)
        assert np.array_equal(actions[:n], base_actions)
        assert np.array_equal(merged.source_tags()[:n], base_sources)
        ratio = len(merged) / n
        print(f"{algo}: grew dataset by x{ratio:.4f}")
        assert 1.05 <= ratio <= 1.20


def test_every_live_correction_lowers_its_own_loss(pipeline_runs):
    corrections = _log_events(Path(pipeline_runs["first"]),
                              "finetune_hdd.jsonl", "correction")
    assert len(corrections) > 0
    for c in corrections:
        assert c["loss_after"] < c["loss_before"]


# -- reproducibility -------------------------------------------------------------


def test_two_pipeline_runs_produce_identical_bytes(pipeline_runs):
    first = Path(pipeline_runs["first"])
    second = Path(pipeline_runs["second"])

    def tree(root: Path):
        return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())

    assert tree(first) == tree(second)
    for rel in tree(first):
        assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel
