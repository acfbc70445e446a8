"""Command-line workbench: dataset generation, training, fine-tuning,
fixed-seed evaluation, the live session service, and the all-in-one
pipeline.

Every artifact (dataset, policy, log, report, CSV series) carries the run
manifest's digest so results can be traced to the exact configuration
that produced them. All subcommands are deterministic given their flags;
the pipeline rerun from the same manifest reproduces byte-identical
policies and reports.

Config files: --config FILE points at a JSON object whose keys mirror the
flag names (dashes become underscores). Explicit flags win over config
values, which win over built-in defaults. CAVEBENCH_OUT overrides the
default output directory.

Exit codes: 0 success, 2 usage error, 3 data error, 4 protocol error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

from . import data as D
from . import maps as M
from . import metrics as MX
from . import policy as P
from . import trainers as T
from .env import ActionId, TICKS_PER_SECOND
from .expert import ExpertAgent
from .rollout import policy_controller, run_episode

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PROTOCOL = 4

_ALGOS = ("dagger", "hg-dagger", "hdd")
_AGENTS = ("bc", "dagger", "hg-dagger", "hdd")


def _manifest_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _write_json(path, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _sidecar(path, **meta) -> None:
    """Provenance rider for binary artifacts."""
    _write_json(path + ".json", meta)


def _out_dir(value, default):
    if value:
        return value
    return os.environ.get("CAVEBENCH_OUT", default)


def _config_value(args, config, name, default):
    v = getattr(args, name)
    if v is not None:
        return v
    return config.get(name, default)


def _load_config(path):
    if not path:
        return {}
    cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _default_eval_seeds(games):
    return [[f"eval:{i}", 0] for i in range(games)]


# ---------------------------------------------------------------- dataset

def cmd_make_dataset(args):
    config = _load_config(args.config)
    games = _config_value(args, config, "games", 50)
    noise = _config_value(args, config, "noise", 0.05)
    seed = _config_value(args, config, "seed", 13)
    out = _out_dir(_config_value(args, config, "out", None), "dataset")

    manifest = {
        "kind": "dataset",
        "games": games,
        "noise": noise,
        "seed": seed,
        "maps": [name for name, _w in M.training_worlds()],
    }
    digest = _manifest_digest(manifest)
    dataset, episodes = D.generate_bc_dataset(games=games, noise_rate=noise,
                                              seed=seed)
    D.save_dataset_dir(out, dataset, episodes,
                       extra_meta={"manifest_digest": digest})
    _write_json(os.path.join(out, "run_manifest.json"),
                dict(manifest, digest=digest))
    print(f"dataset: {len(dataset)} transitions over {games} games -> {out}")
    print(f"digest: {D.checksum(dataset)}")
    return EXIT_OK


# ---------------------------------------------------------------- training

def cmd_train_bc(args):
    config = _load_config(args.config)
    epochs = _config_value(args, config, "epochs", 150)
    seed = _config_value(args, config, "seed", 0)
    data_dir = _config_value(args, config, "data", "dataset")
    out = _out_dir(_config_value(args, config, "out", None), "bc_policy.bin")
    log_path = _config_value(args, config, "log", None)

    dataset, _meta = D.load_dataset_dir(data_dir)
    manifest = {
        "kind": "train-bc",
        "epochs": epochs,
        "init_seed": seed,
        "dataset_digest": D.checksum(dataset),
    }
    digest = _manifest_digest(manifest)
    log = T.TrainLog(log_path)
    params, curve = T.train_bc(P.init_params(seed=seed), dataset,
                               T.TrainConfig(epochs=epochs), log=log)
    log.close()
    P.save_params(params, out)
    _sidecar(out, manifest_digest=digest, stage="bc",
             epochs=epochs, init_seed=seed,
             loss_first=curve[0], loss_final=curve[-1])
    print(f"bc: {epochs} epochs, loss {curve[0]:.4f} -> {curve[-1]:.4f}, "
          f"policy -> {out}")
    return EXIT_OK


def cmd_finetune(args):
    config = _load_config(args.config)
    algo = args.algo
    iterations = _config_value(args, config, "iterations", 15)
    epochs_per_iter = _config_value(args, config, "epochs_per_iter", 5)
    games = _config_value(args, config, "games", 58)
    data_dir = _config_value(args, config, "data", "dataset")
    policy_in = _config_value(args, config, "policy", "bc_policy.bin")
    out = _out_dir(_config_value(args, config, "out", None),
                   f"{algo}_policy.bin")
    log_path = _config_value(args, config, "log", None)
    out_data = _config_value(args, config, "out_data", None)
    game_ticks = _config_value(args, config, "game_ticks", None)

    dataset, _meta = D.load_dataset_dir(data_dir)
    base_digest = D.checksum(dataset)
    params = P.load_params(policy_in)
    cfg = T.FinetuneConfig(iterations=iterations,
                           epochs_per_iteration=epochs_per_iter, games=games)
    if game_ticks is not None:
        cfg.relabel_game_ticks = game_ticks
        cfg.gated_game_ticks = game_ticks
        cfg.correction_game_ticks = game_ticks
    worlds = M.finetune_worlds()
    manifest = {
        "kind": "finetune",
        "algo": algo,
        "iterations": iterations,
        "epochs_per_iter": epochs_per_iter,
        "games": games,
        "dataset_digest": base_digest,
        "maps": [name for name, _w in worlds],
    }
    digest = _manifest_digest(manifest)
    log = T.TrainLog(log_path)
    extra = {}
    if algo == "dagger":
        frozen = P.load_params(policy_in)
        params, merged, _records = T.run_dagger(params, frozen, dataset,
                                                worlds, cfg, log=log)
        extra["dataset_ratio"] = len(merged) / len(dataset)
    elif algo == "hg-dagger":
        params, risk, state, merged, _records = T.run_hg_dagger(
            params, lambda w: ExpertAgent(w), dataset, worlds, cfg, log=log)
        extra["dataset_ratio"] = len(merged) / len(dataset)
        extra["risk_threshold"] = risk
        extra["takeovers"] = len(state.doubt_log)
    elif algo == "hdd":
        params, corrections, _records = T.run_hdd(
            params, lambda w: ExpertAgent(w), worlds, cfg, log=log)
        merged = None
        extra["corrections"] = len(corrections)
        extra["corrective_transitions"] = sum(c.sample_count
                                              for c in corrections)
        extra["all_descending"] = all(c.loss_after < c.loss_before
                                      for c in corrections)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    log.close()

    if merged is not None and out_data:
        D.save_dataset_raw(out_data, merged,
                           extra_meta={"manifest_digest": digest,
                                       "base_digest": base_digest})
        # record the directory name only: identical runs written to two
        # different roots must produce identical artifact bytes
        extra["out_data"] = os.path.basename(os.path.normpath(out_data))
    P.save_params(params, out)
    _sidecar(out, manifest_digest=digest, stage=algo,
             base_dataset_digest=base_digest, **extra)
    reloaded, _again = D.load_dataset_dir(data_dir)
    if D.checksum(reloaded) != base_digest:
        raise RuntimeError("baseline dataset changed during fine-tuning")
    summary = ", ".join(f"{k}={v}" for k, v in sorted(extra.items()))
    print(f"{algo}: {summary or 'done'}, policy -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def _parse_policies(spec):
    pairs = []
    for part in spec.split(","):
        if "=" not in part:
            raise ValueError(
                f"--policies wants name=path pairs, got {part!r}")
        name, path = part.split("=", 1)
        pairs.append((name.strip(), path.strip()))
    return pairs


def _severity_rows(reports, agents):
    rows = []
    for bucket in MX.SEVERITY_BUCKETS:
        row = {"bucket_s": bucket}
        for name in agents:
            row[name] = reports[name].histogram_total.get(bucket, 0)
        rows.append(row)
    return rows


def _blinded_rows(reports, agents):
    rows = []
    for threshold in MX.BLINDED_THRESHOLDS:
        row = {"threshold_deg": threshold}
        for name in agents:
            row[name] = reports[name].blinded_total.get(threshold, 0)
        rows.append(row)
    return rows


def _uptime_rows(reports, agents, games):
    rows = []
    for g in range(games):
        row = {"game": g}
        for name in agents:
            row[name] = reports[name].per_game_uptime[g] / TICKS_PER_SECOND
        rows.append(row)
    return rows


def _trace_rows(reports, agents, window):
    rows = []
    for offset in range(window):
        row = {"offset": offset}
        for name in agents:
            for kind_key in ("step", "wall"):
                trace = reports[name].probe_traces.get(kind_key, [])
                row[f"{name}_{kind_key}"] = (trace[offset]
                                             if offset < len(trace) else -1)
        rows.append(row)
    return rows


def _write_csv(path, rows):
    if not rows:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def cmd_evaluate(args):
    config = _load_config(args.config)
    policies = _config_value(args, config, "policies", None)
    if not policies:
        raise ValueError("--policies is required (name=path,...)")
    games = _config_value(args, config, "games", 20)
    seeds_path = _config_value(args, config, "seeds", None)
    out = _out_dir(_config_value(args, config, "out", None), "report.json")
    window = _config_value(args, config, "probe_window", 40)

    pairs = _parse_policies(policies)
    seeds = (_read_json(seeds_path) if seeds_path
             else _default_eval_seeds(games))
    seeds = seeds[:games]
    if len(seeds) < games:
        raise ValueError(f"seed list holds {len(seeds)} entries, "
                         f"need {games}")

    manifest = {
        "kind": "evaluate",
        "games": games,
        "seeds": seeds,
        "agents": [name for name, _ in pairs],
        "probe_window": window,
    }
    digest = _manifest_digest(manifest)

    records = {}
    loaded = {}
    for name, path in pairs:
        params = P.load_params(path)
        loaded[name] = params
        records[name] = [
            run_episode(M.get_world(map_name), policy_controller(params),
                        seed=seed, map_id=map_name)[0]
            for map_name, seed in seeds
        ]
    reports = MX.build_report(records)
    for name, params in loaded.items():
        for kind, key in (("STEP_PROBE", "step"), ("WALL_PROBE", "wall")):
            res = MX.probe_similarity(
                lambda w, params=params: policy_controller(params), kind,
                window=window, align_start=True)
            reports[name].probe_scores[key] = res.score
            reports[name].probe_traces[key] = res.modal_trace

    agents = [name for name, _ in pairs]
    out_dir = os.path.dirname(os.path.abspath(out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    report_obj = {
        "manifest_digest": digest,
        "seeds": seeds,
        "agents": {name: reports[name].to_json_obj() for name in agents},
    }
    _write_json(out, report_obj)
    _write_csv(os.path.join(out_dir, "fig2_occurrences.csv"),
               _severity_rows(reports, agents))
    _write_csv(os.path.join(out_dir, "fig3_blinded.csv"),
               _blinded_rows(reports, agents))
    _write_csv(os.path.join(out_dir, "fig4_uptime.csv"),
               _uptime_rows(reports, agents, games))
    _write_csv(os.path.join(out_dir, "fig5_traces.csv"),
               _trace_rows(reports, agents, window))
    for name in agents:
        rep = reports[name]
        print(f"{name}: stuck {rep.stuck_seconds_total:.1f}s, "
              f"mean uptime {rep.mean_uptime:.1f} ticks, "
              f"probes step {rep.probe_scores['step']:.3f} "
              f"wall {rep.probe_scores['wall']:.3f}")
    print(f"report -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- serve

def cmd_serve(args):
    from .service import serve

    config = _load_config(args.config)
    policy_path = _config_value(args, config, "policy", "bc_policy.bin")
    map_name = _config_value(args, config, "map", "eval:0")
    mode = _config_value(args, config, "mode", "hdd")
    host = _config_value(args, config, "host", "127.0.0.1")
    port = _config_value(args, config, "port", 8765)
    tick_rate = _config_value(args, config, "tick_rate", 10.0)
    seed = _config_value(args, config, "seed", 0)
    save_policy = _config_value(args, config, "save_policy", None)
    log_dir = _config_value(args, config, "log_dir", None)
    static_dir = _config_value(args, config, "static", None)
    send_probs = _config_value(args, config, "send_probs", False)

    params = P.load_params(policy_path)
    world = M.get_world(map_name)
    mode_key = {"hdd": "HDD", "hg-dagger": "HG_DAGGER",
                "observe": "OBSERVE"}.get(mode)
    if mode_key is None:
        raise ValueError(f"unknown mode {mode!r}")
    print(f"serving {map_name} in {mode_key} mode on "
          f"ws://{host}:{port} at {tick_rate} ticks/s")
    serve(world, params, host=host, port=port,
          save_policy=save_policy, mode=mode_key, seed=seed,
          tick_rate=tick_rate, map_id=map_name, log_dir=log_dir,
          static_dir=static_dir, send_probs=bool(send_probs))
    return EXIT_OK


# ---------------------------------------------------------------- pipeline

def cmd_pipeline(args):
    """The whole experiment, one command: dataset, BC, the three
    fine-tuning regimes, fixed-seed evaluation, plot series."""
    config = _load_config(args.config)
    out = _out_dir(_config_value(args, config, "out", None), "run")
    games = _config_value(args, config, "games", 50)
    noise = _config_value(args, config, "noise", 0.05)
    data_seed = _config_value(args, config, "seed", 13)
    bc_seed = _config_value(args, config, "bc_seed", 0)
    epochs = _config_value(args, config, "epochs", 150)

    os.makedirs(out, exist_ok=True)
    manifest = {
        "kind": "pipeline",
        "dataset": {"games": games, "noise": noise, "seed": data_seed,
                    "maps": [n for n, _ in M.training_worlds()]},
        "bc": {"epochs": epochs, "init_seed": bc_seed},
        "finetune": {"iterations": 15, "epochs_per_iter": 5, "games": 58,
                     "maps": [n for n, _ in M.finetune_worlds()]},
        "eval": {"games": 20, "seeds": _default_eval_seeds(20)},
    }
    digest = _manifest_digest(manifest)
    _write_json(os.path.join(out, "manifest.json"),
                dict(manifest, digest=digest))

    def sub(name, argv):
        print(f"[pipeline] {name}")
        code = main(argv)
        if code != EXIT_OK:
            raise RuntimeError(f"pipeline stage {name} exited {code}")

    data_dir = os.path.join(out, "dataset")
    bc_path = os.path.join(out, "policies", "bc.bin")
    os.makedirs(os.path.dirname(bc_path), exist_ok=True)
    logs = os.path.join(out, "logs")
    os.makedirs(logs, exist_ok=True)

    sub("make-dataset", ["make-dataset", "--games", str(games),
                         "--noise", str(noise), "--seed", str(data_seed),
                         "--out", data_dir])
    sub("train-bc", ["train-bc", "--epochs", str(epochs),
                     "--seed", str(bc_seed), "--data", data_dir,
                     "--out", bc_path,
                     "--log", os.path.join(logs, "bc_train.jsonl")])
    policy_paths = {"bc": bc_path}
    for algo in _ALGOS:
        path = os.path.join(out, "policies", f"{algo}.bin")
        argv = ["finetune", "--algo", algo, "--data", data_dir,
                "--policy", bc_path, "--out", path,
                "--log", os.path.join(logs, f"finetune_{algo}.jsonl")]
        if algo != "hdd":
            argv += ["--out-data", os.path.join(out, f"dataset_{algo}")]
        sub(f"finetune {algo}", argv)
        policy_paths[algo] = path
    policies = ",".join(f"{n}={p}" for n, p in policy_paths.items())
    sub("evaluate", ["evaluate", "--policies", policies,
                     "--out", os.path.join(out, "report.json")])
    print(f"pipeline complete -> {out} (manifest digest {digest[:12]})")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cavebench",
        description="imitation-learning workbench on a cave-finding "
                    "gridworld")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="record the baseline dataset")
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train-bc", help="supervised baseline training")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--log", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train_bc)

    p = sub.add_parser("finetune", help="one of the three fine-tune regimes")
    p.add_argument("--algo", choices=_ALGOS, required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--epochs-per-iter", dest="epochs_per_iter", type=int,
                   default=None)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--game-ticks", dest="game_ticks", type=int, default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--out-data", dest="out_data", default=None)
    p.add_argument("--log", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="fixed-seed evaluation and figures")
    p.add_argument("--policies", default=None,
                   help="name=path[,name=path...]")
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--seeds", default=None, help="JSON [[map, seed], ...]")
    p.add_argument("--out", default=None)
    p.add_argument("--probe-window", dest="probe_window", type=int,
                   default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="live websocket session")
    p.add_argument("--policy", default=None)
    p.add_argument("--map", default=None)
    p.add_argument("--mode", default=None,
                   help="hdd | hg-dagger | observe")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--tick-rate", dest="tick_rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--save-policy", dest="save_policy", default=None)
    p.add_argument("--log-dir", dest="log_dir", default=None)
    p.add_argument("--static", default=None,
                   help="directory of browser client assets to serve")
    p.add_argument("--send-probs", dest="send_probs", action="store_true",
                   default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("pipeline", help="dataset through report, one run")
    p.add_argument("--out", default=None)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bc-seed", dest="bc_seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


_DATA_ERRORS = (
    P.BadMagic, P.VersionMismatch, P.TruncatedFile, P.NonFiniteInput,
    P.ShapeMismatch, D.MapContainsHazard, D.DatasetIntegrityError,
    MX.MismatchedSeeds, MX.ProbeUnreached, T.EmptyDataset,
    T.EmptyCorrection, T.EmptyRollout,
    FileNotFoundError, NotADirectoryError, KeyError, ValueError,
    RuntimeError, json.JSONDecodeError,
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
