"""Shared fixtures: tiny worlds, a CLI runner, and the session-scoped
double pipeline run consumed by the end-to-end trend tests."""
import os
import subprocess
import sys
import time
from pathlib import Path

import pytest

from cavebench.env import load_map

TINY_CORRIDOR = "#####\n#@.C#\n#####"


@pytest.fixture
def corridor_world():
    return load_map(TINY_CORRIDOR)


def run_cli(args, env_extra=None, timeout=1800, cwd=None):
    """Run the package CLI in a subprocess; returns CompletedProcess."""
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "cavebench.cli", *[str(a) for a in args]],
        capture_output=True, text=True, env=env, timeout=timeout, cwd=cwd,
    )


def _run_pipeline(out_dir):
    """Run the full pipeline, timing each stage by its progress line."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "cavebench.cli", "pipeline", "--out", str(out_dir)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    marks = []
    lines = []
    assert proc.stdout is not None
    for line in proc.stdout:
        lines.append(line)
        if line.startswith("[pipeline] "):
            marks.append((line.strip()[len("[pipeline] "):], time.monotonic()))
    proc.wait()
    end = time.monotonic()
    if proc.returncode != 0:
        raise RuntimeError(
            f"pipeline exited {proc.returncode}:\n{''.join(lines)}"
        )
    durations = {}
    for i, (name, start) in enumerate(marks):
        stop = marks[i + 1][1] if i + 1 < len(marks) else end
        durations[name] = stop - start
    return durations


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Two identical full pipeline runs. Slow (several minutes each); every
    end-to-end trend assertion shares this single pair of runs."""
    base = tmp_path_factory.mktemp("pipeline")
    first = base / "first"
    second = base / "second"
    stage_seconds = _run_pipeline(first)
    _run_pipeline(second)
    return {"first": first, "second": second, "stage_seconds": stage_seconds}


@pytest.fixture(scope="session")
def first_run(pipeline_runs):
    return Path(pipeline_runs["first"])
