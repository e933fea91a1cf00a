import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from searchcast import cli

ACCEPTANCE_LINES: dict[str, str] = {}


@dataclass
class GoldenRun:
    world: Path
    config: Path
    out: Path
    exit_code: int
    seconds: float


def _forecast(config: Path, out: Path, jobs: int = 4):
    start = time.perf_counter()
    code = cli.main(["forecast", "--config", str(config), "--out", str(out), "--jobs", str(jobs)])
    return code, time.perf_counter() - start


@pytest.fixture(scope="session")
def golden_run(tmp_path_factory) -> GoldenRun:
    """Seed-42 synthetic world and one full backtest over it."""
    world = tmp_path_factory.mktemp("world42")
    assert cli.main(["synth", "--seed", "42", "--out", str(world)]) == 0
    config = world / "config.json"
    code, seconds = _forecast(config, world / "out")
    return GoldenRun(world, config, world / "out", code, seconds)


@pytest.fixture(scope="session")
def rerun(golden_run, tmp_path_factory) -> GoldenRun:
    """Second backtest of the same world from a fresh copy (no cache)."""
    copy = tmp_path_factory.mktemp("world42b")
    for p in golden_run.world.iterdir():
        if p.is_file():
            shutil.copy2(p, copy / p.name)
    code, seconds = _forecast(copy / "config.json", copy / "out")
    return GoldenRun(copy, copy / "config.json", copy / "out", code, seconds)


@pytest.fixture
def acceptance_line():
    def record(criterion: str, ok: bool, detail: str):
        ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abc")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
