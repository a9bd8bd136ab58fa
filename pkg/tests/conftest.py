import time

import numpy as np
import pytest

from eda_sim.harness import SimConfig, build_world, initialize, run_round
from eda_sim.protocol import StreamTable

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def check(label: str, ok: bool, detail: str = ""):
        _CRITERIA.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


@pytest.fixture(scope="session")
def paired_rounds():
    """200 seeds at N=2000, ratio 0.05: honest estimates at rounds 0, 1 and 2."""
    start = time.perf_counter()
    runs = []
    for seed in range(200):
        config = SimConfig(n_peers=2000, sample_ratio=0.05, seed=seed, record_history=False)
        streams = StreamTable(seed)
        world = build_world(config, streams)
        tx = config.transactions[0]
        initialize(world, tx, config, streams)
        rounds = [world.estimates[tx].copy()]
        for r in (1, 2):
            run_round(world, tx, r, config, streams)
            rounds.append(world.estimates[tx].copy())
        runs.append(np.stack(rounds))
    return runs, time.perf_counter() - start
