import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def dataset_pair():
    """The dataset every full-scale run shares (default harness config)."""
    from airsgd.harness import ExperimentConfig, load_dataset

    return load_dataset(ExperimentConfig())


class RunCache:
    """Memoized full-scale runs keyed by config hash; several acceptance
    criteria interrogate the same cells, and criterion 15 audits them all."""

    def __init__(self, pair):
        from airsgd.harness import run_experiment

        self._run = run_experiment
        self._pair = pair
        self._results = {}
        self._seconds = {}

    def result(self, config):
        key = config.config_hash()
        if key not in self._results:
            started = time.perf_counter()
            self._results[key] = self._run(config, dataset_pair=self._pair)
            self._seconds[key] = time.perf_counter() - started
        return self._results[key]

    def seconds(self, *configs) -> float:
        """Compute cost attributed to these cells (0 for never-run ones)."""
        return sum(self._seconds.get(c.config_hash(), 0.0) for c in configs)

    def all_results(self):
        return list(self._results.values())


@pytest.fixture(scope="session")
def run_cache(dataset_pair):
    return RunCache(dataset_pair)
