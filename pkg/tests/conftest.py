import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(k, passed, detail)``."""

    def record(k, passed, detail=""):
        _CRITERIA[k] = (bool(passed), detail)
        print(f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        passed, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


# quick configs, one per experiment, shared by the CLI and acceptance tests
SMALL_CONFIGS = {
    "simulate": {"experiment": "simulate", "p": 0.4, "c": 0.1, "steps": 1000, "x0": 3, "seed": 11},
    "stationary": {"experiment": "stationary", "p": 0.4, "c": 0.01},
    "tv": {"experiment": "tv", "p": 0.4, "c": 0.2, "x": 0, "y": 5, "times": [0, 1, 5, 20, 60]},
    "cutoff": {"experiment": "cutoff", "ns": [64, 256], "theta_list": [1.0, 2.0],
               "scaled_grid": [-1.0, 0.0, 1.0]},
    "extinction": {"experiment": "extinction", "p": 0.4, "c": 0.2, "n_max": 6, "series_n_max": 3,
                   "mc_ns": [1, 3], "mc_paths": 20000, "scaling_ns": [100], "scaling_reps": 200,
                   "kac_paths": 5000, "seed": 5},
    "branching": {"experiment": "branching", "ms": [10, 100, 1000]},
}


@pytest.fixture
def small_configs():
    return {k: dict(v) for k, v in SMALL_CONFIGS.items()}
