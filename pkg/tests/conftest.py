import numpy as np
import pytest

from nlucompress.datasets import probe_keys, random_weight_map


@pytest.fixture(scope="session")
def map_10k():
    return random_weight_map(10_000, seed=11)


@pytest.fixture(scope="session")
def random_keys_1e5():
    rng = np.random.default_rng(5)
    raw = rng.integers(0, 256, size=(100_000, 20), dtype=np.uint8)
    return list(dict.fromkeys(r.tobytes() for r in raw))


@pytest.fixture(scope="session")
def probes_1e6():
    return probe_keys(1_000_000, seed=99)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
