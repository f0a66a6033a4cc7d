import numpy as np
import pytest

from rvlab.rng import stream

ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str = "") -> None:
    """Log one PASS/FAIL line for the end-of-run summary, then assert."""
    line = f"{'PASS' if ok else 'FAIL'} {label}" + (f" :: {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture
def rng():
    return stream(12345)


@pytest.fixture
def make_rng():
    def _make(*ids):
        return stream(777, *ids)

    return _make


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    n_pass = sum(line.startswith("PASS") for line in ACCEPTANCE_LINES)
    terminalreporter.write_line(f"{n_pass}/{len(ACCEPTANCE_LINES)} criteria pass")


def binomial_z(count: int, n: int, p: float) -> float:
    return (count - n * p) / np.sqrt(n * p * (1 - p))
