import numpy as np
import pytest

from hwseg.synth.demo import write_demo_sources

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def demo_sources(tmp_path_factory):
    """Small procedural source set shared by synthesis and CLI tests."""
    root = tmp_path_factory.mktemp("sources")
    return write_demo_sources(root, n_pages=3, n_sentences=6, seed=5, page_size=(96, 96))


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)``; the line is emitted even when the assert then fails."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
