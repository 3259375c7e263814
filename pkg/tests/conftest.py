import numpy as np
import pytest

from eegconv.preprocessing import Recording, default_montage


@pytest.fixture(scope="session")
def montage():
    return default_montage()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_recording(n_channels=3, fs=500.0, seconds=10.0, annotations=None, seed=0,
                   names=None, sex=1):
    n = int(seconds * fs)
    data = np.random.default_rng(seed).standard_normal((n_channels, n)).astype(np.float32)
    names = names or [f"ch{i}" for i in range(n_channels)]
    return Recording("sub-00000", sex, fs, names, data, annotations or [])


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the summary."""
    def record(number, title, passed, detail=""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}"
        if detail:
            line += f" | {detail}"
        request.config.acceptance_lines.append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
