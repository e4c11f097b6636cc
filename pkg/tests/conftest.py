import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rbmcal.rbm import RbmParams  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params():
    """A fixed 3x2 model with moderately sized entries."""
    return RbmParams.random(3, 2, np.random.default_rng(7), scale=1.5)


@pytest.fixture(scope="session")
def pretrained():
    """The 12x6 bars-and-stripes model the sampler studies use, CD-trained once per session."""
    from rbmcal.harness.config import ExperimentConfig
    from rbmcal.harness.experiments import pretrain_rbm

    return pretrain_rbm(ExperimentConfig())


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``report(number, ok, detail)`` records one line for the end-of-run acceptance summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str) -> None:
        lines.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))

    return report


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical or acceptance checks")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
