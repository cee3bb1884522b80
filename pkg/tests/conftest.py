import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cvarssp.models import random_mdp  # noqa: E402

CRITERIA = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def random_models():
    rng = random.Random(20240611)
    return [random_mdp(rng) for _ in range(40)]


def pytest_configure(config):
    config.stash[CRITERIA] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda x: int(x.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
