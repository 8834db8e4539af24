import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from masc.data import DataConfig, generate_all  # noqa: E402
from masc.phantom import PhantomConfig  # noqa: E402


def tiny_data_config(n_train=12, n_val=4, n_test=4) -> DataConfig:
    return DataConfig(n_train, n_val, n_test, phantom=PhantomConfig(height=32, width=32))


@pytest.fixture(scope="session")
def tiny_splits():
    """32 x 32 train/val/test datasets for fast trainer tests."""
    return {k: ds for k, (ds, _) in generate_all(3, tiny_data_config()).items()}


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
