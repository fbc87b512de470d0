import numpy as np
import pytest

from plexpress import datagen, trainlab

_acceptance_lines = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mnist_like(tmp_path_factory):
    """Small synthetic IDX dataset shared across the test session."""
    out = tmp_path_factory.mktemp("idx-data")
    paths = datagen.make_synthetic_mnist(out, n_train=3000, n_test=600, seed=0)
    train = trainlab.load_mnist_idx(paths["train-images"], paths["train-labels"])
    test = trainlab.load_mnist_idx(paths["t10k-images"], paths["t10k-labels"], split="test")
    return train, test, paths
