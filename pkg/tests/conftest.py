import numpy as np
import pytest

from querycache import ModelConfig, build_toy_model


@pytest.fixture(scope="session")
def model():
    return build_toy_model(ModelConfig())


@pytest.fixture(scope="session")
def small_model():
    return build_toy_model(ModelConfig(n_layers=2, n_heads=2, d_head=4, d_model=8, vocab_size=64, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail)`` logs one criterion line and returns ``ok``."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
