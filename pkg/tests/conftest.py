import numpy as np
import pytest
import torch

torch.set_num_threads(1)

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        ok, name, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name}: {detail}")
