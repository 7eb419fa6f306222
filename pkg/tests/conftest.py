import numpy as np
import pytest

from nssfkit.beamform import write_targets
from nssfkit.corpus import synthetic_pool
from nssfkit.scene_sim import DatasetSpec, generate_dataset


@pytest.fixture(scope="session")
def pool():
    return synthetic_pool(n_speakers=4, utterances_per_speaker=2, duration_s=3.0, seed=0)


@pytest.fixture(scope="session")
def dataset(tmp_path_factory, pool):
    """Four unconstrained sequences with both target kinds cached."""
    root = generate_dataset(DatasetSpec("2spk2pos", 4, seed=3), pool, tmp_path_factory.mktemp("data"))
    write_targets(root, "dry")
    write_targets(root, "dsb")
    return root


@pytest.fixture(scope="session")
def constrained_dataset(tmp_path_factory, pool):
    root = generate_dataset(DatasetSpec("2spk2pos-1fix", 2, seed=4), pool, tmp_path_factory.mktemp("data_c"))
    write_targets(root, "dsb")
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(n, title, passed, detail)."""

    def record(n, title, passed, detail=""):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        _CRITERIA.append((n, status, title, detail))
        print(f"[{status}] criterion {n}: {title} -- {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, title, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"[{status}] criterion {n}: {title} -- {detail}")
