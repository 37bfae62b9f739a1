import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


@dataclass
class BenchmarkRun:
    path: Path
    seconds: float


def _timed_reproduce(experiment, out_dir) -> BenchmarkRun:
    from varprior.repro import reproduce
    start = time.time()
    path = reproduce(experiment, out_dir)
    return BenchmarkRun(path=Path(path), seconds=time.time() - start)


@pytest.fixture(scope="session")
def multinomial_run(tmp_path_factory):
    """The trained multinomial benchmark with posterior chain (shared)."""
    return _timed_reproduce("multinomial_posterior",
                            tmp_path_factory.mktemp("multinomial"))


@pytest.fixture(scope="session")
def gaussvar_run(tmp_path_factory):
    return _timed_reproduce("gaussvar", tmp_path_factory.mktemp("gaussvar"))


@pytest.fixture(scope="session")
def gaussvar_constrained_run(tmp_path_factory):
    return _timed_reproduce("gaussvar_constrained",
                            tmp_path_factory.mktemp("gaussvar_con"))


@pytest.fixture(scope="session")
def probit_run(tmp_path_factory):
    return _timed_reproduce("probit_unconstrained",
                            tmp_path_factory.mktemp("probit"))
