import textwrap

import numpy as np
import pytest

from src.models.config import ProblemConfig, SolverConfig
from src.services.problem_service import problem_service
from src.services.stepper_service import stepper_service


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_problem():
    """Build (system, u0, v0) from ProblemConfig fields"""

    def _make(**fields):
        config = ProblemConfig(**fields)
        system = problem_service.build(config)
        u0, v0 = problem_service.initial_data(config, system)
        return system, u0, v0

    return _make


@pytest.fixture
def oscillator(make_problem):
    return make_problem(id="oscillator")


@pytest.fixture
def run_problem(make_problem):
    """Run a configured problem and return its trajectory"""

    def _run(tau, T, **fields):
        system, u0, v0 = make_problem(**fields)
        return stepper_service.run(system, u0, v0, SolverConfig(tau=tau, T=T))

    return _run


@pytest.fixture
def write_config(tmp_path):
    def _write(text: str, name: str = "run.yaml") -> str:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return str(path)

    return _write
