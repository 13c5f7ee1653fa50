import math
from pathlib import Path

import numpy as np
import pytest

from randcert.bell import Behavior, Scenario, mix_with_noise, validate_behavior
from randcert.models import (
    ProjectiveMeasurement,
    StateVector,
    behavior_from_model,
    qubit_measurement,
)

DATA = Path(__file__).parent / "data"
SQRT2 = math.sqrt(2)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_quantum_behavior(rng: np.random.Generator, s: Scenario = Scenario(2, 2, 2, 2)) -> Behavior:
    """Random pure state on C^d x C^d with Haar-random projective measurements."""
    psi = rng.normal(size=s.da * s.db) + 1j * rng.normal(size=s.da * s.db)
    state = StateVector(psi / np.linalg.norm(psi), s.da, s.db)
    ma = ProjectiveMeasurement.from_bases([haar_unitary(rng, s.da) for _ in range(s.nx)])
    mb = ProjectiveMeasurement.from_bases([haar_unitary(rng, s.db) for _ in range(s.ny)])
    p = behavior_from_model(state, ma, mb)
    assert validate_behavior(p, tol=1e-12).passed
    return p


def random_violating_behavior(rng: np.random.Generator) -> Behavior:
    """Perturbed CHSH-type qubit model: usually nonlocal, so the guessing probability is below 1."""
    theta = rng.uniform(math.pi / 8, math.pi / 4)
    state = StateVector([math.cos(theta), 0, 0, math.sin(theta)], 2, 2)
    ma = qubit_measurement(*(np.array([0.0, math.pi / 2]) + rng.normal(0, 0.15, 2)))
    mb = qubit_measurement(*(np.array([math.pi / 4, -math.pi / 4]) + rng.normal(0, 0.15, 2)))
    return mix_with_noise(behavior_from_model(state, ma, mb), rng.uniform(0.9, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def data_dir():
    return DATA


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` prints and records one PASS/FAIL line, then asserts ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
