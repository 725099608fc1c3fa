import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bicforge.assignment import AssignmentProblem  # noqa: E402
from bicforge.model import random_prior, random_rational  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
INSTANCES = ROOT / "instances"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, ell=None, m=None, balanced=False, hi=10):
    ell = ell or int(rng.integers(1, 6))
    m = m or int(rng.integers(1, 6))
    if balanced:
        m = ell
        alpha = random_prior(rng, ell)
        beta = random_prior(rng, ell)
    else:
        alpha = [Fraction(int(a), 4) for a in rng.integers(0, 5, size=ell)]
        beta = [Fraction(int(b), 4) for b in rng.integers(0, 5, size=m)]
    w = [[random_rational(rng, hi) for _ in range(m)] for _ in range(ell)]
    return AssignmentProblem(alpha, beta, w)


# acceptance criterion -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (passed, detail)
        print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number}. {'PASS' if passed else 'FAIL'}  {detail}")
