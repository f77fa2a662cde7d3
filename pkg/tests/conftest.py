from pathlib import Path

import numpy as np
import pytest

from ctmva import FDataset, make_basis

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


def trapezoid_weights(n: int, lo: float, hi: float) -> np.ndarray:
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return w


def random_dataset(rng, K=12, p=3, interval=(0.0, 1.0), kind="bspline") -> FDataset:
    basis = make_basis(kind, interval, K)
    return FDataset(basis, rng.standard_normal((K, p)))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, text: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {text}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
