import numpy as np
import pytest

from kantnash.core import FiniteGame, FiniteTypeSpace, GroupMeasure, QuadraticFishingModel

_ACCEPTANCE: list[tuple[str, str, str]] = []


def symmetric_game(alpha: float, beta: float = 0.0) -> FiniteGame:
    space = FiniteTypeSpace([(1.0, 1.0)], [1.0])
    model = QuadraticFishingModel(a=[1.0], b=[1.0])
    return FiniteGame(space, model, GroupMeasure([[alpha]]), beta=beta)


def random_quadratic_game(rng: np.random.Generator, max_types: int = 4, duplicates: bool = True,
                          weights: bool = False, beta: float = 0.0) -> FiniteGame:
    """Random fishing game with ``w == 1`` unless asked otherwise; convex for beta = 0."""
    n = int(rng.integers(1, max_types + 1))
    p = rng.uniform(0.2, 1.0, n)
    p /= p.sum()
    if duplicates and n > 1 and rng.random() < 0.3:
        labels = rng.integers(0, n - 1, n)
    else:
        labels = np.arange(n)
    space = FiniteTypeSpace([(int(v),) for v in labels], p)
    model = QuadraticFishingModel(a=rng.uniform(0.5, 2.0, n), b=rng.uniform(0.5, 2.0, n))
    r = rng.uniform(0.0, 1.0, (n, n)) * p[None, :]
    w = rng.uniform(0.5, 2.0, (n, n)) if weights else None
    return FiniteGame(space, model, GroupMeasure(r), w, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    label = props.get("criterion", report.nodeid.rsplit("::", 1)[-1])
    _ACCEPTANCE.append((label, report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, outcome, detail in sorted(_ACCEPTANCE, key=lambda t: int(t[0].split()[0][2:])
                                         if t[0].startswith("AC") else 0):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status} {label}" + (f" [{detail}]" if detail else ""))
