"""Full-scale acceptance criteria, one test per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line; the lines are also collected
and repeated in the terminal summary so they show without ``-s``.
"""

import pytest

from saddle_exit import acceptance as acc

pytestmark = pytest.mark.slow

RESULTS = []


@pytest.fixture(scope="module")
def shared():
    return {}


def _record(result):
    line = result.line()
    print(line)
    RESULTS.append(line)
    assert result.passed, line


def test_criterion_1_sigma_closed_form():
    _record(acc.criterion_sigma("full"))


def test_criterion_2_variance_of_N():
    _record(acc.criterion_N_variance("full"))


def test_criterion_3_exit_time_law(shared):
    _record(acc.criterion_exit_law("full", keep=shared))


def test_criterion_4_exit_point_concentration(shared):
    # reuses the eps=1e-4 samples of criterion 3 when that test ran first
    _record(acc.criterion_concentration("full", first=shared))


def test_criterion_5_cubic_saddle():
    _record(acc.criterion_cubic("full"))


def test_criterion_6_lemmas_and_gronwall():
    _record(acc.criterion_lemmas("full"))


def test_criterion_7_thread_determinism():
    _record(acc.criterion_determinism("full"))
