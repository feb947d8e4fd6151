import warnings

import numpy as np
import pytest

from hamred import build_dictionary, build_sine_gordon, build_wave2d

WAVE_TRAINING = (7.0, 8.5, 10.0)
SG_TRAINING = (0.7, 0.75, 0.8, 0.85, 0.9)


@pytest.fixture(scope="session")
def small_wave():
    """Wave model with 2N = 80 and its dictionary of 120 snapshots."""
    model = build_wave2d(20, 2, steps=40)
    return model, build_dictionary(model, WAVE_TRAINING)


@pytest.fixture(scope="session")
def small_sine_gordon():
    """Sine-Gordon model with 2N = 80 and its dictionary of 200 snapshots."""
    model = build_sine_gordon(40, steps=40)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = build_dictionary(model, SG_TRAINING)
    return model, d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, printed at the end of the session."""

    def record(number, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
