import sys

import numpy as np
import pytest

from remote_survival.closed_form import model_matrix
from remote_survival.spectral import validate_model

IRR = [[-1.0, 0.5], [0.5, -1.0]]


@pytest.fixture
def mono_sub():
    return validate_model([[-1.0]], 2.0)


@pytest.fixture
def mono_crit():
    return validate_model([[0.0]], 2.0)


@pytest.fixture
def irreducible():
    return validate_model(IRR, 1.0)


@pytest.fixture
def cpd():
    return validate_model(model_matrix("CP-D", {"alpha": 1.0, "c": 2.0}), 2.0)


@pytest.fixture
def cpd_plus_beta_small():
    return validate_model(model_matrix("CP-D+", {"alpha": 1.0, "beta": 0.5, "c": 2.0}), 2.0)


@pytest.fixture
def cpd_plus_alpha_small():
    return validate_model(model_matrix("CP-D+", {"alpha": 1.0, "beta": 2.0, "c": 2.0}), 2.0)


@pytest.fixture
def three_type():
    D = [[-2.0, 1.0, 0.5], [0.3, -1.0, 0.2], [1.0, 0.0, -1.5]]
    return validate_model(D, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for res in mod.RESULTS.values():
            terminalreporter.write_line(res.line())
