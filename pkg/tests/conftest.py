import pathlib

import pytest

from procforge import bpmn
from procforge.marking import compile_marking

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


def load_model(name):
    return bpmn.parse_bpmn((FIXTURES / f"{name}.bpmn").read_text())


@pytest.fixture(scope="session")
def grain_model():
    return load_model("grain_title")


@pytest.fixture(scope="session")
def grain_automaton(grain_model):
    return compile_marking(grain_model)


@pytest.fixture(scope="session")
def outsourcing_model():
    return load_model("task_outsourcing")


@pytest.fixture(scope="session")
def ico_model():
    return load_model("ico")
