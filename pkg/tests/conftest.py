import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gridcut import Network, load_case

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "gridcut", "data")


@pytest.fixture(scope="session")
def fig1_net() -> Network:
    return load_case(os.path.join(DATA, "fig1_5bus.json"))


@pytest.fixture(scope="session")
def case118_path() -> str:
    return os.path.join(DATA, "case118.json")


@pytest.fixture(scope="session")
def case118_net(case118_path) -> Network:
    return load_case(case118_path)
