import numpy as np
import pytest
from hypothesis import settings

from hamca.hamiltonian import compile_machine
from hamca.staged import build_staged_machine, shuttle_machine

settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


@pytest.fixture(scope="session")
def oneway():
    return build_staged_machine("halt_now", "one-way-amp")


@pytest.fixture(scope="session")
def oneway_nd():
    return build_staged_machine("halt_now", "one-way-amp", include_decode=False)


@pytest.fixture(scope="session")
def twoway_nd():
    return build_staged_machine("halt_now", "two-way-amp", include_decode=False)


@pytest.fixture(scope="session")
def iid_nd():
    return build_staged_machine("halt_now", "iid-repeat-amp", include_decode=False)


@pytest.fixture(scope="session")
def drifter():
    return build_staged_machine("ping_pong", "one-way-amp")


@pytest.fixture(scope="session")
def drifter_nd():
    return build_staged_machine("ping_pong", "one-way-amp", include_decode=False)


@pytest.fixture(scope="session")
def shuttle():
    return shuttle_machine()


@pytest.fixture(scope="session")
def h_oneway_nd(oneway_nd):
    return compile_machine(oneway_nd)


@pytest.fixture(scope="session")
def h_oneway(oneway):
    return compile_machine(oneway)


@pytest.fixture(scope="session")
def rng():
    return np.random.RandomState(42)
