"""Simulator and verification library for Hamiltonian cell automata.

Layers, bottom up: reversible two-mode machines on finite lattices
(``machine``, ``staged``), their compilation to a local update isometry and
Hamiltonian (``hamiltonian``), exact orbit dynamics with long-term averages
and a dense oracle (``dynamics``), frequency-encoded inputs and classical
initial ensembles (``encoding``), and the certified decision procedures
(``verifier``).  ``cli`` is the command-line front end.
"""

__version__ = "0.1.0"

from .machine import (  # noqa: F401
    Configuration,
    MachineSpec,
    Orbit,
    invert,
    run_orbit,
    step,
    validate_reversible,
)
from .staged import build_staged_machine  # noqa: F401
