"""Numerical laboratory for non-canonical field quantization.

Submodules
----------
model          mode sets, vacuum profiles, coherent and current specifications
combinatorics  coincidence classes and excitation statistics of N oscillators
fockspace      truncated Fock spaces, lifted operators, vacuum expectations
amplitude      survival amplitude of the exactly solvable atom-field example
propagator     vacuum-smeared commutator function and radiation observables
kernels        compiled hot loops with a pure-Python fallback
cli            the ``noncanon`` command
"""
from . import amplitude, combinatorics, fockspace, kernels, model, propagator
from .model import *  # noqa: F401,F403

__version__ = "0.1.0"
