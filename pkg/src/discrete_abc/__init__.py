"""Population MCMC and likelihood-free (ABC) sampling over binary vectors.

``bitstate`` holds the bit-vector type and the seeded random stream,
``kernels`` the population proposals, ``sampler`` the Metropolis and ABC
sweeps, ``problems`` the benchmark targets and ``harness`` the experiment
runner and command line.
"""

from .bitstate import BitVector, DimensionError, RngStream, StatePmf, hamming, mutate, popcount, xor
from .kernels import Kind, KernelSpec, Population, PopulationError, propose, proposal_pmf_exact
from .sampler import EpsilonSchedule, SimulatorError, StepOutcome, SweepStats, abc_step, metropolis_step, run, sweep

__version__ = "0.1.0"
