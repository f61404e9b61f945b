"""Few-atom cavity-QED quantum reservoir computing.

Subpackages by layer: :mod:`operators` (Hilbert space), :mod:`dynamics`
(deterministic master equation), :mod:`stochastic` (measurement-conditioned
trajectories), :mod:`features` and :mod:`regression` (readout layer),
:mod:`tasks` (benchmarks), :mod:`esn` (classical baseline) and
:mod:`harness` (experiments, sweeps, reports).
"""

__version__ = "0.1.0"
