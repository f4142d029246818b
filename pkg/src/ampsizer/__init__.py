"""Analog circuit sizing toolkit.

Netlist parsing, MNA circuit simulation, constraint-aware scoring, a
multi-step sizing environment, a DDPG sizing agent, and black-box
baselines (random, grid, GP/EI Bayesian optimization), tied together by
a reproducible experiment harness (see the ``ampsizer`` CLI).
"""

__version__ = "0.1.0"

from ._core import backend_name

__all__ = ["__version__", "backend_name"]
