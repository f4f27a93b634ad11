"""SQP solver suite for mathematical programs with vanishing constraints.

Layers, bottom to top:

- :mod:`mpvc.cones`       branch-set geometry (l1 distances, normal cones)
- :mod:`mpvc.problem`     problem container, index-set classification
- :mod:`mpvc.qp` / :mod:`mpvc.lp`   self-contained convex solvers
- :mod:`mpvc.qpvc`        piecewise-convex auxiliary problem solver
- :mod:`mpvc.sqp`         penalty bookkeeping, polygonal line search, driver
- :mod:`mpvc.extended`    LP-based correction step on top of the basic driver
- :mod:`mpvc.stationarity`  certificate checks (weak / M / Q / Q_M / S)
- :mod:`mpvc.problems`    built-in problem library (analytic + truss design)
- :mod:`mpvc.cli`         ``mpvc solve|grid|certify`` command line
"""

__version__ = "0.1.0"

from .extended import ExtendedConfig, run_extended_sqp
from .problems import load_problem
from .sqp import SqpConfig, SqpResult, run_basic_sqp
from .stationarity import certify

__all__ = [
    "ExtendedConfig",
    "SqpConfig",
    "SqpResult",
    "certify",
    "load_problem",
    "run_basic_sqp",
    "run_extended_sqp",
]
