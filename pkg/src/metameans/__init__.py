"""Meta-analysis tests for the many normal means model.

Distributed trials each observe ``X_j = f + Z_j / sqrt(n)`` in ``R^d`` and
report one real statistic; this package builds the combining tests,
simulates them reproducibly and measures their level, power and ROC.
"""

from .metatest import REGISTRY, build_test, calibrated_test
from .model import Scenario
from .rng import RandomStream

__all__ = ["REGISTRY", "RandomStream", "Scenario", "build_test", "calibrated_test"]
__version__ = "0.1.0"
