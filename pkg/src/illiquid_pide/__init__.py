"""Option pricing and hedging with jumps and large-trader feedback."""

from .errors import *  # noqa: F401,F403
from .feedback import MarketParams
from .levy import Kou, Merton, VarianceGamma, Zero
from .solver import SchemeOptions, SolverGrid, march, price_at

__version__ = "0.1.0"

__all__ = [
    "MarketParams",
    "Zero",
    "Merton",
    "Kou",
    "VarianceGamma",
    "SolverGrid",
    "SchemeOptions",
    "march",
    "price_at",
]
