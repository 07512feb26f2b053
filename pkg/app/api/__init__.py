"""
MIA Shield - API Routes
"""

from . import attacks
from . import datasets
from . import experiments
from . import game
from . import models

__all__ = [
    "attacks",
    "datasets",
    "experiments",
    "game",
    "models",
]
