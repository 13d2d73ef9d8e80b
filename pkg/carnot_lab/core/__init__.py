from .group import HEISENBERG, Ball, CarnotGroup, GroupPoint, HeisenbergGroup
from .grid import Grid, SampledFunction

__all__ = [
    "HEISENBERG",
    "Ball",
    "CarnotGroup",
    "GroupPoint",
    "HeisenbergGroup",
    "Grid",
    "SampledFunction",
]
