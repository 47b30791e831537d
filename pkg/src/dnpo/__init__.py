"""dnpo: certified bounds on time-evolved operator averages via moment-matrix
SDP relaxations of differential noncommutative polynomial optimization."""

from . import algebra, hierarchy, oracle, scenarios, sdp
from .errors import DnpoError

__all__ = ["algebra", "hierarchy", "oracle", "scenarios", "sdp", "DnpoError"]
__version__ = "0.1.0"
