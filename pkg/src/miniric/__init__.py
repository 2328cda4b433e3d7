"""miniric: a miniature Near-RT RIC running in one process on a simulated clock."""

from .clock import SimClock
from .framework import RMRXapp, Xapp
from .ric import NearRtRic

__version__ = "0.1.0"

__all__ = ["NearRtRic", "RMRXapp", "SimClock", "Xapp", "__version__"]
