"""Lazy clocks and piecewise-constant martingales: samplers, laws, validation."""
from . import clocks, harness, latent, laws, lazymart, specfun
from .clocks import ClockBatch, GridSpec, JumpClock, clock_eval
from .latent import LatentTransition, PathBatch, PwcPath
from .laws import CirParams, ClockLawParams, Law
from .specfun import QuadratureSpec, RngStream

__all__ = [
    "clocks", "harness", "latent", "laws", "lazymart", "specfun",
    "ClockBatch", "GridSpec", "JumpClock", "clock_eval",
    "LatentTransition", "PathBatch", "PwcPath",
    "CirParams", "ClockLawParams", "Law", "QuadratureSpec", "RngStream",
]
__version__ = "0.1.0"
