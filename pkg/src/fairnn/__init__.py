"""Fair sampling from unions of sets and from LSH near-neighbor buckets."""

from .errors import FairNNError
from .rng import RandomStream, as_stream

__version__ = "0.1.0"

__all__ = ["FairNNError", "RandomStream", "as_stream", "__version__"]
