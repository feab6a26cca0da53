"""Deterministic ROI, TTA, fusion and evaluation tooling for skating action recognition."""

from skatekit.errors import SkateKitError

__version__ = "0.1.0"

__all__ = ["SkateKitError", "__version__"]
