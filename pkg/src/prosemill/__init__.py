"""Synthetic writing-instruction data pipeline and evaluation bench."""

from .errors import ProsemillError

__version__ = "0.1.0"

__all__ = ["ProsemillError", "__version__"]
