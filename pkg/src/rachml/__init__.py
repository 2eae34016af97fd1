"""Preamble-collision detection for the cellular-IoT random access channel."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
