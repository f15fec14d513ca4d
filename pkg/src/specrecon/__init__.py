"""Recursive coarse-to-fine spectral reconstruction from RGB images."""

__version__ = "0.1.0"

from .tensor import Tensor  # noqa: F401
