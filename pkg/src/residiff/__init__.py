"""Residual-guided compression-aware diffusion codec toolkit."""

from . import codec, container, denoisers, diffusion, rdeval, schedule, semantic

__all__ = [
    "codec",
    "container",
    "denoisers",
    "diffusion",
    "rdeval",
    "schedule",
    "semantic",
]
__version__ = "0.1.0"
