"""Hypervector Tsetlin Machine: sparse binary hypervector encoders feeding a Tsetlin Machine."""

from .hv_core import (
    Hypervector,
    TokenCodebook,
    bind_role,
    bundle,
    capacity,
    overlap,
    overlap_likelihood,
    rotate,
)
from .tm_engine import Metrics, TMConfig, TsetlinMachine

__all__ = [
    "Hypervector",
    "Metrics",
    "TMConfig",
    "TokenCodebook",
    "TsetlinMachine",
    "bind_role",
    "bundle",
    "capacity",
    "overlap",
    "overlap_likelihood",
    "rotate",
]
