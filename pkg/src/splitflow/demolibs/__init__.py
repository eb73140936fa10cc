"""Annotated demo libraries: vector math kernels and a matrix library."""

from __future__ import annotations

from types import SimpleNamespace

from ..split_types import SplitRegistry
from . import matrix, vecmath
from .kinds import ARRAY_SPLIT, MATRIX_SPLIT, REDUCE_SPLIT, SIZE_SPLIT, install_kinds


def install(registry: SplitRegistry) -> SimpleNamespace:
    """Register the demo split kinds and return every annotated demo function by name."""
    install_kinds(registry)
    funcs = {**vecmath.annotate(registry), **matrix.annotate(registry)}
    return SimpleNamespace(registry=registry, **funcs)


def default_registry() -> tuple[SplitRegistry, SimpleNamespace]:
    registry = SplitRegistry()
    lib = install(registry)
    return registry, lib


__all__ = [
    "ARRAY_SPLIT",
    "MATRIX_SPLIT",
    "REDUCE_SPLIT",
    "SIZE_SPLIT",
    "default_registry",
    "install",
    "install_kinds",
    "matrix",
    "vecmath",
]
