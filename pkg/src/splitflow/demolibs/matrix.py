"""A small matrix library with axis-dependent splits, generics, a filter, and a reduction."""

from __future__ import annotations

import numpy as np

from ..annotation import AnnotatedFunction
from ..errors import DimensionMismatch
from ..split_types import SplitRegistry


def normalize_matrix_axis(m: np.ndarray, axis: int) -> None:
    """Divide each row (axis 0) or column (axis 1) by its sum, in place."""
    sums = m.sum(axis=1 - axis, keepdims=True)
    np.divide(m, sums, out=m)


def matrix_add(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    if left.shape != right.shape:
        raise DimensionMismatch(f"cannot add {left.shape} and {right.shape} matrices")
    return left + right


def scale_matrix(m: np.ndarray, val: float) -> None:
    np.multiply(m, val, out=m)


def filter_zeroed_rows(m: np.ndarray) -> np.ndarray:
    """Drop rows that are entirely zero, keeping row order."""
    return m[np.any(m != 0, axis=1)]


def sum_reduce_to_vector(m: np.ndarray, axis: int) -> np.ndarray:
    """``m.sum(axis=axis)``: sums over the split axis, so partials add elementwise."""
    return m.sum(axis=axis)


SPECS = {
    "normalize_matrix_axis": (
        normalize_matrix_axis,
        "@splittable(mut m: MatrixSplit(m, axis), axis: _)",
        "normalize_matrix_axis(mut matrix m, long axis)",
    ),
    "matrix_add": (
        matrix_add,
        "@splittable(left: S, right: S) -> S",
        "matrix_add(matrix left, matrix right) -> matrix",
    ),
    "scale_matrix": (
        scale_matrix,
        "@splittable(mut m: S, val: _)",
        "scale_matrix(mut matrix m, double val)",
    ),
    # sound for row splits only: a column piece may have zero rows the whole matrix lacks
    "filter_zeroed_rows": (
        filter_zeroed_rows,
        "@splittable(m: S) -> unknown",
        "filter_zeroed_rows(matrix m) -> matrix",
    ),
    "sum_reduce_to_vector": (
        sum_reduce_to_vector,
        "@splittable(m: MatrixSplit(m, axis), axis: _) -> ReduceSplit(axis)",
        "sum_reduce_to_vector(matrix m, long axis) -> array",
    ),
}


def annotate(registry: SplitRegistry) -> dict[str, AnnotatedFunction]:
    return {
        name: AnnotatedFunction.create(fn, sa, sig, registry)
        for name, (fn, sa, sig) in SPECS.items()
    }
