"""Split kinds for sizes, 1-D arrays, and 2-D matrices, plus a reduction kind."""

from __future__ import annotations

from numbers import Integral

import numpy as np

from ..errors import ConstructorFailure
from ..split_types import RuntimeInfo, SplitKind, SplitRegistry, SplitType


def _is_long(v) -> bool:
    return isinstance(v, (Integral, np.integer)) and not isinstance(v, (bool, np.bool_))


def _is_double(v) -> bool:
    return isinstance(v, (float, np.floating))


def _is_array(v) -> bool:
    return isinstance(v, np.ndarray) and v.ndim == 1


def _is_matrix(v) -> bool:
    return isinstance(v, np.ndarray) and v.ndim == 2


# -- SizeSplit: a length argument; each piece is the piece's length -----------


def _size_ctor(size):
    if not _is_long(size):
        raise ConstructorFailure(f"SizeSplit needs an integer size, got {size!r}")
    if size < 0:
        raise ConstructorFailure(f"SizeSplit size must be non-negative, got {size}")
    return (int(size),)


SIZE_SPLIT = SplitKind(
    name="SizeSplit",
    concrete_type="long",
    constructor=_size_ctor,
    splitter=lambda v, start, end, params, ctx: end - start,
    merger=None,
    # a size occupies no memory per element
    info=lambda v, params: RuntimeInfo(int(v), 0),
    default_constructor=lambda v: SplitType("SizeSplit", (int(v),)),
    count=lambda params: params[0],
)


# -- ArraySplit: contiguous ranges of a 1-D array ------------------------------


def _array_ctor(size):
    return _size_ctor(size)


ARRAY_SPLIT = SplitKind(
    name="ArraySplit",
    concrete_type="array",
    constructor=_array_ctor,
    splitter=lambda a, start, end, params, ctx: a[start:end],
    merger=lambda pieces, params: np.concatenate(pieces),
    info=lambda a, params: RuntimeInfo(min(len(a), params[0]), a.itemsize),
    default_constructor=lambda a: SplitType("ArraySplit", (len(a),)),
    count=lambda params: params[0],
)


# -- MatrixSplit(rows, cols, axis): row blocks or column blocks ----------------


def _matrix_ctor(m, axis):
    if not _is_matrix(m):
        raise ConstructorFailure(f"MatrixSplit needs a 2-D matrix, got {type(m).__name__}")
    if not _is_long(axis) or axis not in (0, 1):
        raise ConstructorFailure(f"MatrixSplit axis must be 0 or 1, got {axis!r}")
    return (m.shape[0], m.shape[1], int(axis))


def _matrix_split(m, start, end, params, ctx):
    return m[start:end] if params[2] == 0 else m[:, start:end]


def _matrix_info(m, params):
    axis = params[2]
    return RuntimeInfo(m.shape[axis], m.itemsize * m.shape[1 - axis])


MATRIX_SPLIT = SplitKind(
    name="MatrixSplit",
    concrete_type="matrix",
    constructor=_matrix_ctor,
    splitter=_matrix_split,
    merger=lambda pieces, params: np.concatenate(pieces, axis=params[2]),
    info=_matrix_info,
    default_constructor=lambda m: SplitType("MatrixSplit", (m.shape[0], m.shape[1], 0)),
    count=lambda params: params[params[2]],
)


# -- ReduceSplit(axis): partial reductions, combined by elementwise sum -------


def _reduce_ctor(axis):
    if not _is_long(axis) or axis not in (0, 1):
        raise ConstructorFailure(f"ReduceSplit axis must be 0 or 1, got {axis!r}")
    return (int(axis),)


def _reduce_merge(pieces, params):
    out = np.array(pieces[0], copy=True)
    for p in pieces[1:]:
        out += p
    return out


REDUCE_SPLIT = SplitKind(
    name="ReduceSplit",
    concrete_type="array",
    constructor=_reduce_ctor,
    splitter=None,
    merger=_reduce_merge,
)


ALL_KINDS = (SIZE_SPLIT, ARRAY_SPLIT, MATRIX_SPLIT, REDUCE_SPLIT)


def install_kinds(registry: SplitRegistry) -> SplitRegistry:
    for kind in ALL_KINDS:
        registry.register_split_kind(kind)
    registry.register_data_type("long", _is_long, "SizeSplit")
    registry.register_data_type("double", _is_double)
    registry.register_data_type("array", _is_array, "ArraySplit")
    registry.register_data_type("matrix", _is_matrix, "MatrixSplit")
    return registry
