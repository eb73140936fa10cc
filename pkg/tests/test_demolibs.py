import zlib

import numpy as np
import pytest
from scipy import special

from splitcheck import ALL_FUNCTIONS, check, random_args
from splitflow import ExecConfig, Session
from splitflow.annotation import parse_annotation
from splitflow.demolibs import matrix, vecmath
from splitflow.errors import DimensionMismatch
from splitflow.split_types import SplitType


def test_vd_add_values():
    out = np.zeros(3)
    vecmath.vd_add(3, np.array([1.0, 2, 3]), np.array([4.0, 5, 6]), out)
    np.testing.assert_array_equal(out, [5, 7, 9])


def test_vd_log1p_zero():
    out = np.ones(1)
    vecmath.vd_log1p(1, np.zeros(1), out)
    assert out[0] == 0.0


def test_kernel_touches_only_prefix():
    out = np.full(5, -1.0)
    vecmath.vd_sqrt(3, np.array([4.0, 9, 16, 25, 36]), out)
    np.testing.assert_array_equal(out, [2, 3, 4, -1, -1])


def test_out_may_alias_input():
    a = np.array([1.0, 4.0])
    vecmath.vd_mul(2, a, a, a)
    np.testing.assert_array_equal(a, [1, 16])


def test_erf_pieces_equal_whole(rng):
    a = rng.normal(size=101)
    whole = np.empty(101)
    vecmath.vd_erf(101, a, whole)
    pieces = np.empty(101)
    vecmath.vd_erf(50, a[:50], pieces[:50])
    vecmath.vd_erf(51, a[50:], pieces[50:])
    np.testing.assert_array_equal(pieces, whole)
    np.testing.assert_allclose(whole, special.erf(a), rtol=1e-15)


def test_normalize_rows():
    m = np.array([[2.0, 2.0], [0.0, 4.0]])
    matrix.normalize_matrix_axis(m, 0)
    np.testing.assert_array_equal(m, [[0.5, 0.5], [0.0, 1.0]])


def test_normalize_columns():
    m = np.array([[1.0, 3.0], [3.0, 1.0]])
    matrix.normalize_matrix_axis(m, 1)
    np.testing.assert_array_equal(m, [[0.25, 0.75], [0.75, 0.25]])


def test_filter_zeroed_rows():
    np.testing.assert_array_equal(matrix.filter_zeroed_rows(np.array([[0, 0], [1, 2]])), [[1, 2]])


def test_sum_reduce_identity():
    np.testing.assert_array_equal(matrix.sum_reduce_to_vector(np.eye(3), 0), [1, 1, 1])


def test_matrix_add_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        matrix.matrix_add(np.ones((2, 2)), np.ones((2, 3)))


def test_scale_in_place():
    m = np.ones((2, 2))
    matrix.scale_matrix(m, 3.0)
    np.testing.assert_array_equal(m, np.full((2, 2), 3.0))


# -- annotation bundle ------------------------------------------------------------


def test_vd_add_annotation_verbatim(demo):
    _, lib = demo
    listing = (
        "@splittable(\n  size: SizeSplit(size), a: ArraySplit(size),\n"
        "  b: ArraySplit(size), mut out: ArraySplit(size))"
    )
    assert lib.vd_add.annotation == parse_annotation(listing)
    assert lib.vd_div.annotation == parse_annotation(listing)


def test_matrix_annotations(demo):
    _, lib = demo
    assert str(lib.matrix_add.annotation) == "@splittable(left: S, right: S) -> S"
    assert str(lib.filter_zeroed_rows.annotation) == "@splittable(m: S) -> unknown"
    assert str(lib.sum_reduce_to_vector.annotation) == (
        "@splittable(m: MatrixSplit(m, axis), axis: _) -> ReduceSplit(axis)"
    )


def test_matrix_default_is_row_split(demo):
    registry, _ = demo
    assert registry.default_split_type(np.ones((3, 5))) == SplitType("MatrixSplit", (3, 5, 0))
    assert registry.default_split_type(np.ones(4)) == SplitType("ArraySplit", (4,))


def test_every_function_registered(demo):
    _, lib = demo
    for name in ALL_FUNCTIONS:
        assert getattr(lib, name).name == name


# -- splittability -------------------------------------------------------------


@pytest.mark.parametrize("pieces", [1, 2, 3, 17])
@pytest.mark.parametrize("name", ALL_FUNCTIONS)
def test_splittability_condition(demo, name, pieces):
    registry, lib = demo
    rng = np.random.default_rng(zlib.crc32(f"{name}/{pieces}".encode()))
    for _ in range(10):
        check(registry, getattr(lib, name), random_args(name, rng), pieces)


@pytest.mark.parametrize("workers,batch", [(1, 1), (2, 3), (4, 64), (8, 10**6)])
def test_filter_through_runtime(demo, workers, batch):
    registry, lib = demo
    rng = np.random.default_rng(workers * 100 + batch % 97)
    m = rng.uniform(size=(57, 4))
    m[rng.random(57) < 0.4] = 0
    s = Session(registry, ExecConfig(workers=workers, batch_override=batch))
    out = s.register(lib.filter_zeroed_rows, m).get()
    np.testing.assert_array_equal(out, matrix.filter_zeroed_rows(m))


@pytest.mark.parametrize("axis", [0, 1])
def test_reduce_through_runtime(demo, axis):
    registry, lib = demo
    m = np.random.default_rng(axis).uniform(size=(33, 21))
    s = Session(registry, ExecConfig(workers=4, batch_override=5))
    v = s.register(lib.sum_reduce_to_vector, m, axis).get()
    expected = np.zeros(m.shape[1 - axis])
    for i in range(m.shape[axis]):
        expected += m[i] if axis == 0 else m[:, i]
    np.testing.assert_allclose(v, expected, rtol=1e-9)
