"""Check F(args) == Merge(F(pieces of args)) for one annotated function."""

from __future__ import annotations

import numpy as np

from splitflow.annotation import ConstructorExpr, GenericExpr, MissingExpr, UnknownExpr
from splitflow.executor import partition

VECTOR_UNARY = ("vd_sqrt", "vd_log1p", "vd_log", "vd_exp", "vd_erf", "vd_sin", "vd_cos", "vd_asin")
VECTOR_BINARY = ("vd_add", "vd_sub", "vd_mul", "vd_div")
VECTOR_SCALAR = ("vd_add_scalar", "vd_mul_scalar")


def random_args(name: str, rng) -> list:
    """Valid arguments for one call, drawn inside each kernel's domain."""
    if name in VECTOR_UNARY + VECTOR_BINARY + VECTOR_SCALAR:
        n = int(rng.integers(1, 400))
        lo = -0.99 if name in ("vd_asin",) else 0.01
        a = rng.uniform(lo, 0.99, n)
        out = np.zeros(n)
        if name in VECTOR_BINARY:
            return [n, a, rng.uniform(0.5, 2.0, n), out]
        if name in VECTOR_SCALAR:
            return [n, a, float(rng.uniform(-2, 2)), out]
        return [n, a, out]
    r, c = int(rng.integers(1, 40)), int(rng.integers(1, 40))
    m = rng.uniform(0.5, 2.0, (r, c))
    m[rng.random(r) < 0.3] = 0.0
    if name == "normalize_matrix_axis":
        return [rng.uniform(0.5, 2.0, (r, c)), int(rng.integers(0, 2))]
    if name == "matrix_add":
        return [m, rng.uniform(-1, 1, (r, c))]
    if name == "scale_matrix":
        return [m, float(rng.uniform(-2, 2))]
    if name == "filter_zeroed_rows":
        return [m]
    if name == "sum_reduce_to_vector":
        return [m, int(rng.integers(0, 2))]
    raise KeyError(name)


def _split_types(registry, fn, args):
    """Concrete split type per argument and for the return value."""
    names = fn.annotation.param_names()
    generic = None
    out = []
    for p, value in zip(fn.annotation.params, args):
        e = p.expr
        if isinstance(e, ConstructorExpr):
            out.append(registry.construct(e.kind, [args[names.index(a)] for a in e.args]))
        elif isinstance(e, GenericExpr):
            # a generic with no producer takes the data type's row-wise default
            generic = generic or registry.default_split_type(value)
            out.append(generic)
        else:
            out.append(None)
    r = fn.annotation.returns
    ret = None
    if isinstance(r, ConstructorExpr):
        ret = registry.construct(r.kind, [args[names.index(a)] for a in r.args])
    elif isinstance(r, GenericExpr):
        ret = generic
    elif isinstance(r, UnknownExpr):
        ret = "default"
    return out, ret


def check(registry, fn, args, pieces: int, rtol: float = 1e-12) -> None:
    """Assert the splittability condition for ``pieces`` equal-ish pieces."""
    whole_args = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
    with np.errstate(all="ignore"):
        whole_ret = fn.func(*whole_args)

    split_args = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
    types, ret_type = _split_types(registry, fn, split_args)
    totals = {
        registry.runtime_info(v, t).total_elements for v, t in zip(split_args, types) if t is not None
    }
    assert len(totals) == 1, f"{fn.name}: inputs disagree on element counts {totals}"
    total = totals.pop()
    results = []
    for r in partition(total, pieces):
        if r.size == 0:
            continue
        call = [
            v if t is None else registry.split(v, r.start_element, r.end_element, t).value
            for v, t in zip(split_args, types)
        ]
        with np.errstate(all="ignore"):
            results.append(fn.func(*call))

    if ret_type is not None:
        if ret_type == "default":
            ret_type = registry.default_split_type(results[0])
        merged = registry.merge(results, ret_type)
        _close(merged, whole_ret, rtol, f"{fn.name} return")
    for i, p in enumerate(fn.annotation.params):
        if p.mutable:
            _close(split_args[i], whole_args[i], rtol, f"{fn.name} argument {p.name}")


def _close(actual, expected, rtol, label):
    actual, expected = np.asarray(actual), np.asarray(expected)
    assert actual.shape == expected.shape, f"{label}: {actual.shape} != {expected.shape}"
    if np.issubdtype(expected.dtype, np.integer):
        np.testing.assert_array_equal(actual, expected, err_msg=label)
    else:
        np.testing.assert_allclose(actual, expected, rtol=rtol, atol=0, equal_nan=True, err_msg=label)


ALL_FUNCTIONS = VECTOR_UNARY + VECTOR_BINARY + VECTOR_SCALAR + (
    "normalize_matrix_axis",
    "matrix_add",
    "scale_matrix",
    "filter_zeroed_rows",
    "sum_reduce_to_vector",
)
