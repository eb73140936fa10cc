"""Elementwise vector-math kernels in the style of a vendor math library.

Every kernel writes ``out[:size]`` and touches nothing else. ``out`` may
alias an input.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..annotation import AnnotatedFunction
from ..split_types import SplitRegistry

UNARY_SA = "@splittable(size: SizeSplit(size), a: ArraySplit(size), mut out: ArraySplit(size))"
BINARY_SA = (
    "@splittable(size: SizeSplit(size), a: ArraySplit(size), b: ArraySplit(size), "
    "mut out: ArraySplit(size))"
)
SCALAR_SA = (
    "@splittable(size: SizeSplit(size), a: ArraySplit(size), c: _, mut out: ArraySplit(size))"
)

UNARY_SIG = "{}(long size, array a, mut array out)"
BINARY_SIG = "{}(long size, array a, array b, mut array out)"
SCALAR_SIG = "{}(long size, array a, double c, mut array out)"


def _binary(ufunc):
    def kernel(size, a, b, out):
        ufunc(a[:size], b[:size], out=out[:size])

    return kernel


def _unary(ufunc):
    def kernel(size, a, out):
        ufunc(a[:size], out=out[:size])

    return kernel


def _scalar(ufunc):
    def kernel(size, a, c, out):
        ufunc(a[:size], c, out=out[:size])

    return kernel


vd_add = _binary(np.add)
vd_sub = _binary(np.subtract)
vd_mul = _binary(np.multiply)
vd_div = _binary(np.divide)
vd_sqrt = _unary(np.sqrt)
vd_log1p = _unary(np.log1p)
vd_log = _unary(np.log)
vd_exp = _unary(np.exp)
vd_erf = _unary(special.erf)
vd_sin = _unary(np.sin)
vd_cos = _unary(np.cos)
vd_asin = _unary(np.arcsin)
vd_add_scalar = _scalar(np.add)
vd_mul_scalar = _scalar(np.multiply)

BINARY = {"vd_add": vd_add, "vd_sub": vd_sub, "vd_mul": vd_mul, "vd_div": vd_div}
UNARY = {
    "vd_sqrt": vd_sqrt,
    "vd_log1p": vd_log1p,
    "vd_log": vd_log,
    "vd_exp": vd_exp,
    "vd_erf": vd_erf,
    "vd_sin": vd_sin,
    "vd_cos": vd_cos,
    "vd_asin": vd_asin,
}
SCALAR = {"vd_add_scalar": vd_add_scalar, "vd_mul_scalar": vd_mul_scalar}


def annotate(registry: SplitRegistry) -> dict[str, AnnotatedFunction]:
    out = {}
    for name, fn in BINARY.items():
        out[name] = AnnotatedFunction.create(fn, BINARY_SA, BINARY_SIG.format(name), registry)
    for name, fn in UNARY.items():
        out[name] = AnnotatedFunction.create(fn, UNARY_SA, UNARY_SIG.format(name), registry)
    for name, fn in SCALAR.items():
        out[name] = AnnotatedFunction.create(fn, SCALAR_SA, SCALAR_SIG.format(name), registry)
    return out
