"""Parsing, printing, and validating split annotations.

Grammar::

    annotation := "@splittable" "(" paramlist? ")" ("->" expr)?
    param      := "mut"? ident ":" expr
    expr       := ident "(" identlist? ")" | ident | "_" | "unknown"
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .errors import AnnotationError, ParseError, UnknownReference
from .split_types import SplitRegistry


@dataclass(frozen=True)
class ConstructorExpr:
    kind: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(self.args)})"


@dataclass(frozen=True)
class GenericExpr:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class MissingExpr:
    def __str__(self) -> str:
        return "_"


@dataclass(frozen=True)
class UnknownExpr:
    def __str__(self) -> str:
        return "unknown"


MISSING = MissingExpr()
UNKNOWN = UnknownExpr()

SplitTypeExpr = Union[ConstructorExpr, GenericExpr, MissingExpr, UnknownExpr]


@dataclass(frozen=True)
class Param:
    name: str
    expr: SplitTypeExpr
    mutable: bool = False

    def __str__(self) -> str:
        return f"{'mut ' if self.mutable else ''}{self.name}: {self.expr}"


@dataclass(frozen=True)
class SplitAnnotation:
    params: tuple[Param, ...]
    returns: Optional[SplitTypeExpr] = None

    @property
    def arity(self) -> int:
        return len(self.params)

    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def generics(self) -> set[str]:
        exprs = [p.expr for p in self.params]
        if self.returns is not None:
            exprs.append(self.returns)
        return {e.name for e in exprs if isinstance(e, GenericExpr)}

    def padded(self, names: list[str]) -> "SplitAnnotation":
        """Fill omitted trailing parameters with ``_``."""
        if len(names) <= len(self.params):
            return self
        extra = tuple(Param(n, MISSING) for n in names[len(self.params):])
        return SplitAnnotation(self.params + extra, self.returns)

    def __str__(self) -> str:
        return format_annotation(self)


def format_annotation(sa: SplitAnnotation) -> str:
    text = f"@splittable({', '.join(str(p) for p in sa.params)})"
    if sa.returns is not None:
        text += f" -> {sa.returns}"
    return text


_TOKEN = re.compile(
    r"\s*(?:(?P<arrow>->)|(?P<at>@splittable\b)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),:]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def _offset(self) -> int:
        if self.i < len(self.tokens):
            return self.tokens[self.i][2]
        return max(len(self.text) - 1, 0)

    def _fail(self, message: str, offset: Optional[int] = None):
        raise ParseError(message, self._offset() if offset is None else offset, self.text)

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def expect(self, value: str):
        tok = self.peek()
        if tok is None or tok[1] != value:
            found = "end of input" if tok is None else repr(tok[1])
            self._fail(f"expected {value!r}, found {found}")
        self.i += 1
        return tok

    def ident(self, what: str) -> tuple[str, int]:
        tok = self.peek()
        if tok is None or tok[0] != "ident":
            found = "end of input" if tok is None else repr(tok[1])
            self._fail(f"expected {what}, found {found}")
        self.i += 1
        return tok[1], tok[2]

    def parse(self) -> SplitAnnotation:
        tok = self.peek()
        if tok is None or tok[0] != "at":
            self._fail("annotation must start with '@splittable'")
        self.i += 1
        self.expect("(")
        params: list[Param] = []
        refs: list[tuple[str, int]] = []
        seen: set[str] = set()
        if self.peek() is not None and self.peek()[1] != ")":
            while True:
                params.append(self.param(seen, refs))
                tok = self.peek()
                if tok is not None and tok[1] == ",":
                    self.i += 1
                    continue
                break
        self.expect(")")
        returns = None
        tok = self.peek()
        if tok is not None and tok[0] == "arrow":
            self.i += 1
            returns = self.expr(refs)
        if self.peek() is not None:
            self._fail(f"trailing input {self.peek()[1]!r}")
        for name, offset in refs:
            if name not in seen:
                raise UnknownReference(
                    f"constructor argument {name!r} is not a parameter of this annotation",
                    offset,
                    self.text,
                )
        return SplitAnnotation(tuple(params), returns)

    def param(self, seen: set[str], refs: list) -> Param:
        mutable = False
        name, offset = self.ident("parameter name")
        if name == "mut":
            tok = self.peek()
            if tok is not None and tok[0] == "ident":
                mutable = True
                name, offset = self.ident("parameter name")
        if name in ("_", "unknown", "mut"):
            self._fail(f"{name!r} cannot be a parameter name", offset)
        if name in seen:
            self._fail(f"duplicate parameter {name!r}", offset)
        seen.add(name)
        self.expect(":")
        return Param(name, self.expr(refs), mutable)

    def expr(self, refs: list) -> SplitTypeExpr:
        name, _ = self.ident("split type")
        if name == "_":
            return MISSING
        if name == "unknown":
            return UNKNOWN
        tok = self.peek()
        if tok is None or tok[1] != "(":
            return GenericExpr(name)
        self.i += 1
        args: list[str] = []
        if self.peek() is not None and self.peek()[1] != ")":
            while True:
                arg, offset = self.ident("constructor argument")
                refs.append((arg, offset))
                args.append(arg)
                tok = self.peek()
                if tok is not None and tok[1] == ",":
                    self.i += 1
                    continue
                break
        self.expect(")")
        return ConstructorExpr(name, tuple(args))


def parse_annotation(text: str) -> SplitAnnotation:
    """Parse one ``@splittable(...)`` annotation.

    >>> str(parse_annotation("@splittable(left: S, right: S) -> S"))
    '@splittable(left: S, right: S) -> S'
    """
    return _Parser(text).parse()


# -- signatures and validation ----------------------------------------------


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: str
    writable: bool = False


@dataclass(frozen=True)
class FunctionSignature:
    name: str
    args: tuple[ArgSpec, ...]
    returns: Optional[str] = None

    @property
    def arity(self) -> int:
        return len(self.args)


_SIG = re.compile(r"^\s*(?P<name>\w+)\s*\((?P<args>.*)\)\s*(?:->\s*(?P<ret>\w+))?\s*$")


def parse_signature(text: str) -> FunctionSignature:
    """Parse ``name(type arg, mut type arg, ...) [-> type]``."""
    m = _SIG.match(text)
    if m is None:
        raise ValueError(f"bad signature: {text!r}")
    args = []
    for part in filter(None, (p.strip() for p in m["args"].split(","))):
        words = part.split()
        writable = words[0] == "mut"
        if writable:
            words = words[1:]
        if len(words) != 2:
            raise ValueError(f"bad signature argument: {part!r}")
        args.append(ArgSpec(words[1], words[0], writable))
    return FunctionSignature(m["name"], tuple(args), m["ret"])


def validate_annotation(
    sa: SplitAnnotation, sig: FunctionSignature, registry: SplitRegistry
) -> list[str]:
    """Return every violation found; an empty list means the annotation is valid."""
    problems: list[str] = []
    if sa.arity > sig.arity:
        problems.append(
            f"{sig.name}: annotation has {sa.arity} parameters, signature has {sig.arity}"
        )
    elif sa.arity < sig.arity:
        # omitted trailing entries default to "_" but a missing mut would be a silent lie
        for spec in sig.args[sa.arity:]:
            if spec.writable:
                problems.append(f"{sig.name}: writable argument {spec.name!r} is not annotated")

    generic_names = sa.generics()
    for name in sorted(generic_names):
        if name in registry:
            problems.append(
                f"{sig.name}: generic {name!r} shadows a registered split kind; write {name}(...)"
            )

    def check_ctor(expr: SplitTypeExpr, data_type: Optional[str], where: str):
        if not isinstance(expr, ConstructorExpr):
            return
        if expr.kind not in registry:
            problems.append(f"{sig.name}: {where} uses unregistered split kind {expr.kind!r}")
            return
        kind = registry.get(expr.kind)
        if data_type is not None and kind.concrete_type != data_type:
            problems.append(
                f"{sig.name}: {where} has type {data_type!r} but {expr.kind} splits "
                f"{kind.concrete_type!r}"
            )

    for param, spec in zip(sa.params, sig.args):
        check_ctor(param.expr, spec.type, f"argument {param.name!r}")
        if param.mutable and not spec.writable:
            problems.append(f"{sig.name}: argument {param.name!r} is marked mut but is read-only")

    if sa.returns is not None:
        if sig.returns is None:
            problems.append(f"{sig.name}: annotation has a return split type but the function returns nothing")
        else:
            check_ctor(sa.returns, sig.returns, "return value")
    return problems


@dataclass(frozen=True, eq=False)
class AnnotatedFunction:
    """A black-box function together with its validated split annotation.

    Calling it directly runs the wrapped function eagerly; capture goes
    through ``Session.register``.
    """

    func: Callable
    annotation: SplitAnnotation
    signature: FunctionSignature

    @property
    def name(self) -> str:
        return self.signature.name

    def __call__(self, *args):
        return self.func(*args)

    @classmethod
    def create(
        cls,
        func: Callable,
        annotation: Union[str, SplitAnnotation],
        signature: Union[str, FunctionSignature],
        registry: SplitRegistry,
    ) -> "AnnotatedFunction":
        sa = parse_annotation(annotation) if isinstance(annotation, str) else annotation
        sig = parse_signature(signature) if isinstance(signature, str) else signature
        problems = validate_annotation(sa, sig, registry)
        if problems:
            raise AnnotationError(problems)
        return cls(func, sa.padded([a.name for a in sig.args]), sig)

    def __repr__(self) -> str:
        return f"<AnnotatedFunction {self.name} {self.annotation}>"
