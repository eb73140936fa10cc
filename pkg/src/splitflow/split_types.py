"""Split types, the splitting API, and the registry of split kinds.

A split type is a kind name plus integer parameters. Two split types compare
equal when both agree, which is what licenses passing pieces of one call's
output straight into the next call. ``UnknownSplitType`` instances are only
ever equal to themselves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional, Sequence

from .errors import (
    ConstructorFailure,
    DuplicateKind,
    InvalidKind,
    MergeFailure,
    SplitFailure,
    UnknownKind,
)

UNKNOWN_NAME = "unknown"


@dataclass(frozen=True)
class SplitType:
    name: str
    params: tuple[int, ...] = ()

    def __post_init__(self):
        params = tuple(self.params)
        for p in params:
            # bool is an int subclass but never a meaningful parameter
            if isinstance(p, bool) or not isinstance(p, int):
                raise TypeError(f"split type parameters must be integers, got {p!r}")
        object.__setattr__(self, "params", tuple(int(p) for p in params))

    def __str__(self) -> str:
        return f"{self.name}<{','.join(str(p) for p in self.params)}>"


_unknown_ids = itertools.count(1)


class UnknownSplitType(SplitType):
    """A fresh, unique split type produced by shape-changing functions."""

    def __init__(self) -> None:
        object.__setattr__(self, "name", UNKNOWN_NAME)
        object.__setattr__(self, "params", ())
        object.__setattr__(self, "uid", next(_unknown_ids))

    def __eq__(self, other: object) -> bool:
        return self is other

    def __hash__(self) -> int:
        return id(self)

    def __str__(self) -> str:
        return f"unknown#{self.uid}"

    __repr__ = __str__


class DeferredSplitType(SplitType):
    """A constructor application whose arguments are not materialized yet.

    The planner produces one when a constructor names a value that another
    call has yet to compute. The executor resolves it once that value exists.
    Like unknown, it is equal only to itself.
    """

    def __init__(
        self, kind: str, node_id: int, arg_names: tuple[str, ...], arg_refs: tuple[int, ...] = ()
    ) -> None:
        object.__setattr__(self, "name", kind)
        object.__setattr__(self, "params", ())
        object.__setattr__(self, "node_id", node_id)
        object.__setattr__(self, "arg_names", tuple(arg_names))
        # value ids of the constructor's arguments
        object.__setattr__(self, "arg_refs", tuple(arg_refs))

    def __eq__(self, other: object) -> bool:
        return self is other

    def __hash__(self) -> int:
        return id(self)

    def __str__(self) -> str:
        return f"{self.name}<deferred@{self.node_id}>"

    __repr__ = __str__


def unknown() -> UnknownSplitType:
    return UnknownSplitType()


def split_type_eq(a: SplitType, b: SplitType) -> bool:
    return a == b


class RuntimeInfo(NamedTuple):
    total_elements: int
    element_size_bytes: int


class SplitPiece(NamedTuple):
    value: Any
    range: tuple[int, int]


class WorkerContext(NamedTuple):
    worker_id: int = 0
    worker_count: int = 1
    batch_index: int = 0


class _End:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "END"

    def __bool__(self) -> bool:
        return False


END = _End()

Constructor = Callable[..., Sequence[int]]
Splitter = Callable[[Any, int, int, tuple, WorkerContext], Any]
Merger = Callable[[list, tuple], Any]
Info = Callable[[Any, tuple], RuntimeInfo]


@dataclass
class SplitKind:
    """The splitting API for one split-type name.

    ``splitter`` is ``None`` for merge-only kinds (reductions); ``merger`` is
    ``None`` for kinds whose pieces are only ever mutated in place.
    ``count`` maps parameters to the element count the kind will produce,
    which lets the planner keep calls with different lengths out of one
    stage. It may be omitted.
    """

    name: str
    concrete_type: str
    constructor: Optional[Constructor] = None
    splitter: Optional[Splitter] = None
    merger: Optional[Merger] = None
    info: Optional[Info] = None
    default_constructor: Optional[Callable[[Any], SplitType]] = None
    count: Optional[Callable[[tuple], Optional[int]]] = None

    @property
    def splittable(self) -> bool:
        return self.splitter is not None


@dataclass
class _DataType:
    name: str
    predicate: Callable[[Any], bool]
    default_kind: Optional[str] = None


@dataclass
class SplitRegistry:
    """Maps split-kind names to implementations.

    Written during setup and read-only afterwards.
    """

    kinds: dict[str, SplitKind] = field(default_factory=dict)
    data_types: list[_DataType] = field(default_factory=list)

    # -- setup ---------------------------------------------------------------
    def register_split_kind(self, kind: SplitKind) -> SplitKind:
        if kind.name in self.kinds:
            raise DuplicateKind(f"split kind {kind.name!r} is already registered")
        if kind.name in (UNKNOWN_NAME, "_"):
            raise InvalidKind(f"{kind.name!r} is reserved")
        if kind.splitter is not None and kind.info is None:
            raise InvalidKind(f"split kind {kind.name!r} has a splitter but no info function")
        if kind.splitter is None and kind.merger is None:
            raise InvalidKind(f"split kind {kind.name!r} can neither split nor merge")
        self.kinds[kind.name] = kind
        return kind

    def register_data_type(
        self, name: str, predicate: Callable[[Any], bool], default_kind: Optional[str] = None
    ) -> None:
        if default_kind is not None:
            kind = self.get(default_kind)
            if kind.default_constructor is None:
                raise InvalidKind(f"{default_kind!r} has no default constructor")
            if kind.concrete_type != name:
                raise InvalidKind(
                    f"{default_kind!r} splits {kind.concrete_type!r}, not {name!r}"
                )
        self.data_types.append(_DataType(name, predicate, default_kind))

    # -- lookup --------------------------------------------------------------
    def get(self, name: str) -> SplitKind:
        try:
            return self.kinds[name]
        except KeyError:
            raise UnknownKind(f"no split kind named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.kinds

    def data_type_of(self, value: Any) -> Optional[str]:
        for dt in self.data_types:
            if dt.predicate(value):
                return dt.name
        return None

    def default_split_type(self, value: Any) -> Optional[SplitType]:
        """Split type the data type's default constructor assigns to ``value``."""
        for dt in self.data_types:
            if dt.predicate(value) and dt.default_kind is not None:
                return self.get(dt.default_kind).default_constructor(value)
        return None

    def is_splittable(self, st: SplitType) -> bool:
        if isinstance(st, (UnknownSplitType, DeferredSplitType)):
            return False
        kind = self.kinds.get(st.name)
        return kind is not None and kind.splittable

    def element_count(self, st: SplitType) -> Optional[int]:
        """Elements a split type produces, when the parameters alone say so."""
        if not self.is_splittable(st):
            return None
        kind = self.kinds[st.name]
        return None if kind.count is None else kind.count(st.params)

    # -- the splitting API ---------------------------------------------------
    def construct(self, kind_name: str, args: Sequence[Any]) -> SplitType:
        kind = self.get(kind_name)
        if kind.constructor is None:
            params: Sequence[int] = tuple(args)
        else:
            try:
                params = kind.constructor(*args)
            except ConstructorFailure:
                raise
            except (TypeError, ValueError, AttributeError) as exc:
                raise ConstructorFailure(f"{kind_name}: {exc}") from exc
        try:
            return SplitType(kind_name, tuple(params))
        except TypeError as exc:
            raise ConstructorFailure(f"{kind_name}: {exc}") from exc

    def runtime_info(self, value: Any, st: SplitType) -> RuntimeInfo:
        kind = self.get(st.name)
        if kind.info is None:
            raise InvalidKind(f"split kind {st.name!r} has no info function")
        return kind.info(value, st.params)

    def split(
        self,
        value: Any,
        start: int,
        end: int,
        st: SplitType,
        ctx: WorkerContext = WorkerContext(),
        *,
        pedantic: bool = False,
    ):
        """Return the piece of ``value`` covering ``[start, end)``, or ``END``."""
        kind = self.get(st.name)
        if kind.splitter is None:
            raise InvalidKind(f"split kind {st.name!r} is merge-only")
        if start > end:
            raise SplitFailure(f"bad range [{start}, {end})")
        info = kind.info(value, st.params)
        if pedantic:
            expected = self.element_count(st)
            if expected is not None and expected != info.total_elements:
                raise SplitFailure(
                    f"{st} describes {expected} elements but the value has {info.total_elements}"
                )
        if start >= info.total_elements:
            return END
        end = min(end, info.total_elements)
        return SplitPiece(kind.splitter(value, start, end, st.params, ctx), (start, end))

    def merge(self, pieces: Sequence[Any], st: SplitType) -> Any:
        kind = self.get(st.name)
        if kind.merger is None:
            raise MergeFailure(f"split kind {st.name!r} has no merger")
        pieces = list(pieces)
        if not pieces:
            raise MergeFailure("nothing to merge")
        if len(pieces) == 1:
            return pieces[0]
        try:
            return kind.merger(pieces, st.params)
        except MergeFailure:
            raise
        except (ValueError, TypeError) as exc:
            raise MergeFailure(f"{st}: {exc}") from exc
