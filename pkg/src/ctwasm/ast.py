"""Core types and the instruction grammar.

Everything here is immutable after construction and safe to share.  The
instruction set is WebAssembly MVP extended with secrecy-annotated integer
types (s32/s64), trust-annotated function types, secrecy-annotated
memories, an annotated select, and the classify/declassify coercions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Secrecy(enum.Enum):
    PUBLIC = "public"
    SECRET = "secret"

    def __repr__(self) -> str:
        return self.value


class Trust(enum.Enum):
    TRUSTED = "trusted"
    UNTRUSTED = "untrusted"

    def __repr__(self) -> str:
        return self.value


class Rep(enum.Enum):
    """Machine representation of a value type."""

    I32 = "i32"
    I64 = "i64"
    F32 = "f32"
    F64 = "f64"

    @property
    def bits(self) -> int:
        return 64 if self in (Rep.I64, Rep.F64) else 32

    @property
    def is_int(self) -> bool:
        return self in (Rep.I32, Rep.I64)

    def __repr__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ValType:
    rep: Rep
    sec: Secrecy

    def __post_init__(self) -> None:
        if not self.rep.is_int and self.sec is Secrecy.SECRET:
            raise ValueError(f"float type {self.rep.value} cannot be secret")

    @property
    def name(self) -> str:
        if self.sec is Secrecy.SECRET:
            return "s32" if self.rep is Rep.I32 else "s64"
        return self.rep.value

    @property
    def bits(self) -> int:
        return self.rep.bits

    @property
    def is_int(self) -> bool:
        return self.rep.is_int

    def __repr__(self) -> str:
        return self.name


I32 = ValType(Rep.I32, Secrecy.PUBLIC)
I64 = ValType(Rep.I64, Secrecy.PUBLIC)
F32 = ValType(Rep.F32, Secrecy.PUBLIC)
F64 = ValType(Rep.F64, Secrecy.PUBLIC)
S32 = ValType(Rep.I32, Secrecy.SECRET)
S64 = ValType(Rep.I64, Secrecy.SECRET)

VALTYPES_BY_NAME = {t.name: t for t in (I32, I64, F32, F64, S32, S64)}


def sec_of(t: ValType) -> Secrecy:
    """Secrecy of a value type; floats are always public."""
    return t.sec


def trust_geq(tr: Trust, tr2: Trust) -> bool:
    """True iff code of trust `tr` may call a function of trust `tr2`.

    Trusted code may call anything; untrusted code may only call
    untrusted code.
    """
    return tr is tr2 or (tr is Trust.TRUSTED and tr2 is Trust.UNTRUSTED)


def classify_result(t: ValType) -> ValType:
    """Type produced by classifying a public integer: same width, secret."""
    if not t.is_int or t.sec is not Secrecy.PUBLIC:
        raise ValueError(f"classify requires a public integer type, got {t.name}")
    return ValType(t.rep, Secrecy.SECRET)


def declassify_result(t: ValType) -> ValType:
    """Type produced by declassifying a secret integer: same width, public."""
    if not t.is_int or t.sec is not Secrecy.SECRET:
        raise ValueError(f"declassify requires a secret integer type, got {t.name}")
    return ValType(t.rep, Secrecy.PUBLIC)


@dataclass(frozen=True)
class FuncType:
    trust: Trust
    params: tuple[ValType, ...]
    results: tuple[ValType, ...]

    def __post_init__(self) -> None:
        if len(self.results) > 1:
            raise ValueError("at most one result (MVP arity)")

    def __repr__(self) -> str:
        p = " ".join(t.name for t in self.params)
        r = " ".join(t.name for t in self.results)
        return f"({self.trust.value}: [{p}] -> [{r}])"


# Operator name sets.  Integer div/rem are representable for all integer
# types; the validator rejects them on secret operands.
INT_UNOPS = ("clz", "ctz", "popcnt")
FLOAT_UNOPS = ("neg", "abs", "ceil", "floor", "trunc", "nearest", "sqrt")
INT_BINOPS = (
    "add", "sub", "mul", "div_s", "div_u", "rem_s", "rem_u",
    "and", "or", "xor", "shl", "shr_s", "shr_u", "rotl", "rotr",
)
FLOAT_BINOPS = ("add", "sub", "mul", "div", "min", "max", "copysign")
TESTOPS = ("eqz",)
INT_RELOPS = ("eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u")
FLOAT_RELOPS = ("eq", "ne", "lt", "gt", "le", "ge")

# Binops whose hardware timing depends on operand values.
UNSAFE_BINOPS = frozenset(("div_s", "div_u", "rem_s", "rem_u"))


def is_safe_binop(t: ValType, op: str) -> bool:
    return not (t.is_int and op in UNSAFE_BINOPS)


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    col: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("span start > end")


@dataclass(frozen=True)
class Instr:
    span: SourceSpan | None = field(
        default=None, compare=False, repr=False, kw_only=True
    )


@dataclass(frozen=True)
class Unreachable(Instr):
    pass


@dataclass(frozen=True)
class Nop(Instr):
    pass


@dataclass(frozen=True)
class Drop(Instr):
    pass


@dataclass(frozen=True)
class Select(Instr):
    sec: Secrecy = Secrecy.PUBLIC


@dataclass(frozen=True)
class Block(Instr):
    result: ValType | None
    body: tuple[Instr, ...]


@dataclass(frozen=True)
class Loop(Instr):
    result: ValType | None
    body: tuple[Instr, ...]


@dataclass(frozen=True)
class If(Instr):
    result: ValType | None
    then: tuple[Instr, ...]
    else_: tuple[Instr, ...]


@dataclass(frozen=True)
class Br(Instr):
    label: int


@dataclass(frozen=True)
class BrIf(Instr):
    label: int


@dataclass(frozen=True)
class BrTable(Instr):
    labels: tuple[int, ...]
    default: int


@dataclass(frozen=True)
class Return(Instr):
    pass


@dataclass(frozen=True)
class Call(Instr):
    func: int


@dataclass(frozen=True)
class CallIndirect(Instr):
    type: FuncType  # carries the required trust annotation


@dataclass(frozen=True)
class GetLocal(Instr):
    local: int


@dataclass(frozen=True)
class SetLocal(Instr):
    local: int


@dataclass(frozen=True)
class TeeLocal(Instr):
    local: int


@dataclass(frozen=True)
class GetGlobal(Instr):
    glob: int


@dataclass(frozen=True)
class SetGlobal(Instr):
    glob: int


@dataclass(frozen=True)
class Load(Instr):
    type: ValType
    pack: int | None  # packed width in bits (8/16/32), None = full width
    signed: bool | None  # sign extension for packed loads
    align: int  # log2 alignment
    offset: int

    def __post_init__(self) -> None:
        if self.pack is not None:
            if not self.type.is_int:
                raise ValueError("packed load on float type")
            if self.pack >= self.type.bits:
                raise ValueError("packed width must narrow the type")
            if self.signed is None:
                raise ValueError("packed load requires signedness")
        elif self.signed is not None:
            raise ValueError("full-width load has no signedness")


@dataclass(frozen=True)
class Store(Instr):
    type: ValType
    pack: int | None
    align: int
    offset: int

    def __post_init__(self) -> None:
        if self.pack is not None:
            if not self.type.is_int:
                raise ValueError("packed store on float type")
            if self.pack >= self.type.bits:
                raise ValueError("packed width must narrow the type")


@dataclass(frozen=True)
class MemorySize(Instr):
    pass


@dataclass(frozen=True)
class MemoryGrow(Instr):
    pass


@dataclass(frozen=True)
class Const(Instr):
    type: ValType
    bits: int  # raw payload: unsigned integer / IEEE-754 bit pattern

    def __post_init__(self) -> None:
        if not 0 <= self.bits < (1 << self.type.bits):
            raise ValueError("const payload out of range for type width")


@dataclass(frozen=True)
class Unop(Instr):
    type: ValType
    op: str

    def __post_init__(self) -> None:
        ops = INT_UNOPS if self.type.is_int else FLOAT_UNOPS
        if self.op not in ops:
            raise ValueError(f"no unop {self.op} on {self.type.name}")


@dataclass(frozen=True)
class Binop(Instr):
    type: ValType
    op: str

    def __post_init__(self) -> None:
        ops = INT_BINOPS if self.type.is_int else FLOAT_BINOPS
        if self.op not in ops:
            raise ValueError(f"no binop {self.op} on {self.type.name}")


@dataclass(frozen=True)
class Testop(Instr):
    type: ValType
    op: str = "eqz"

    def __post_init__(self) -> None:
        if not self.type.is_int or self.op not in TESTOPS:
            raise ValueError(f"no testop {self.op} on {self.type.name}")


@dataclass(frozen=True)
class Relop(Instr):
    type: ValType
    op: str

    def __post_init__(self) -> None:
        ops = INT_RELOPS if self.type.is_int else FLOAT_RELOPS
        if self.op not in ops:
            raise ValueError(f"no relop {self.op} on {self.type.name}")


@dataclass(frozen=True)
class Convert(Instr):
    """Numeric conversion t2 -> t1 (wrap/extend/trunc/convert/demote/promote)."""

    to: ValType
    frm: ValType
    sign: str | None  # "s" / "u" where the operation is signed

    def __post_init__(self) -> None:
        if self.to == self.frm:
            raise ValueError("convert requires distinct types")
        no_sign = (
            self.to.is_int and self.frm.is_int and self.to.bits < self.frm.bits
        ) or (not self.to.is_int and not self.frm.is_int)
        if no_sign != (self.sign is None):
            raise ValueError("signedness annotation mismatch for convert")


@dataclass(frozen=True)
class Reinterpret(Instr):
    to: ValType
    frm: ValType

    def __post_init__(self) -> None:
        if self.to.bits != self.frm.bits or self.to.is_int == self.frm.is_int:
            raise ValueError("reinterpret requires int<->float of equal width")


@dataclass(frozen=True)
class Classify(Instr):
    to: ValType
    frm: ValType

    def __post_init__(self) -> None:
        if self.to != classify_result(self.frm):
            raise ValueError("classify requires public -> secret of equal width")


@dataclass(frozen=True)
class Declassify(Instr):
    to: ValType
    frm: ValType

    def __post_init__(self) -> None:
        if self.to != declassify_result(self.frm):
            raise ValueError("declassify requires secret -> public of equal width")


def public_type(t: ValType) -> ValType:
    """The same representation with secrecy erased."""
    return ValType(t.rep, Secrecy.PUBLIC) if t.sec is Secrecy.SECRET else t


def publicize_instr(ins: Instr) -> Instr:
    """Erase secrecy annotations from one non-structured instruction.

    classify/declassify have no public counterpart (they disappear under
    erasure) and block-structured instructions need a recursive walk; both
    are the caller's concern.
    """
    match ins:
        case Select():
            return Select(Secrecy.PUBLIC)
        case Load(type=t, pack=p, signed=s, align=a, offset=o):
            return Load(public_type(t), p, s, a, o)
        case Store(type=t, pack=p, align=a, offset=o):
            return Store(public_type(t), p, a, o)
        case Const(type=t, bits=b):
            return Const(public_type(t), b)
        case Unop(type=t, op=op):
            return Unop(public_type(t), op)
        case Binop(type=t, op=op):
            return Binop(public_type(t), op)
        case Testop(type=t):
            return Testop(public_type(t))
        case Relop(type=t, op=op):
            return Relop(public_type(t), op)
        case Convert(to=to, frm=frm, sign=sg):
            return Convert(public_type(to), public_type(frm), sg)
        case Reinterpret(to=to, frm=frm):
            return Reinterpret(public_type(to), public_type(frm))
        case CallIndirect(type=ft):
            return CallIndirect(FuncType(Trust.UNTRUSTED,
                                         tuple(public_type(t) for t in ft.params),
                                         tuple(public_type(t) for t in ft.results)))
    return ins


# One entry per production of the instruction grammar; the coverage test
# audits this against a checked-in list.
INSTRUCTION_VARIANTS: tuple[type, ...] = (
    Unreachable, Nop, Drop, Select,
    Block, Loop, If, Br, BrIf, BrTable, Return, Call, CallIndirect,
    GetLocal, SetLocal, TeeLocal, GetGlobal, SetGlobal,
    Load, Store, MemorySize, MemoryGrow,
    Const, Unop, Binop, Testop, Relop,
    Convert, Reinterpret, Classify, Declassify,
)


@dataclass(frozen=True)
class Func:
    type: FuncType
    locals: tuple[ValType, ...]
    body: tuple[Instr, ...]
    imported: tuple[str, str] | None = None
    exports: tuple[str, ...] = ()
    name: str | None = field(default=None, compare=False)
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class GlobalVar:
    type: ValType
    mutable: bool
    init: tuple[Instr, ...] | None = None
    imported: tuple[str, str] | None = None
    exports: tuple[str, ...] = ()
    name: str | None = field(default=None, compare=False)
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ElemSeg:
    offset: tuple[Instr, ...]
    funcs: tuple[int, ...]


@dataclass(frozen=True)
class Table:
    min: int
    max: int | None = None
    elems: tuple[ElemSeg, ...] = ()
    imported: tuple[str, str] | None = None
    exports: tuple[str, ...] = ()


@dataclass(frozen=True)
class DataSeg:
    offset: tuple[Instr, ...]
    data: bytes


@dataclass(frozen=True)
class Memory:
    min: int
    max: int | None = None
    sec: Secrecy = Secrecy.PUBLIC
    imported: tuple[str, str] | None = None
    exports: tuple[str, ...] = ()


@dataclass(frozen=True)
class Module:
    funcs: tuple[Func, ...] = ()
    globals: tuple[GlobalVar, ...] = ()
    table: Table | None = None
    memory: Memory | None = None
    data: tuple[DataSeg, ...] = ()

    def __post_init__(self) -> None:
        seen_defined = False
        for f in self.funcs:
            if f.imported is None:
                seen_defined = True
            elif seen_defined:
                raise ValueError("imported functions must precede defined ones")
        seen_defined = False
        for g in self.globals:
            if g.imported is None:
                seen_defined = True
            elif seen_defined:
                raise ValueError("imported globals must precede defined ones")

    def exported(self, name: str):
        """Find an export by name: ('func'|'global'|'table'|'memory', index)."""
        for i, f in enumerate(self.funcs):
            if name in f.exports:
                return ("func", i)
        for i, g in enumerate(self.globals):
            if name in g.exports:
                return ("global", i)
        if self.table is not None and name in self.table.exports:
            return ("table", 0)
        if self.memory is not None and name in self.memory.exports:
            return ("memory", 0)
        return None
