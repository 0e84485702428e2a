"""Binary encoder and decoder.

Modules with no security annotations encode byte-identically to standard
MVP bytecode.  Annotated constructs use reserved encodings:

- value types: s32 = 0x6F, s64 = 0x6E (standard codes otherwise)
- function types: 0x60 untrusted, 0x5F trusted
- memory limits: flag bit 0x04 marks a secret memory
- secret instructions: prefix byte 0xFE followed by the public
  counterpart's opcode, so every secret operation is exactly two opcode
  bytes and every public one stays a single byte
- 0xFE 0xC0 / 0xFE 0xC1: classify to s32 / s64
- 0xFE 0xC2 / 0xFE 0xC3: declassify to i32 / i64
- 0xFE 0x1B: select secret
- call_indirect: the MVP reserved byte after the type index carries the
  trust annotation (0x00 untrusted, matching MVP bytes; 0x01 trusted)

This table is normative for the toolchain; nothing here is inherited
from any engine's internal numbering.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast
from .ast import (
    F32, F64, I32, I64, S32, S64, FuncType, Instr, Module, Secrecy, Trust,
    ValType,
)

MAGIC = b"\0asm"
VERSION = b"\x01\x00\x00\x00"

VALTYPE_CODES = {I32: 0x7F, I64: 0x7E, F32: 0x7D, F64: 0x7C,
                 S32: 0x6F, S64: 0x6E}
CODE_VALTYPES = {v: k for k, v in VALTYPE_CODES.items()}

FUNCTYPE_UNTRUSTED = 0x60
FUNCTYPE_TRUSTED = 0x5F
ELEMTYPE_FUNCREF = 0x70
BLOCKTYPE_EMPTY = 0x40
SECRET_PREFIX = 0xFE
OP_CLASSIFY_S32 = 0xC0
OP_CLASSIFY_S64 = 0xC1
OP_DECLASSIFY_I32 = 0xC2
OP_DECLASSIFY_I64 = 0xC3
MEMORY_SECRET_FLAG = 0x04

# Public single-byte opcodes (standard MVP assignments).
OPCODES: dict[str, int] = {
    "unreachable": 0x00, "nop": 0x01, "block": 0x02, "loop": 0x03,
    "if": 0x04, "else": 0x05, "end": 0x0B, "br": 0x0C, "br_if": 0x0D,
    "br_table": 0x0E, "return": 0x0F, "call": 0x10, "call_indirect": 0x11,
    "drop": 0x1A, "select": 0x1B,
    "local.get": 0x20, "local.set": 0x21, "local.tee": 0x22,
    "global.get": 0x23, "global.set": 0x24,
    "i32.load": 0x28, "i64.load": 0x29, "f32.load": 0x2A, "f64.load": 0x2B,
    "i32.load8_s": 0x2C, "i32.load8_u": 0x2D, "i32.load16_s": 0x2E,
    "i32.load16_u": 0x2F, "i64.load8_s": 0x30, "i64.load8_u": 0x31,
    "i64.load16_s": 0x32, "i64.load16_u": 0x33, "i64.load32_s": 0x34,
    "i64.load32_u": 0x35, "i32.store": 0x36, "i64.store": 0x37,
    "f32.store": 0x38, "f64.store": 0x39, "i32.store8": 0x3A,
    "i32.store16": 0x3B, "i64.store8": 0x3C, "i64.store16": 0x3D,
    "i64.store32": 0x3E, "memory.size": 0x3F, "memory.grow": 0x40,
    "i32.const": 0x41, "i64.const": 0x42, "f32.const": 0x43, "f64.const": 0x44,
    "i32.eqz": 0x45, "i32.eq": 0x46, "i32.ne": 0x47, "i32.lt_s": 0x48,
    "i32.lt_u": 0x49, "i32.gt_s": 0x4A, "i32.gt_u": 0x4B, "i32.le_s": 0x4C,
    "i32.le_u": 0x4D, "i32.ge_s": 0x4E, "i32.ge_u": 0x4F,
    "i64.eqz": 0x50, "i64.eq": 0x51, "i64.ne": 0x52, "i64.lt_s": 0x53,
    "i64.lt_u": 0x54, "i64.gt_s": 0x55, "i64.gt_u": 0x56, "i64.le_s": 0x57,
    "i64.le_u": 0x58, "i64.ge_s": 0x59, "i64.ge_u": 0x5A,
    "f32.eq": 0x5B, "f32.ne": 0x5C, "f32.lt": 0x5D, "f32.gt": 0x5E,
    "f32.le": 0x5F, "f32.ge": 0x60,
    "f64.eq": 0x61, "f64.ne": 0x62, "f64.lt": 0x63, "f64.gt": 0x64,
    "f64.le": 0x65, "f64.ge": 0x66,
    "i32.clz": 0x67, "i32.ctz": 0x68, "i32.popcnt": 0x69, "i32.add": 0x6A,
    "i32.sub": 0x6B, "i32.mul": 0x6C, "i32.div_s": 0x6D, "i32.div_u": 0x6E,
    "i32.rem_s": 0x6F, "i32.rem_u": 0x70, "i32.and": 0x71, "i32.or": 0x72,
    "i32.xor": 0x73, "i32.shl": 0x74, "i32.shr_s": 0x75, "i32.shr_u": 0x76,
    "i32.rotl": 0x77, "i32.rotr": 0x78,
    "i64.clz": 0x79, "i64.ctz": 0x7A, "i64.popcnt": 0x7B, "i64.add": 0x7C,
    "i64.sub": 0x7D, "i64.mul": 0x7E, "i64.div_s": 0x7F, "i64.div_u": 0x80,
    "i64.rem_s": 0x81, "i64.rem_u": 0x82, "i64.and": 0x83, "i64.or": 0x84,
    "i64.xor": 0x85, "i64.shl": 0x86, "i64.shr_s": 0x87, "i64.shr_u": 0x88,
    "i64.rotl": 0x89, "i64.rotr": 0x8A,
    "f32.abs": 0x8B, "f32.neg": 0x8C, "f32.ceil": 0x8D, "f32.floor": 0x8E,
    "f32.trunc": 0x8F, "f32.nearest": 0x90, "f32.sqrt": 0x91, "f32.add": 0x92,
    "f32.sub": 0x93, "f32.mul": 0x94, "f32.div": 0x95, "f32.min": 0x96,
    "f32.max": 0x97, "f32.copysign": 0x98,
    "f64.abs": 0x99, "f64.neg": 0x9A, "f64.ceil": 0x9B, "f64.floor": 0x9C,
    "f64.trunc": 0x9D, "f64.nearest": 0x9E, "f64.sqrt": 0x9F, "f64.add": 0xA0,
    "f64.sub": 0xA1, "f64.mul": 0xA2, "f64.div": 0xA3, "f64.min": 0xA4,
    "f64.max": 0xA5, "f64.copysign": 0xA6,
    "i32.wrap_i64": 0xA7, "i32.trunc_f32_s": 0xA8, "i32.trunc_f32_u": 0xA9,
    "i32.trunc_f64_s": 0xAA, "i32.trunc_f64_u": 0xAB,
    "i64.extend_i32_s": 0xAC, "i64.extend_i32_u": 0xAD,
    "i64.trunc_f32_s": 0xAE, "i64.trunc_f32_u": 0xAF,
    "i64.trunc_f64_s": 0xB0, "i64.trunc_f64_u": 0xB1,
    "f32.convert_i32_s": 0xB2, "f32.convert_i32_u": 0xB3,
    "f32.convert_i64_s": 0xB4, "f32.convert_i64_u": 0xB5,
    "f32.demote_f64": 0xB6,
    "f64.convert_i32_s": 0xB7, "f64.convert_i32_u": 0xB8,
    "f64.convert_i64_s": 0xB9, "f64.convert_i64_u": 0xBA,
    "f64.promote_f32": 0xBB,
    "i32.reinterpret_f32": 0xBC, "i64.reinterpret_f64": 0xBD,
    "f32.reinterpret_i32": 0xBE, "f64.reinterpret_i64": 0xBF,
}
OPCODE_NAMES = {v: k for k, v in OPCODES.items()}

# Aggregate view for the injectivity audit.
ENCODING_TABLE = {
    "valtypes": VALTYPE_CODES,
    "opcodes": OPCODES,
    "secret_prefix": SECRET_PREFIX,
    "secret_specials": {
        "classify/s32": OP_CLASSIFY_S32, "classify/s64": OP_CLASSIFY_S64,
        "declassify/i32": OP_DECLASSIFY_I32, "declassify/i64": OP_DECLASSIFY_I64,
        "select-secret": OPCODES["select"],
    },
    "functype": {Trust.UNTRUSTED: FUNCTYPE_UNTRUSTED,
                 Trust.TRUSTED: FUNCTYPE_TRUSTED},
    "memory_secret_flag": MEMORY_SECRET_FLAG,
}


class EncodeError(Exception):
    pass


@dataclass
class DecodeError(Exception):
    code: str
    offset: int
    message: str

    def __str__(self) -> str:
        return f"{self.code} at byte {self.offset}: {self.message}"


# --------------------------------------------------------------------------
# LEB128

def uleb(n: int) -> bytes:
    if n < 0:
        raise EncodeError("negative value in unsigned field")
    if n >= 1 << 32:
        raise EncodeError(f"index {n} exceeds the u32 range")
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def sleb(n: int, bits: int) -> bytes:
    lo, hi = -(1 << (bits - 1)), (1 << bits) - 1
    if not lo <= n <= hi:
        raise EncodeError(f"constant {n} exceeds the s{bits} range")
    if n >= 1 << (bits - 1):
        n -= 1 << bits  # canonical signed interpretation of the payload
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if (n == 0 and not b & 0x40) or (n == -1 and b & 0x40):
            out.append(b)
            return bytes(out)
        out.append(b | 0x80)


def _public_name(ins: Instr) -> str:
    """Mnemonic of the public counterpart (s-types lowered to i-types)."""
    from .text import instr_name

    return instr_name(ast.publicize_instr(ins))


def _is_secret_instr(ins: Instr) -> bool:
    t = getattr(ins, "type", None)
    if isinstance(t, ValType) and t.sec is Secrecy.SECRET:
        return True
    match ins:
        case ast.Convert(to=to, frm=frm) | ast.Reinterpret(to=to, frm=frm):
            return Secrecy.SECRET in (to.sec, frm.sec)
    return False


# --------------------------------------------------------------------------
# Encoder

class _TypeTable:
    def __init__(self) -> None:
        self.types: list[FuncType] = []
        self.index: dict[FuncType, int] = {}

    def add(self, ft: FuncType) -> int:
        if ft not in self.index:
            self.index[ft] = len(self.types)
            self.types.append(ft)
        return self.index[ft]


def _collect_types(m: Module) -> _TypeTable:
    # first-appearance order, interleaving each signature with the type
    # uses in its body (matching reference assemblers byte-for-byte)
    table = _TypeTable()

    def scan(body):
        for ins in body:
            match ins:
                case ast.CallIndirect(type=ft):
                    table.add(FuncType(Trust.UNTRUSTED, ft.params, ft.results))
                case ast.Block(body=b) | ast.Loop(body=b):
                    scan(b)
                case ast.If(then=t, else_=e):
                    scan(t)
                    scan(e)

    for f in m.funcs:
        if f.imported is not None:
            table.add(f.type)
    for f in m.funcs:
        if f.imported is None:
            table.add(f.type)
            scan(f.body)
    return table


def _limits(mn: int, mx: int | None, secret: bool = False) -> bytes:
    flags = (1 if mx is not None else 0) | (MEMORY_SECRET_FLAG if secret else 0)
    out = bytes([flags]) + uleb(mn)
    if mx is not None:
        out += uleb(mx)
    return out


def _name(s: str) -> bytes:
    raw = s.encode("utf-8")
    return uleb(len(raw)) + raw


def _blocktype(r: ValType | None) -> bytes:
    return bytes([BLOCKTYPE_EMPTY if r is None else VALTYPE_CODES[r]])


class _BodyEncoder:
    def __init__(self, types: _TypeTable):
        self.types = types
        self.out = bytearray()

    def op(self, ins: Instr) -> None:
        name = _public_name(ins)
        if _is_secret_instr(ins):
            self.out.append(SECRET_PREFIX)
        self.out.append(OPCODES[name])

    def instr(self, ins: Instr) -> None:
        out = self.out
        match ins:
            case ast.Block(result=r, body=b) | ast.Loop(result=r, body=b):
                self.op(ins)
                out += _blocktype(r)
                for i in b:
                    self.instr(i)
                out.append(OPCODES["end"])
            case ast.If(result=r, then=t, else_=e):
                self.op(ins)
                out += _blocktype(r)
                for i in t:
                    self.instr(i)
                if e:
                    out.append(OPCODES["else"])
                    for i in e:
                        self.instr(i)
                out.append(OPCODES["end"])
            case ast.Br(label=k) | ast.BrIf(label=k):
                self.op(ins)
                out += uleb(k)
            case ast.BrTable(labels=ls, default=d):
                self.op(ins)
                out += uleb(len(ls))
                for k in ls:
                    out += uleb(k)
                out += uleb(d)
            case ast.Call(func=k):
                self.op(ins)
                out += uleb(k)
            case ast.CallIndirect(type=ft):
                self.op(ins)
                key = FuncType(Trust.UNTRUSTED, ft.params, ft.results)
                out += uleb(self.types.index[key])
                out.append(0x01 if ft.trust is Trust.TRUSTED else 0x00)
            case (ast.GetLocal(local=k) | ast.SetLocal(local=k)
                  | ast.TeeLocal(local=k)):
                self.op(ins)
                out += uleb(k)
            case ast.GetGlobal(glob=k) | ast.SetGlobal(glob=k):
                self.op(ins)
                out += uleb(k)
            case ast.Load(align=a, offset=o) | ast.Store(align=a, offset=o):
                self.op(ins)
                out += uleb(a) + uleb(o)
            case ast.MemorySize() | ast.MemoryGrow():
                self.op(ins)
                out.append(0x00)  # MVP reserved memory index
            case ast.Const(type=t, bits=bits):
                self.op(ins)
                if t.rep is ast.Rep.I32:
                    out += sleb(bits, 32)
                elif t.rep is ast.Rep.I64:
                    out += sleb(bits, 64)
                else:
                    out += bits.to_bytes(t.bits // 8, "little")
            case ast.Classify(to=to):
                out.append(SECRET_PREFIX)
                out.append(OP_CLASSIFY_S32 if to.rep is ast.Rep.I32
                           else OP_CLASSIFY_S64)
            case ast.Declassify(to=to):
                out.append(SECRET_PREFIX)
                out.append(OP_DECLASSIFY_I32 if to.rep is ast.Rep.I32
                           else OP_DECLASSIFY_I64)
            case ast.Select(sec=sec):
                if sec is Secrecy.SECRET:
                    out.append(SECRET_PREFIX)
                out.append(OPCODES["select"])
            case _:
                self.op(ins)


def _expr(types: _TypeTable, body: tuple[Instr, ...]) -> bytes:
    enc = _BodyEncoder(types)
    for ins in body:
        enc.instr(ins)
    enc.out.append(OPCODES["end"])
    return bytes(enc.out)


def _section(sid: int, payload: bytes) -> bytes:
    return bytes([sid]) + uleb(len(payload)) + payload


def _vec(items: list[bytes]) -> bytes:
    return uleb(len(items)) + b"".join(items)


def encode_module(m: Module) -> bytes:
    """Encode to bytes; inverse of decode_module."""
    types = _collect_types(m)
    out = bytearray(MAGIC + VERSION)

    entries = []
    for ft in types.types:
        code = FUNCTYPE_TRUSTED if ft.trust is Trust.TRUSTED \
            else FUNCTYPE_UNTRUSTED
        entry = bytes([code])
        entry += _vec([bytes([VALTYPE_CODES[t]]) for t in ft.params])
        entry += _vec([bytes([VALTYPE_CODES[t]]) for t in ft.results])
        entries.append(entry)
    if entries:
        out += _section(1, _vec(entries))

    imports = []
    for f in m.funcs:
        if f.imported is not None:
            imports.append(_name(f.imported[0]) + _name(f.imported[1]) +
                           b"\x00" + uleb(types.index[f.type]))
    if m.table is not None and m.table.imported is not None:
        imports.append(_name(m.table.imported[0]) + _name(m.table.imported[1]) +
                       b"\x01" + bytes([ELEMTYPE_FUNCREF]) +
                       _limits(m.table.min, m.table.max))
    if m.memory is not None and m.memory.imported is not None:
        imports.append(_name(m.memory.imported[0]) + _name(m.memory.imported[1]) +
                       b"\x02" + _limits(m.memory.min, m.memory.max,
                                         m.memory.sec is Secrecy.SECRET))
    for g in m.globals:
        if g.imported is not None:
            imports.append(_name(g.imported[0]) + _name(g.imported[1]) +
                           b"\x03" + bytes([VALTYPE_CODES[g.type],
                                            1 if g.mutable else 0]))
    if imports:
        out += _section(2, _vec(imports))

    defined = [f for f in m.funcs if f.imported is None]
    if defined:
        out += _section(3, _vec([uleb(types.index[f.type]) for f in defined]))

    if m.table is not None and m.table.imported is None:
        out += _section(4, _vec([bytes([ELEMTYPE_FUNCREF]) +
                                 _limits(m.table.min, m.table.max)]))

    if m.memory is not None and m.memory.imported is None:
        out += _section(5, _vec([_limits(m.memory.min, m.memory.max,
                                         m.memory.sec is Secrecy.SECRET)]))

    own_globals = [g for g in m.globals if g.imported is None]
    if own_globals:
        entries = [bytes([VALTYPE_CODES[g.type], 1 if g.mutable else 0]) +
                   _expr(types, g.init) for g in own_globals]
        out += _section(6, _vec(entries))

    exports = []
    for i, f in enumerate(m.funcs):
        for name in f.exports:
            exports.append(_name(name) + b"\x00" + uleb(i))
    if m.table is not None:
        for name in m.table.exports:
            exports.append(_name(name) + b"\x01" + uleb(0))
    if m.memory is not None:
        for name in m.memory.exports:
            exports.append(_name(name) + b"\x02" + uleb(0))
    for i, g in enumerate(m.globals):
        for name in g.exports:
            exports.append(_name(name) + b"\x03" + uleb(i))
    if exports:
        out += _section(7, _vec(exports))

    if m.table is not None and m.table.elems:
        segs = [uleb(0) + _expr(types, seg.offset) +
                _vec([uleb(fi) for fi in seg.funcs])
                for seg in m.table.elems]
        out += _section(9, _vec(segs))

    if defined:
        bodies = []
        for f in defined:
            runs: list[tuple[int, ValType]] = []
            for t in f.locals:
                if runs and runs[-1][1] == t:
                    runs[-1] = (runs[-1][0] + 1, t)
                else:
                    runs.append((1, t))
            body = _vec([uleb(n) + bytes([VALTYPE_CODES[t]]) for n, t in runs])
            body += _expr(types, f.body)
            bodies.append(uleb(len(body)) + body)
        out += _section(10, _vec(bodies))

    if m.data:
        segs = [uleb(0) + _expr(types, seg.offset) +
                uleb(len(seg.data)) + seg.data for seg in m.data]
        out += _section(11, _vec(segs))

    return bytes(out)


# --------------------------------------------------------------------------
# Decoder

class _Reader:
    def __init__(self, data: bytes, base: int = 0):
        self.data = data
        self.pos = 0
        self.base = base  # absolute offset of data[0] in the module

    @property
    def offset(self) -> int:
        return self.base + self.pos

    def eof(self) -> bool:
        return self.pos >= len(self.data)

    def fail(self, code: str, message: str):
        raise DecodeError(code, self.offset, message)

    def byte(self) -> int:
        if self.pos >= len(self.data):
            self.fail("TruncatedSection", "unexpected end of input")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            self.fail("TruncatedSection", f"need {n} bytes")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift >= 35:
                self.fail("IndexOverflow", "u32 LEB128 too long")
        if result >= 1 << 32:
            self.fail("IndexOverflow", "u32 out of range")
        return result

    def s_n(self, bits: int) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift >= bits + 7:
                self.fail("IndexOverflow", f"s{bits} LEB128 too long")
        if b & 0x40 and shift < bits:
            result |= -1 << shift
        return result & ((1 << bits) - 1)

    def name(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail("MalformedSection", "export/import name is not UTF-8")

    def valtype(self) -> ValType:
        b = self.byte()
        if b not in CODE_VALTYPES:
            self.fail("UnknownType", f"value type code 0x{b:02x}")
        return CODE_VALTYPES[b]

    def limits(self, allow_secret: bool = False):
        flags = self.byte()
        known = 0x01 | (MEMORY_SECRET_FLAG if allow_secret else 0)
        if flags & ~known:
            self.fail("MalformedSection", f"limits flags 0x{flags:02x}")
        mn = self.u32()
        mx = self.u32() if flags & 1 else None
        return mn, mx, bool(flags & MEMORY_SECRET_FLAG)


_SIMPLE_DECODE: dict[int, Instr] | None = None


def _simple_decode_table() -> dict[int, Instr]:
    # every no-immediate public instruction, keyed by opcode
    global _SIMPLE_DECODE
    if _SIMPLE_DECODE is None:
        from .text import _SIMPLE_OPS
        table = {}
        for name, proto in _SIMPLE_OPS.items():
            if name in OPCODES and not _is_secret_instr(proto):
                table[OPCODES[name]] = proto
        table[OPCODES["unreachable"]] = ast.Unreachable()
        table[OPCODES["nop"]] = ast.Nop()
        table[OPCODES["drop"]] = ast.Drop()
        table[OPCODES["return"]] = ast.Return()
        _SIMPLE_DECODE = table
    return _SIMPLE_DECODE


_MEM_DECODE: dict[str, tuple] = {}
for _t in (I32, I64, F32, F64):
    _MEM_DECODE[f"{_t.name}.load"] = ("load", _t, None, None)
    _MEM_DECODE[f"{_t.name}.store"] = ("store", _t, None, None)
for _t in (I32, I64):
    for _p in (8, 16, 32):
        if _p >= _t.bits:
            continue
        for _s in "su":
            _MEM_DECODE[f"{_t.name}.load{_p}_{_s}"] = ("load", _t, _p, _s == "s")
        _MEM_DECODE[f"{_t.name}.store{_p}"] = ("store", _t, _p, None)


def _secretize(ins: Instr, r: _Reader) -> Instr:
    """Lift a decoded public instruction to its secret counterpart."""
    def sec(t: ValType) -> ValType:
        if not t.is_int:
            r.fail("UnknownSecretOpcode", "float operation under secret prefix")
        return ValType(t.rep, Secrecy.SECRET)

    match ins:
        case ast.Select():
            return ast.Select(Secrecy.SECRET)
        case ast.Load(type=t, pack=p, signed=s, align=a, offset=o):
            return ast.Load(sec(t), p, s, a, o)
        case ast.Store(type=t, pack=p, align=a, offset=o):
            return ast.Store(sec(t), p, a, o)
        case ast.Const(type=t, bits=b):
            return ast.Const(sec(t), b)
        case ast.Unop(type=t, op=op):
            return ast.Unop(sec(t), op)
        case ast.Binop(type=t, op=op):
            return ast.Binop(sec(t), op)
        case ast.Testop(type=t):
            return ast.Testop(sec(t))
        case ast.Relop(type=t, op=op):
            return ast.Relop(sec(t), op)
        case ast.Convert(to=to, frm=frm, sign=sg):
            if not (to.is_int and frm.is_int):
                r.fail("UnknownSecretOpcode",
                       "float conversion under secret prefix")
            return ast.Convert(sec(to), sec(frm), sg)
        case ast.Reinterpret(to=to, frm=frm):
            # representable (and rejected later by the type checker)
            if to.is_int:
                return ast.Reinterpret(sec(to), frm)
            return ast.Reinterpret(to, sec(frm))
    r.fail("UnknownSecretOpcode", "operation has no secret form")


class _BodyDecoder:
    def __init__(self, r: _Reader, types: list[FuncType]):
        self.r = r
        self.types = types

    def _memarg(self):
        align = self.r.u32()
        offset = self.r.u32()
        return align, offset

    def instr(self, opcode: int, secret: bool) -> Instr:
        r = self.r
        if opcode in (OPCODES["block"], OPCODES["loop"]):
            result = self._blocktype()
            body = self.block(("end",))[0]
            cls = ast.Block if opcode == OPCODES["block"] else ast.Loop
            return cls(result, body)
        if opcode == OPCODES["if"]:
            result = self._blocktype()
            then, stop = self.block(("end", "else"))
            els: tuple[Instr, ...] = ()
            if stop == "else":
                els = self.block(("end",))[0]
            return ast.If(result, then, els)
        if opcode == OPCODES["br"]:
            return ast.Br(r.u32())
        if opcode == OPCODES["br_if"]:
            return ast.BrIf(r.u32())
        if opcode == OPCODES["br_table"]:
            labels = tuple(r.u32() for _ in range(r.u32()))
            return ast.BrTable(labels, r.u32())
        if opcode == OPCODES["call"]:
            return ast.Call(r.u32())
        if opcode == OPCODES["call_indirect"]:
            ti = r.u32()
            if ti >= len(self.types):
                r.fail("IndexOverflow", f"type index {ti}")
            flag = r.byte()
            if flag not in (0, 1):
                r.fail("MalformedSection",
                       f"call_indirect trust flag 0x{flag:02x}")
            ft = self.types[ti]
            trust = Trust.TRUSTED if flag else Trust.UNTRUSTED
            return ast.CallIndirect(FuncType(trust, ft.params, ft.results))
        if opcode == OPCODES["local.get"]:
            return ast.GetLocal(r.u32())
        if opcode == OPCODES["local.set"]:
            return ast.SetLocal(r.u32())
        if opcode == OPCODES["local.tee"]:
            return ast.TeeLocal(r.u32())
        if opcode == OPCODES["global.get"]:
            return ast.GetGlobal(r.u32())
        if opcode == OPCODES["global.set"]:
            return ast.SetGlobal(r.u32())
        if opcode in (OPCODES["memory.size"], OPCODES["memory.grow"]):
            if r.byte() != 0:
                r.fail("MalformedSection", "nonzero reserved memory index")
            return ast.MemorySize() if opcode == OPCODES["memory.size"] \
                else ast.MemoryGrow()
        name = OPCODE_NAMES.get(opcode)
        if name is None:
            r.fail("UnknownOpcode", f"opcode 0x{opcode:02x}")
        if name in _MEM_DECODE:
            kind, t, pack, signed = _MEM_DECODE[name]
            align, offset = self._memarg()
            ins = ast.Load(t, pack, signed, align, offset) if kind == "load" \
                else ast.Store(t, pack, align, offset)
            return ins
        if name == "i32.const":
            return ast.Const(I32, r.s_n(32))
        if name == "i64.const":
            return ast.Const(I64, r.s_n(64))
        if name == "f32.const":
            return ast.Const(F32, int.from_bytes(r.take(4), "little"))
        if name == "f64.const":
            return ast.Const(F64, int.from_bytes(r.take(8), "little"))
        if name == "select":
            return ast.Select(Secrecy.PUBLIC)
        simple = _simple_decode_table().get(opcode)
        if simple is not None:
            return simple
        r.fail("UnknownOpcode", f"opcode 0x{opcode:02x} ({name})")

    def _blocktype(self) -> ValType | None:
        b = self.r.byte()
        if b == BLOCKTYPE_EMPTY:
            return None
        if b not in CODE_VALTYPES:
            self.r.fail("UnknownType", f"block type 0x{b:02x}")
        return CODE_VALTYPES[b]

    def block(self, stops: tuple[str, ...]):
        r = self.r
        out: list[Instr] = []
        while True:
            opcode = r.byte()
            if opcode == OPCODES["end"] and "end" in stops:
                return tuple(out), "end"
            if opcode == OPCODES["else"] and "else" in stops:
                return tuple(out), "else"
            if opcode == SECRET_PREFIX:
                payload = r.byte()
                if payload == OP_CLASSIFY_S32:
                    out.append(ast.Classify(S32, I32))
                elif payload == OP_CLASSIFY_S64:
                    out.append(ast.Classify(S64, I64))
                elif payload == OP_DECLASSIFY_I32:
                    out.append(ast.Declassify(I32, S32))
                elif payload == OP_DECLASSIFY_I64:
                    out.append(ast.Declassify(I64, S64))
                else:
                    if payload not in OPCODE_NAMES:
                        r.fail("UnknownSecretOpcode",
                               f"payload 0x{payload:02x}")
                    out.append(_secretize(self.instr(payload, True), r))
            else:
                out.append(self.instr(opcode, False))


def decode_module(data: bytes) -> Module:
    """Decode bytes to an AST module; rejects malformed input with a
    coded DecodeError carrying the byte offset."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise DecodeError("BadMagic", 0, "missing \\0asm magic")
    if r.take(4) != VERSION:
        raise DecodeError("BadVersion", 4, "unsupported version")

    sections: dict[int, _Reader] = {}
    last_id = 0
    while not r.eof():
        sid = r.byte()
        size = r.u32()
        payload = r.take(size)
        if sid == 0:
            continue  # custom sections are skipped
        if sid > 11:
            raise DecodeError("UnknownSection", r.offset, f"id {sid}")
        if sid <= last_id:
            raise DecodeError("SectionOrderViolation", r.offset,
                              f"section {sid} after {last_id}")
        last_id = sid
        sections[sid] = _Reader(payload, r.offset - size)

    types: list[FuncType] = []
    if 1 in sections:
        s = sections[1]
        for _ in range(s.u32()):
            code = s.byte()
            if code not in (FUNCTYPE_UNTRUSTED, FUNCTYPE_TRUSTED):
                s.fail("UnknownType", f"functype code 0x{code:02x}")
            trust = Trust.TRUSTED if code == FUNCTYPE_TRUSTED else Trust.UNTRUSTED
            params = tuple(s.valtype() for _ in range(s.u32()))
            results = tuple(s.valtype() for _ in range(s.u32()))
            if len(results) > 1:
                s.fail("MalformedSection", "multiple results")
            types.append(FuncType(trust, params, results))

    funcs: list[dict] = []
    globals_: list[ast.GlobalVar] = []
    table: ast.Table | None = None
    memory: ast.Memory | None = None

    def typeref(s: _Reader) -> FuncType:
        ti = s.u32()
        if ti >= len(types):
            s.fail("IndexOverflow", f"type index {ti}")
        return types[ti]

    if 2 in sections:
        s = sections[2]
        for _ in range(s.u32()):
            mod, field_ = s.name(), s.name()
            kind = s.byte()
            if kind == 0:
                funcs.append({"type": typeref(s), "imported": (mod, field_)})
            elif kind == 1:
                if s.byte() != ELEMTYPE_FUNCREF:
                    s.fail("UnknownType", "table element type")
                mn, mx, _ = s.limits()
                table = ast.Table(mn, mx, (), (mod, field_), ())
            elif kind == 2:
                mn, mx, secret = s.limits(allow_secret=True)
                memory = ast.Memory(mn, mx, Secrecy.SECRET if secret
                                    else Secrecy.PUBLIC, (mod, field_), ())
            elif kind == 3:
                t = s.valtype()
                mut = s.byte()
                globals_.append(ast.GlobalVar(t, bool(mut), None,
                                              (mod, field_), ()))
            else:
                s.fail("MalformedSection", f"import kind {kind}")

    n_imported = len(funcs)
    if 3 in sections:
        s = sections[3]
        for _ in range(s.u32()):
            funcs.append({"type": typeref(s), "imported": None})

    if 4 in sections:
        s = sections[4]
        if s.u32() != 1:
            s.fail("MalformedSection", "table count must be 1")
        if table is not None:
            s.fail("MalformedSection", "second table")
        if s.byte() != ELEMTYPE_FUNCREF:
            s.fail("UnknownType", "table element type")
        mn, mx, _ = s.limits()
        table = ast.Table(mn, mx, (), None, ())

    if 5 in sections:
        s = sections[5]
        if s.u32() != 1:
            s.fail("MalformedSection", "memory count must be 1")
        if memory is not None:
            s.fail("MalformedSection", "second memory")
        mn, mx, secret = s.limits(allow_secret=True)
        memory = ast.Memory(mn, mx, Secrecy.SECRET if secret
                            else Secrecy.PUBLIC, None, ())

    def const_expr(s: _Reader) -> tuple[Instr, ...]:
        dec = _BodyDecoder(s, types)
        body, _ = dec.block(("end",))
        return body

    if 6 in sections:
        s = sections[6]
        for _ in range(s.u32()):
            t = s.valtype()
            mut = s.byte()
            init = const_expr(s)
            globals_.append(ast.GlobalVar(t, bool(mut), init, None, ()))

    exports: list[tuple[str, int, int]] = []
    if 7 in sections:
        s = sections[7]
        for _ in range(s.u32()):
            name = s.name()
            kind = s.byte()
            idx = s.u32()
            if kind > 3:
                s.fail("MalformedSection", f"export kind {kind}")
            exports.append((name, kind, idx))

    elems: list[ast.ElemSeg] = []
    if 9 in sections:
        s = sections[9]
        for _ in range(s.u32()):
            if s.u32() != 0:
                s.fail("MalformedSection", "table index must be 0")
            offset = const_expr(s)
            refs = tuple(s.u32() for _ in range(s.u32()))
            elems.append(ast.ElemSeg(offset, refs))
    if elems:
        if table is None:
            raise DecodeError("MalformedSection", 0, "elem without table")
        table = ast.Table(table.min, table.max, tuple(elems),
                          table.imported, table.exports)

    bodies: list[tuple[tuple[ValType, ...], tuple[Instr, ...]]] = []
    if 10 in sections:
        s = sections[10]
        for _ in range(s.u32()):
            size = s.u32()
            sub = _Reader(s.take(size), s.offset - size)
            locals_: list[ValType] = []
            for _ in range(sub.u32()):
                n = sub.u32()
                t = sub.valtype()
                if len(locals_) + n > 100_000:
                    sub.fail("MalformedSection", "too many locals")
                locals_.extend([t] * n)
            dec = _BodyDecoder(sub, types)
            body, _ = dec.block(("end",))
            if not sub.eof():
                sub.fail("MalformedSection", "trailing bytes after body end")
            bodies.append((tuple(locals_), body))
    if len(bodies) != len(funcs) - n_imported:
        raise DecodeError("MalformedSection", 0,
                          "function and code section lengths disagree")

    data: list[ast.DataSeg] = []
    if 11 in sections:
        s = sections[11]
        for _ in range(s.u32()):
            if s.u32() != 0:
                s.fail("MalformedSection", "memory index must be 0")
            offset = const_expr(s)
            data.append(ast.DataSeg(offset, bytes(s.take(s.u32()))))

    out_funcs: list[ast.Func] = []
    for i, fd in enumerate(funcs):
        if fd["imported"] is not None:
            out_funcs.append(ast.Func(fd["type"], (), (), fd["imported"], ()))
        else:
            locals_, body = bodies[i - n_imported]
            out_funcs.append(ast.Func(fd["type"], locals_, body, None, ()))

    ex_funcs: dict[int, list[str]] = {}
    ex_globals: dict[int, list[str]] = {}
    ex_table: list[str] = []
    ex_memory: list[str] = []
    for name, kind, idx in exports:
        if kind == 0:
            if idx >= len(out_funcs):
                raise DecodeError("IndexOverflow", 0, f"export func {idx}")
            ex_funcs.setdefault(idx, []).append(name)
        elif kind == 3:
            if idx >= len(globals_):
                raise DecodeError("IndexOverflow", 0, f"export global {idx}")
            ex_globals.setdefault(idx, []).append(name)
        elif kind == 1:
            if table is None or idx != 0:
                raise DecodeError("IndexOverflow", 0, f"export table {idx}")
            ex_table.append(name)
        else:
            if memory is None or idx != 0:
                raise DecodeError("IndexOverflow", 0, f"export memory {idx}")
            ex_memory.append(name)
    out_funcs = [
        ast.Func(f.type, f.locals, f.body, f.imported,
                 tuple(ex_funcs.get(i, ())))
        for i, f in enumerate(out_funcs)
    ]
    globals_ = [
        ast.GlobalVar(g.type, g.mutable, g.init, g.imported,
                      tuple(ex_globals.get(i, ())))
        for i, g in enumerate(globals_)
    ]
    if table is not None and ex_table:
        table = ast.Table(table.min, table.max, table.elems, table.imported,
                          tuple(ex_table))
    if memory is not None and ex_memory:
        memory = ast.Memory(memory.min, memory.max, memory.sec,
                            memory.imported, tuple(ex_memory))

    return Module(tuple(out_funcs), tuple(globals_), table, memory, tuple(data))
