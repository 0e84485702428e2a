"""Text format parser and printer.

The surface syntax is the familiar s-expression module format plus:
``s32``/``s64`` value types, secret instruction spellings (``s32.add``,
``s64.load`` ...), ``select secret``, ``s32.classify/i32`` and
``i32.declassify/s32`` coercions, an optional ``trusted`` keyword on
functions and on ``call_indirect``, and ``(memory n secret)``.  Every
plain MVP module is accepted unchanged.  Both folded and unfolded
instruction forms are accepted; the printer emits canonical unfolded text.
Legacy mnemonics (``get_local``, ``current_memory``, slash-style
conversions) are accepted as aliases.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

from .ast import (
    F32, F64, FLOAT_BINOPS, FLOAT_RELOPS, FLOAT_UNOPS, I32, I64,
    INT_BINOPS, INT_RELOPS, INT_UNOPS, S32, S64, VALTYPES_BY_NAME,
    Binop, Block, Br, BrIf, BrTable, Call, CallIndirect, Classify, Const,
    Convert, DataSeg, Declassify, Drop, ElemSeg, Func, FuncType, GetGlobal,
    GetLocal, GlobalVar, If, Instr, Load, Loop, Memory, MemoryGrow,
    MemorySize, Module, Nop, Reinterpret, Relop, Return, Secrecy, Select,
    SetGlobal, SetLocal, SourceSpan, Store, Table, TeeLocal, Testop, Trust,
    Unop, Unreachable, ValType,
)


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan | None = None,
                 expected: frozenset[str] | None = None, filename: str = "<input>"):
        self.message = message
        self.span = span
        self.expected = expected or frozenset()
        self.filename = filename
        super().__init__(str(self))

    def __str__(self) -> str:
        loc = f"{self.filename}:{self.span.line}:{self.span.col}" if self.span else self.filename
        msg = f"{loc}: {self.message}"
        if self.expected:
            msg += f" (expected one of: {', '.join(sorted(self.expected))})"
        return msg


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<line_comment>;;[^\n]*)
  | (?P<block_comment>\(;)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<atom>[^\s()";]+)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # "(" | ")" | "atom" | "string"
    text: str
    span: SourceSpan


def _tokenize(src: str, filename: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            span = SourceSpan(pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {src[pos]!r}", span, filename=filename)
        kind = m.lastgroup
        text = m.group()
        start = pos
        if kind == "block_comment":
            # (; ... ;) comments nest
            depth, i = 1, pos + 2
            while depth and i < n:
                if src.startswith("(;", i):
                    depth += 1
                    i += 2
                elif src.startswith(";)", i):
                    depth -= 1
                    i += 2
                else:
                    i += 1
            if depth:
                span = SourceSpan(start, n, line, start - line_start + 1)
                raise ParseError("unterminated block comment", span, filename=filename)
            text = src[pos:i]
            pos = i
        else:
            pos = m.end()
        nl = text.count("\n")
        col = start - line_start + 1
        if kind in ("lparen", "rparen", "string", "atom"):
            span = SourceSpan(start, pos, line, col)
            k = {"lparen": "(", "rparen": ")"}.get(kind, kind)
            tokens.append(Token(k, text, span))
        if nl:
            line += nl
            line_start = start + text.rfind("\n") + 1
    return tokens


# ---------------------------------------------------------------------------
# S-expression reader

@dataclass
class SExpr:
    items: list  # of SExpr | Token
    span: SourceSpan


def _read_sexprs(tokens: list[Token], filename: str) -> list:
    out: list = []
    stack: list[tuple[list, Token]] = []
    cur = out
    for tok in tokens:
        if tok.kind == "(":
            stack.append((cur, tok))
            cur = []
        elif tok.kind == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.span, filename=filename)
            parent, open_tok = stack.pop()
            span = SourceSpan(open_tok.span.start, tok.span.end,
                              open_tok.span.line, open_tok.span.col)
            parent.append(SExpr(cur, span))
            cur = parent
        else:
            cur.append(tok)
    if stack:
        raise ParseError("unclosed '('", stack[-1][1].span, filename=filename)
    return out


# ---------------------------------------------------------------------------
# Literals

def _unescape_string(tok: Token, filename: str) -> bytes:
    s = tok.text[1:-1]
    out = bytearray()
    i = 0
    while i < len(s):
        c = s[i]
        if c != "\\":
            out.extend(c.encode("utf-8"))
            i += 1
            continue
        e = s[i + 1]
        i += 2
        if e == "n":
            out.append(0x0A)
        elif e == "t":
            out.append(0x09)
        elif e == "r":
            out.append(0x0D)
        elif e in ('"', "'", "\\"):
            out.append(ord(e))
        elif e == "u":
            m = re.match(r"\{([0-9a-fA-F]+)\}", s[i:])
            if not m:
                raise ParseError("bad \\u escape", tok.span, filename=filename)
            out.extend(chr(int(m.group(1), 16)).encode("utf-8"))
            i += m.end()
        elif re.match(r"[0-9a-fA-F]", e) and i < len(s) + 1:
            out.append(int(s[i - 1:i + 1], 16))
            i += 1
        else:
            raise ParseError(f"bad string escape \\{e}", tok.span, filename=filename)
    return bytes(out)


_INT_RE = re.compile(r"^[+-]?(0x[0-9a-fA-F][0-9a-fA-F_]*|[0-9][0-9_]*)$")


def _parse_int(text: str) -> int | None:
    if not _INT_RE.match(text):
        return None
    return int(text.replace("_", ""), 0)


def _parse_float(text: str) -> float | None:
    t = text.replace("_", "")
    neg = t.startswith("-")
    if t.startswith(("+", "-")):
        t = t[1:]
    try:
        if t == "inf":
            v = float("inf")
        elif t == "nan":
            v = float("nan")
        elif t.startswith("nan:0x"):
            v = float("nan")  # payload re-canonicalized below by caller
        elif t.startswith("0x"):
            if "p" not in t and "P" not in t and "." not in t:
                v = float(int(t, 16))
            else:
                if "p" not in t and "P" not in t:
                    t += "p0"
                v = float.fromhex(t)
        else:
            v = float(t)
    except (ValueError, OverflowError):
        return None
    return -v if neg else v


def _float_bits(value: float, width: int) -> int:
    if width == 32:
        return struct.unpack("<I", struct.pack("<f", value))[0]
    return struct.unpack("<Q", struct.pack("<d", value))[0]


def _bits_float(bits: int, width: int) -> float:
    if width == 32:
        return struct.unpack("<f", struct.pack("<I", bits))[0]
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


# ---------------------------------------------------------------------------
# Mnemonic tables

_LEGACY_ALIASES = {
    "get_local": "local.get",
    "set_local": "local.set",
    "tee_local": "local.tee",
    "get_global": "global.get",
    "set_global": "global.set",
    "current_memory": "memory.size",
    "grow_memory": "memory.grow",
}

_CONVERT_FORMS: dict[str, Instr] = {}


def _conv(canon: str, instr: Instr, *aliases: str) -> None:
    _CONVERT_FORMS[canon] = instr
    for a in aliases:
        _LEGACY_ALIASES[a] = canon


def _init_convert_forms() -> None:
    _conv("i32.wrap_i64", Convert(I32, I64, None), "i32.wrap/i64")
    _conv("s32.wrap_s64", Convert(S32, S64, None), "s32.wrap/s64")
    for sign in "su":
        _conv(f"i64.extend_i32_{sign}", Convert(I64, I32, sign),
              f"i64.extend_{sign}/i32")
        _conv(f"s64.extend_s32_{sign}", Convert(S64, S32, sign),
              f"s64.extend_{sign}/s32")
        for it, ft in ((I32, F32), (I32, F64), (I64, F32), (I64, F64)):
            _conv(f"{it.name}.trunc_{ft.name}_{sign}", Convert(it, ft, sign),
                  f"{it.name}.trunc_{sign}/{ft.name}")
            _conv(f"{ft.name}.convert_{it.name}_{sign}", Convert(ft, it, sign),
                  f"{ft.name}.convert_{sign}/{it.name}")
    _conv("f32.demote_f64", Convert(F32, F64, None), "f32.demote/f64")
    _conv("f64.promote_f32", Convert(F64, F32, None), "f64.promote/f32")
    for a, b in ((I32, F32), (I64, F64)):
        _conv(f"{a.name}.reinterpret_{b.name}", Reinterpret(a, b),
              f"{a.name}.reinterpret/{b.name}")
        _conv(f"{b.name}.reinterpret_{a.name}", Reinterpret(b, a),
              f"{b.name}.reinterpret/{a.name}")
    # reinterpret with a secret integer side is expressible (and rejected
    # by the type checker, never by the grammar)
    for a, b in ((S32, F32), (S64, F64)):
        _conv(f"{a.name}.reinterpret_{b.name}", Reinterpret(a, b),
              f"{a.name}.reinterpret/{b.name}")
        _conv(f"{b.name}.reinterpret_{a.name}", Reinterpret(b, a),
              f"{b.name}.reinterpret/{a.name}")
    _conv("s32.classify/i32", Classify(S32, I32), "s32.classify", "s32.classify_i32")
    _conv("s64.classify/i64", Classify(S64, I64), "s64.classify", "s64.classify_i64")
    _conv("i32.declassify/s32", Declassify(I32, S32), "i32.declassify",
          "i32.declassify_s32")
    _conv("i64.declassify/s64", Declassify(I64, S64), "i64.declassify",
          "i64.declassify_s64")


_init_convert_forms()

_SIMPLE_OPS: dict[str, Instr] = {
    "unreachable": Unreachable(),
    "nop": Nop(),
    "drop": Drop(),
    "return": Return(),
    "memory.size": MemorySize(),
    "memory.grow": MemoryGrow(),
}

for _t in (I32, I64, S32, S64):
    for _op in INT_UNOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Unop(_t, _op)
    for _op in INT_BINOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Binop(_t, _op)
    _SIMPLE_OPS[f"{_t.name}.eqz"] = Testop(_t)
    for _op in INT_RELOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Relop(_t, _op)
for _t in (F32, F64):
    for _op in FLOAT_UNOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Unop(_t, _op)
    for _op in FLOAT_BINOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Binop(_t, _op)
    for _op in FLOAT_RELOPS:
        _SIMPLE_OPS[f"{_t.name}.{_op}"] = Relop(_t, _op)
_SIMPLE_OPS.update(_CONVERT_FORMS)

_MEM_OPS: dict[str, tuple[str, ValType, int | None, bool | None]] = {}
for _t in (I32, I64, S32, S64, F32, F64):
    _MEM_OPS[f"{_t.name}.load"] = ("load", _t, None, None)
    _MEM_OPS[f"{_t.name}.store"] = ("store", _t, None, None)
for _t in (I32, I64, S32, S64):
    for _pack in (8, 16, 32):
        if _pack >= _t.bits:
            continue
        for _sx in "su":
            _MEM_OPS[f"{_t.name}.load{_pack}_{_sx}"] = ("load", _t, _pack, _sx == "s")
        _MEM_OPS[f"{_t.name}.store{_pack}"] = ("store", _t, _pack, None)


# ---------------------------------------------------------------------------
# Parser

@dataclass
class _FuncDecl:
    name: str | None
    type: FuncType
    param_names: list[str | None]
    local_names: list[str | None]
    locals: list[ValType]
    body_items: list  # raw sexpr items, resolved in a second pass
    imported: tuple[str, str] | None
    exports: list[str]
    span: SourceSpan


class _Names:
    """One name->index map per index space, rejecting duplicates."""

    def __init__(self, filename: str):
        self.filename = filename
        self.spaces: dict[str, dict[str, int]] = {}

    def bind(self, space: str, name: str | None, index: int, span: SourceSpan) -> None:
        if name is None:
            return
        m = self.spaces.setdefault(space, {})
        if name in m:
            raise ParseError(f"duplicate {space} name {name}", span,
                             filename=self.filename)
        m[name] = index

    def resolve(self, space: str, tok: Token) -> int:
        if tok.kind == "atom" and tok.text.startswith("$"):
            m = self.spaces.get(space, {})
            if tok.text not in m:
                raise ParseError(f"unknown {space} {tok.text}", tok.span,
                                 filename=self.filename)
            return m[tok.text]
        value = _parse_int(tok.text) if tok.kind == "atom" else None
        if value is None or value < 0:
            raise ParseError(f"expected {space} index", tok.span,
                             filename=self.filename,
                             expected=frozenset(("integer", "$name")))
        return value


class _Parser:
    def __init__(self, filename: str):
        self.filename = filename
        self.names = _Names(filename)
        self.types: list[FuncType] = []
        self.funcs: list[_FuncDecl] = []
        self.globals: list[GlobalVar] = []
        self.table: Table | None = None
        self.table_elems: list[tuple] = []  # (offset items, func refs)
        self.memory: Memory | None = None
        self.data: list[tuple] = []  # (offset items, bytes)
        self.late_exports: list[tuple] = []  # (name, kind, ref token)

    def err(self, message: str, span: SourceSpan | None = None,
            expected: frozenset[str] | None = None) -> ParseError:
        return ParseError(message, span, expected, self.filename)

    # -- helpers over sexpr items

    def _is_kw(self, item, *words: str) -> bool:
        return isinstance(item, Token) and item.kind == "atom" and item.text in words

    def _head(self, item) -> str | None:
        if isinstance(item, SExpr) and item.items and \
                isinstance(item.items[0], Token) and item.items[0].kind == "atom":
            return item.items[0].text
        return None

    def _valtype(self, tok) -> ValType:
        if isinstance(tok, Token) and tok.kind == "atom" and \
                tok.text in VALTYPES_BY_NAME:
            return VALTYPES_BY_NAME[tok.text]
        span = tok.span if isinstance(tok, (Token, SExpr)) else None
        raise self.err(f"unknown type keyword {getattr(tok, 'text', tok)!r}", span,
                       expected=frozenset(VALTYPES_BY_NAME))

    def _string(self, item) -> str:
        if not (isinstance(item, Token) and item.kind == "string"):
            span = item.span if isinstance(item, (Token, SExpr)) else None
            raise self.err("expected string", span, expected=frozenset(('"..."',)))
        return _unescape_string(item, self.filename).decode("utf-8")

    # -- module

    def parse_module(self, sexprs: list) -> Module:
        if len(sexprs) == 1 and self._head(sexprs[0]) == "module":
            fields = sexprs[0].items[1:]
            if fields and isinstance(fields[0], Token) and \
                    fields[0].text.startswith("$"):
                fields = fields[1:]  # optional module name, ignored
        else:
            fields = sexprs  # bare field list
        for item in fields:
            head = self._head(item)
            if head is None:
                span = item.span if isinstance(item, (Token, SExpr)) else None
                raise self.err("expected module field", span)
            if head == "start":
                raise self.err("start sections are not supported", item.span)
            handler = getattr(self, f"_field_{head}", None)
            if handler is None:
                raise self.err(f"unknown module field ({head} ...)", item.span)
            handler(item)
        return self._build()

    def _field_type(self, s: SExpr) -> None:
        items = s.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        if len(items) != 1 or self._head(items[0]) != "func":
            raise self.err("expected (type $name? (func ...))", s.span)
        ft = self._functype(items[0].items[1:], allow_names=False, span=s.span)[0]
        self.names.bind("type", name, len(self.types), s.span)
        self.types.append(ft)

    def _functype(self, items: list, allow_names: bool, span: SourceSpan,
                  ) -> tuple[FuncType, list[str | None], list]:
        trust = Trust.UNTRUSTED
        if items and self._is_kw(items[0], "trusted", "untrusted"):
            trust = Trust(items[0].text)
            items = items[1:]
        params: list[ValType] = []
        param_names: list[str | None] = []
        results: list[ValType] = []
        i = 0
        while i < len(items) and self._head(items[i]) == "param":
            inner = items[i].items[1:]
            if inner and isinstance(inner[0], Token) and inner[0].text.startswith("$"):
                if not allow_names:
                    raise self.err("named param not allowed here", items[i].span)
                if len(inner) != 2:
                    raise self.err("named param takes one type", items[i].span)
                param_names.append(inner[0].text)
                params.append(self._valtype(inner[1]))
            else:
                for t in inner:
                    params.append(self._valtype(t))
                    param_names.append(None)
            i += 1
        while i < len(items) and self._head(items[i]) == "result":
            for t in items[i].items[1:]:
                results.append(self._valtype(t))
            i += 1
        if len(results) > 1:
            raise self.err("at most one result supported", span)
        return FuncType(trust, tuple(params), tuple(results)), param_names, items[i:]

    def _inline_clauses(self, items: list):
        """Strip leading (export "n")* and optional (import "m" "n")."""
        exports: list[str] = []
        imported = None
        i = 0
        while i < len(items):
            head = self._head(items[i])
            if head == "export":
                exports.append(self._string(items[i].items[1]))
            elif head == "import":
                if imported is not None:
                    raise self.err("duplicate import clause", items[i].span)
                imported = (self._string(items[i].items[1]),
                            self._string(items[i].items[2]))
            else:
                break
            i += 1
        return exports, imported, items[i:]

    def _typeuse(self, items: list, allow_names: bool, span: SourceSpan):
        """(type $t)? (param..)* (result..)? -> (FuncType sans trust, names, rest)."""
        declared: FuncType | None = None
        if items and self._head(items[0]) == "type":
            idx = self.names.resolve("type", items[0].items[1])
            if idx >= len(self.types):
                raise self.err("type index out of range", items[0].span)
            declared = self.types[idx]
            items = items[1:]
        ft, pnames, rest = self._functype(items, allow_names, span)
        if declared is not None:
            if ft.params or ft.results:
                if (ft.params, ft.results) != (declared.params, declared.results):
                    raise self.err("inline signature disagrees with type use", span)
            ft = FuncType(ft.trust, declared.params, declared.results)
            if not pnames:
                pnames = [None] * len(declared.params)
        return ft, pnames, rest

    def _field_func(self, s: SExpr) -> None:
        items = s.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        trust = Trust.UNTRUSTED
        if items and self._is_kw(items[0], "trusted", "untrusted"):
            trust = Trust(items[0].text)
            items = items[1:]
        exports, imported, items = self._inline_clauses(items)
        if items and self._is_kw(items[0], "trusted", "untrusted"):
            trust = Trust(items[0].text)
            items = items[1:]
        ft, pnames, items = self._typeuse(items, allow_names=True, span=s.span)
        ft = FuncType(trust, ft.params, ft.results)
        local_types: list[ValType] = []
        local_names: list[str | None] = []
        while items and self._head(items[0]) == "local":
            inner = items[0].items[1:]
            if inner and isinstance(inner[0], Token) and inner[0].text.startswith("$"):
                if len(inner) != 2:
                    raise self.err("named local takes one type", items[0].span)
                local_names.append(inner[0].text)
                local_types.append(self._valtype(inner[1]))
            else:
                for t in inner:
                    local_types.append(self._valtype(t))
                    local_names.append(None)
            items = items[1:]
        if imported is not None and (local_types or items):
            raise self.err("imported function cannot have a body", s.span)
        self.names.bind("func", name, len(self.funcs), s.span)
        self.funcs.append(_FuncDecl(name, ft, pnames, local_names, local_types,
                                    items, imported, exports, s.span))

    def _limits(self, items: list, span: SourceSpan) -> tuple[int, int | None, list]:
        if not items:
            raise self.err("expected limits", span, expected=frozenset(("integer",)))
        mn = _parse_int(items[0].text) if isinstance(items[0], Token) else None
        if mn is None:
            raise self.err("expected limits", items[0].span,
                           expected=frozenset(("integer",)))
        items = items[1:]
        mx = None
        if items and isinstance(items[0], Token):
            v = _parse_int(items[0].text)
            if v is not None:
                mx = v
                items = items[1:]
        return mn, mx, items

    def _field_memory(self, s: SExpr) -> None:
        if self.memory is not None:
            raise self.err("at most one memory", s.span)
        items = s.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        exports, imported, items = self._inline_clauses(items)
        mn, mx, items = self._limits(items, s.span)
        sec = Secrecy.PUBLIC
        if items and self._is_kw(items[0], "secret", "public"):
            sec = Secrecy(items[0].text)
            items = items[1:]
        if items:
            raise self.err("trailing tokens in memory", s.span)
        self.names.bind("memory", name, 0, s.span)
        self.memory = Memory(mn, mx, sec, imported, tuple(exports))

    def _field_table(self, s: SExpr) -> None:
        if self.table is not None:
            raise self.err("at most one table", s.span)
        items = s.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        exports, imported, items = self._inline_clauses(items)
        mn, mx, items = self._limits(items, s.span)
        if not (len(items) == 1 and self._is_kw(items[0], "funcref", "anyfunc")):
            raise self.err("expected funcref element type", s.span)
        self.names.bind("table", name, 0, s.span)
        self.table = Table(mn, mx, (), imported, tuple(exports))

    def _offset_expr(self, item) -> list:
        if self._head(item) == "offset":
            return item.items[1:]
        return [item]

    def _field_elem(self, s: SExpr) -> None:
        items = s.items[1:]
        if items and isinstance(items[0], Token):  # optional table index
            items = items[1:]
        if not items:
            raise self.err("elem needs an offset", s.span)
        self.table_elems.append((self._offset_expr(items[0]), items[1:], s.span))

    def _field_data(self, s: SExpr) -> None:
        items = s.items[1:]
        if items and isinstance(items[0], Token) and items[0].kind == "atom" \
                and not items[0].text.startswith('"'):
            items = items[1:]  # optional memory index
        if not items:
            raise self.err("data needs an offset", s.span)
        offset = self._offset_expr(items[0])
        chunks = b"".join(
            _unescape_string(it, self.filename) for it in items[1:]
        )
        self.data.append((offset, chunks, s.span))

    def _field_global(self, s: SExpr) -> None:
        items = s.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        exports, imported, items = self._inline_clauses(items)
        if not items:
            raise self.err("global needs a type", s.span)
        mutable = False
        if self._head(items[0]) == "mut":
            mutable = True
            gt = self._valtype(items[0].items[1])
        else:
            gt = self._valtype(items[0])
        init_items = items[1:]
        if imported is not None and init_items:
            raise self.err("imported global cannot have an initializer", s.span)
        self.names.bind("global", name, len(self.globals), s.span)
        self.globals.append(GlobalVar(gt, mutable, None if imported else (),
                                      imported, tuple(exports), name, s.span))
        if imported is None:
            # stash raw items; resolved once names are known
            self._global_inits = getattr(self, "_global_inits", {})
            self._global_inits[len(self.globals) - 1] = init_items

    def _field_import(self, s: SExpr) -> None:
        mod = self._string(s.items[1])
        fld = self._string(s.items[2])
        desc = s.items[3]
        head = self._head(desc)
        items = desc.items[1:]
        name = None
        if items and isinstance(items[0], Token) and items[0].text.startswith("$"):
            name = items[0].text
            items = items[1:]
        if head == "func":
            trust = Trust.UNTRUSTED
            if items and self._is_kw(items[0], "trusted", "untrusted"):
                trust = Trust(items[0].text)
                items = items[1:]
            ft, pnames, rest = self._typeuse(items, allow_names=True, span=desc.span)
            if rest:
                raise self.err("trailing tokens in func import", desc.span)
            ft = FuncType(trust, ft.params, ft.results)
            self.names.bind("func", name, len(self.funcs), s.span)
            self.funcs.append(_FuncDecl(name, ft, pnames, [], [], [],
                                        (mod, fld), [], s.span))
        elif head == "global":
            mutable = False
            if items and self._head(items[0]) == "mut":
                mutable = True
                gt = self._valtype(items[0].items[1])
            else:
                gt = self._valtype(items[0])
            self.names.bind("global", name, len(self.globals), s.span)
            self.globals.append(GlobalVar(gt, mutable, None, (mod, fld), (),
                                          name, s.span))
        elif head == "memory":
            if self.memory is not None:
                raise self.err("at most one memory", s.span)
            mn, mx, items = self._limits(items, desc.span)
            sec = Secrecy.PUBLIC
            if items and self._is_kw(items[0], "secret", "public"):
                sec = Secrecy(items[0].text)
                items = items[1:]
            self.names.bind("memory", name, 0, s.span)
            self.memory = Memory(mn, mx, sec, (mod, fld), ())
        elif head == "table":
            if self.table is not None:
                raise self.err("at most one table", s.span)
            mn, mx, items = self._limits(items, desc.span)
            self.names.bind("table", name, 0, s.span)
            self.table = Table(mn, mx, (), (mod, fld), ())
        else:
            raise self.err("unknown import description", desc.span)

    def _field_export(self, s: SExpr) -> None:
        name = self._string(s.items[1])
        desc = s.items[2]
        head = self._head(desc)
        if head not in ("func", "global", "memory", "table"):
            raise self.err("unknown export description", desc.span)
        self.late_exports.append((name, head, desc.items[1], s.span))

    # -- instruction parsing (second pass, names all bound)

    def _instrs(self, items: list, labels: list[str | None],
                fd: _FuncDecl) -> tuple[Instr, ...]:
        out: list[Instr] = []
        i = 0
        while i < len(items):
            i = self._instr(items, i, out, labels, fd)
        return tuple(out)

    def _local_index(self, tok: Token, fd: _FuncDecl) -> int:
        if tok.text.startswith("$"):
            names = fd.param_names + fd.local_names
            if tok.text in names:
                return names.index(tok.text)
            raise self.err(f"unknown local {tok.text}", tok.span)
        v = _parse_int(tok.text)
        if v is None or v < 0:
            raise self.err("expected local index", tok.span)
        return v

    def _label_index(self, tok: Token, labels: list[str | None]) -> int:
        if tok.text.startswith("$"):
            for depth, ln in enumerate(reversed(labels)):
                if ln == tok.text:
                    return depth
            raise self.err(f"unknown label {tok.text}", tok.span)
        v = _parse_int(tok.text)
        if v is None or v < 0:
            raise self.err("expected label index", tok.span)
        return v

    def _block_intro(self, items: list, i: int, labels: list[str | None]):
        """label? (result t)? -> (label name, result, next index)."""
        name = None
        if i < len(items) and isinstance(items[i], Token) and \
                items[i].text.startswith("$"):
            name = items[i].text
            i += 1
        result = None
        if i < len(items) and self._head(items[i]) == "result":
            inner = items[i].items[1:]
            if len(inner) > 1:
                raise self.err("at most one block result", items[i].span)
            if inner:
                result = self._valtype(inner[0])
            i += 1
        return name, result, i

    def _memarg(self, items: list, i: int, natural: int, span: SourceSpan):
        offset, align = 0, None
        while i < len(items) and isinstance(items[i], Token) and \
                items[i].kind == "atom":
            t = items[i].text
            if t.startswith("offset="):
                offset = _parse_int(t[7:])
                if offset is None:
                    raise self.err("bad offset", items[i].span)
                i += 1
            elif t.startswith("align="):
                a = _parse_int(t[6:])
                if a is None or a <= 0 or a & (a - 1):
                    raise self.err("alignment must be a positive power of 2",
                                   items[i].span)
                align = a.bit_length() - 1
                i += 1
            else:
                break
        if align is None:
            align = natural.bit_length() - 1
        return offset, align, i

    def _const_payload(self, t: ValType, tok, span: SourceSpan) -> int:
        if not isinstance(tok, Token) or tok.kind != "atom":
            raise self.err("expected literal", span)
        if t.is_int:
            v = _parse_int(tok.text)
            if v is None:
                raise self.err(f"bad integer literal {tok.text}", tok.span)
            lo = -(1 << (t.bits - 1))
            hi = (1 << t.bits) - 1
            if not lo <= v <= hi:
                raise self.err(f"literal out of range for {t.name}", tok.span)
            return v & hi
        v = _parse_float(tok.text)
        if v is None:
            raise self.err(f"bad float literal {tok.text}", tok.span)
        m = re.match(r"^[+-]?nan:0x([0-9a-fA-F]+)$", tok.text)
        if m:
            payload = int(m.group(1), 16)
            exp = 0x7F800000 if t.bits == 32 else 0x7FF0000000000000
            sign = (1 << (t.bits - 1)) if tok.text.startswith("-") else 0
            return sign | exp | payload
        return _float_bits(v, t.bits)

    def _instr(self, items: list, i: int, out: list[Instr],
               labels: list[str | None], fd: _FuncDecl) -> int:
        item = items[i]
        if isinstance(item, SExpr):
            return self._folded(item, out, labels, fd, i)
        if item.kind != "atom":
            raise self.err("expected instruction", item.span)
        name = _LEGACY_ALIASES.get(item.text, item.text)
        span = item.span
        i += 1

        if name in _SIMPLE_OPS:
            proto = _SIMPLE_OPS[name]
            out.append(_respan(proto, span))
            return i
        if name == "select":
            sec = Secrecy.PUBLIC
            if i < len(items) and self._is_kw(items[i], "secret", "public"):
                sec = Secrecy(items[i].text)
                i += 1
            out.append(Select(sec, span=span))
            return i
        if name in ("block", "loop"):
            lbl, result, i = self._block_intro(items, i, labels)
            labels.append(lbl)
            body: list[Instr] = []
            while True:
                if i >= len(items):
                    raise self.err(f"unterminated {name}", span,
                                   expected=frozenset(("end",)))
                if self._is_kw(items[i], "end"):
                    i += 1
                    if i < len(items) and isinstance(items[i], Token) and \
                            items[i].text.startswith("$"):
                        i += 1  # trailing label name on end
                    break
                i = self._instr(items, i, body, labels, fd)
            labels.pop()
            cls = Block if name == "block" else Loop
            out.append(cls(result, tuple(body), span=span))
            return i
        if name == "if":
            lbl, result, i = self._block_intro(items, i, labels)
            labels.append(lbl)
            then: list[Instr] = []
            els: list[Instr] = []
            cur = then
            while True:
                if i >= len(items):
                    raise self.err("unterminated if", span,
                                   expected=frozenset(("end", "else")))
                if self._is_kw(items[i], "else"):
                    if cur is els:
                        raise self.err("duplicate else", items[i].span)
                    cur = els
                    i += 1
                    continue
                if self._is_kw(items[i], "end"):
                    i += 1
                    if i < len(items) and isinstance(items[i], Token) and \
                            items[i].text.startswith("$"):
                        i += 1
                    break
                i = self._instr(items, i, cur, labels, fd)
            labels.pop()
            out.append(If(result, tuple(then), tuple(els), span=span))
            return i
        if name in ("br", "br_if"):
            if i >= len(items) or not isinstance(items[i], Token):
                raise self.err(f"{name} needs a label", span)
            depth = self._label_index(items[i], labels)
            cls = Br if name == "br" else BrIf
            out.append(cls(depth, span=span))
            return i + 1
        if name == "br_table":
            targets: list[int] = []
            while i < len(items) and isinstance(items[i], Token) and \
                    items[i].kind == "atom" and \
                    (items[i].text.startswith("$") or
                     _parse_int(items[i].text) is not None):
                targets.append(self._label_index(items[i], labels))
                i += 1
            if not targets:
                raise self.err("br_table needs at least one label", span)
            out.append(BrTable(tuple(targets[:-1]), targets[-1], span=span))
            return i
        if name == "call":
            idx = self.names.resolve("func", items[i])
            out.append(Call(idx, span=span))
            return i + 1
        if name == "call_indirect":
            trust = Trust.UNTRUSTED
            if i < len(items) and self._is_kw(items[i], "trusted", "untrusted"):
                trust = Trust(items[i].text)
                i += 1
            sig_items = []
            while i < len(items) and self._head(items[i]) in ("type", "param", "result"):
                sig_items.append(items[i])
                i += 1
            ft, _, rest = self._typeuse(sig_items, allow_names=False, span=span)
            if rest:
                raise self.err("bad call_indirect signature", span)
            out.append(CallIndirect(FuncType(trust, ft.params, ft.results), span=span))
            return i
        if name in ("local.get", "local.set", "local.tee"):
            idx = self._local_index(items[i], fd)
            cls = {"local.get": GetLocal, "local.set": SetLocal,
                   "local.tee": TeeLocal}[name]
            out.append(cls(idx, span=span))
            return i + 1
        if name in ("global.get", "global.set"):
            idx = self.names.resolve("global", items[i])
            cls = GetGlobal if name == "global.get" else SetGlobal
            out.append(cls(idx, span=span))
            return i + 1
        if name in _MEM_OPS:
            kind, t, pack, signed = _MEM_OPS[name]
            natural = (pack or t.bits) // 8
            offset, align, i = self._memarg(items, i, natural, span)
            if kind == "load":
                out.append(Load(t, pack, signed, align, offset, span=span))
            else:
                out.append(Store(t, pack, align, offset, span=span))
            return i
        if name.endswith(".const"):
            tn = name[:-6]
            if tn not in VALTYPES_BY_NAME:
                raise self.err(f"unknown type keyword {tn!r}", span,
                               expected=frozenset(VALTYPES_BY_NAME))
            t = VALTYPES_BY_NAME[tn]
            if i >= len(items):
                raise self.err("const needs a literal", span)
            bits = self._const_payload(t, items[i], span)
            out.append(Const(t, bits, span=span))
            return i + 1
        raise self.err(f"unknown instruction {item.text!r}", span)

    def _folded(self, s: SExpr, out: list[Instr], labels: list[str | None],
                fd: _FuncDecl, outer_i: int) -> int:
        head = s.items[0]
        if not (isinstance(head, Token) and head.kind == "atom"):
            raise self.err("expected instruction", s.span)
        name = _LEGACY_ALIASES.get(head.text, head.text)
        items = s.items
        if name in ("block", "loop"):
            lbl, result, j = self._block_intro(items, 1, labels)
            labels.append(lbl)
            body = self._instrs(items[j:], labels, fd)
            labels.pop()
            cls = Block if name == "block" else Loop
            out.append(cls(result, body, span=s.span))
            return outer_i + 1
        if name == "if":
            lbl, result, j = self._block_intro(items, 1, labels)
            # condition = folded instrs before (then ...)
            k = j
            while k < len(items) and self._head(items[k]) not in ("then", "else"):
                k = self._instr(items, k, out, labels, fd)
            labels.append(lbl)
            then: tuple[Instr, ...] = ()
            els: tuple[Instr, ...] = ()
            if k < len(items) and self._head(items[k]) == "then":
                then = self._instrs(items[k].items[1:], labels, fd)
                k += 1
            else:
                raise self.err("folded if needs (then ...)", s.span,
                               expected=frozenset(("then",)))
            if k < len(items) and self._head(items[k]) == "else":
                els = self._instrs(items[k].items[1:], labels, fd)
                k += 1
            if k != len(items):
                raise self.err("trailing tokens in folded if", s.span)
            labels.pop()
            out.append(If(result, then, els, span=s.span))
            return outer_i + 1
        # general folded op: trailing sexprs are operands, emitted first
        j = 1
        plain: list = [head]
        while j < len(items) and not isinstance(items[j], SExpr):
            plain.append(items[j])
            j += 1
        # call_indirect signature clauses stay attached to the op
        while name == "call_indirect" and j < len(items) and \
                self._head(items[j]) in ("type", "param", "result"):
            plain.append(items[j])
            j += 1
        for k in range(j, len(items)):
            if not isinstance(items[k], SExpr):
                raise self.err("operand atoms must precede folded operands",
                               items[k].span)
            self._folded(items[k], out, labels, fd, 0)
        consumed = self._instr(plain, 0, out, labels, fd)
        if consumed != len(plain):
            raise self.err("trailing tokens in folded instruction", s.span)
        return outer_i + 1

    # -- assembly

    def _const_expr(self, items: list, what: str, span: SourceSpan) -> tuple[Instr, ...]:
        dummy = _FuncDecl(None, FuncType(Trust.UNTRUSTED, (), ()), [], [], [],
                          [], None, [], span)
        instrs = self._instrs(items, [], dummy)
        if not instrs:
            raise self.err(f"{what} needs a constant expression", span)
        return instrs

    def _build(self) -> Module:
        funcs = []
        for fd in self.funcs:
            body = () if fd.imported else self._instrs(fd.body_items, [], fd)
            funcs.append(Func(fd.type, tuple(fd.locals), body, fd.imported,
                              tuple(fd.exports), fd.name, fd.span))
        globals_ = []
        inits = getattr(self, "_global_inits", {})
        for gi, g in enumerate(self.globals):
            if g.imported is None:
                init = self._const_expr(inits.get(gi, []), "global", g.span)
                globals_.append(GlobalVar(g.type, g.mutable, init, None,
                                          g.exports, g.name, g.span))
            else:
                globals_.append(g)
        table = self.table
        if self.table_elems:
            if table is None:
                raise self.err("elem segment without a table",
                               self.table_elems[0][2])
            segs = []
            for offset_items, ref_items, span in self.table_elems:
                offset = self._const_expr(offset_items, "elem", span)
                refs = tuple(self.names.resolve("func", t) for t in ref_items)
                for r in refs:
                    if r >= len(self.funcs):
                        raise self.err("elem function index out of range", span)
                segs.append(ElemSeg(offset, refs))
            table = Table(table.min, table.max, tuple(segs), table.imported,
                          table.exports)
        data = []
        for offset_items, chunk, span in self.data:
            if self.memory is None:
                raise self.err("data segment without a memory", span)
            data.append(DataSeg(self._const_expr(offset_items, "data", span), chunk))
        memory = self.memory
        # attach standalone exports
        extra: dict[tuple[str, int], list[str]] = {}
        for name, kind, ref, span in self.late_exports:
            if kind == "func":
                idx = self.names.resolve("func", ref)
                if idx >= len(funcs):
                    raise self.err("export func index out of range", span)
            elif kind == "global":
                idx = self.names.resolve("global", ref)
                if idx >= len(globals_):
                    raise self.err("export global index out of range", span)
            else:
                idx = self.names.resolve(kind, ref)
                if idx != 0 or (kind == "memory" and memory is None) or \
                        (kind == "table" and table is None):
                    raise self.err(f"export {kind} index out of range", span)
            extra.setdefault((kind, idx), []).append(name)
        if extra:
            funcs = [
                Func(f.type, f.locals, f.body, f.imported,
                     f.exports + tuple(extra.get(("func", i), ())), f.name, f.span)
                for i, f in enumerate(funcs)
            ]
            globals_ = [
                GlobalVar(g.type, g.mutable, g.init, g.imported,
                          g.exports + tuple(extra.get(("global", i), ())),
                          g.name, g.span)
                for i, g in enumerate(globals_)
            ]
            if ("table", 0) in extra and table is not None:
                table = Table(table.min, table.max, table.elems, table.imported,
                              table.exports + tuple(extra[("table", 0)]))
            if ("memory", 0) in extra and memory is not None:
                memory = Memory(memory.min, memory.max, memory.sec,
                                memory.imported,
                                memory.exports + tuple(extra[("memory", 0)]))
        names = [n for f in funcs for n in f.exports]
        names += [n for g in globals_ for n in g.exports]
        names += list(table.exports) if table else []
        names += list(memory.exports) if memory else []
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise self.err(f"duplicate export name {sorted(dup)[0]!r}")
        return Module(tuple(funcs), tuple(globals_), table, memory, tuple(data))


def _respan(proto: Instr, span: SourceSpan) -> Instr:
    clone = object.__new__(type(proto))
    clone.__dict__.update(proto.__dict__)
    object.__setattr__(clone, "span", span)
    return clone


def parse_module(text: str, filename: str = "<input>") -> Module:
    """Parse module text into an AST; raises ParseError with location."""
    tokens = _tokenize(text, filename)
    sexprs = _read_sexprs(tokens, filename)
    if not sexprs:
        raise ParseError("empty input", None, filename=filename)
    return _Parser(filename).parse_module(sexprs)


# ---------------------------------------------------------------------------
# Printer

_CONVERT_NAMES = {
    (ins.to, ins.frm, getattr(ins, "sign", None)): name
    for name, ins in _CONVERT_FORMS.items()
    if isinstance(ins, Convert)
}
_REINTERPRET_NAMES = {
    (ins.to, ins.frm): name
    for name, ins in _CONVERT_FORMS.items()
    if isinstance(ins, Reinterpret)
}


def instr_name(ins: Instr) -> str:
    """Canonical mnemonic (sans immediates) for any instruction."""
    match ins:
        case Unreachable():
            return "unreachable"
        case Nop():
            return "nop"
        case Drop():
            return "drop"
        case Select(sec):
            return "select secret" if sec is Secrecy.SECRET else "select"
        case Block():
            return "block"
        case Loop():
            return "loop"
        case If():
            return "if"
        case Br():
            return "br"
        case BrIf():
            return "br_if"
        case BrTable():
            return "br_table"
        case Return():
            return "return"
        case Call():
            return "call"
        case CallIndirect():
            return "call_indirect"
        case GetLocal():
            return "local.get"
        case SetLocal():
            return "local.set"
        case TeeLocal():
            return "local.tee"
        case GetGlobal():
            return "global.get"
        case SetGlobal():
            return "global.set"
        case Load(type=t, pack=pack, signed=signed):
            if pack is None:
                return f"{t.name}.load"
            return f"{t.name}.load{pack}_{'s' if signed else 'u'}"
        case Store(type=t, pack=pack):
            return f"{t.name}.store" if pack is None else f"{t.name}.store{pack}"
        case MemorySize():
            return "memory.size"
        case MemoryGrow():
            return "memory.grow"
        case Const(type=t):
            return f"{t.name}.const"
        case Unop(type=t, op=op) | Binop(type=t, op=op) | Relop(type=t, op=op):
            return f"{t.name}.{op}"
        case Testop(type=t):
            return f"{t.name}.eqz"
        case Convert(to=to, frm=frm, sign=sign):
            return _CONVERT_NAMES[(to, frm, sign)]
        case Reinterpret(to=to, frm=frm):
            return _REINTERPRET_NAMES[(to, frm)]
        case Classify(to=to, frm=frm):
            return f"{to.name}.classify/{frm.name}"
        case Declassify(to=to, frm=frm):
            return f"{to.name}.declassify/{frm.name}"
    raise TypeError(f"unknown instruction {ins!r}")


def _const_literal(t: ValType, bits: int) -> str:
    if t.is_int:
        hi = 1 << t.bits
        return str(bits - hi if bits >= hi >> 1 else bits)
    v = _bits_float(bits, t.bits)
    if v != v:  # NaN: preserve payload
        exp = 0x7F800000 if t.bits == 32 else 0x7FF0000000000000
        sign = "-" if bits >> (t.bits - 1) else ""
        payload = bits & ((exp >> 1) ^ exp ^ ((1 << (t.bits - 1)) - 1))
        payload = bits & ~(exp | (1 << (t.bits - 1))) & ((1 << t.bits) - 1)
        return f"{sign}nan:0x{payload:x}"
    if v in (float("inf"), float("-inf")):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _memarg_text(ins: Load | Store) -> str:
    natural = (ins.pack or ins.type.bits) // 8
    parts = []
    if ins.offset:
        parts.append(f"offset={ins.offset}")
    if (1 << ins.align) != natural:
        parts.append(f"align={1 << ins.align}")
    return (" " + " ".join(parts)) if parts else ""


class _Printer:
    def __init__(self) -> None:
        self.lines: list[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    def instrs(self, body: tuple[Instr, ...], depth: int) -> None:
        for ins in body:
            self.instr(ins, depth)

    def _blockhead(self, name: str, result: ValType | None) -> str:
        return f"{name} (result {result.name})" if result else name

    def instr(self, ins: Instr, depth: int) -> None:
        match ins:
            case Block(result=r, body=b) | Loop(result=r, body=b):
                self.emit(depth, self._blockhead(instr_name(ins), r))
                self.instrs(b, depth + 1)
                self.emit(depth, "end")
            case If(result=r, then=t, else_=e):
                self.emit(depth, self._blockhead("if", r))
                self.instrs(t, depth + 1)
                if e:
                    self.emit(depth, "else")
                    self.instrs(e, depth + 1)
                self.emit(depth, "end")
            case Br(label=k) | BrIf(label=k):
                self.emit(depth, f"{instr_name(ins)} {k}")
            case BrTable(labels=ls, default=d):
                self.emit(depth, "br_table " + " ".join(str(k) for k in (*ls, d)))
            case Call(func=k):
                self.emit(depth, f"call {k}")
            case CallIndirect(type=ft):
                sig = "".join(f" (param {t.name})" for t in ft.params)
                sig += "".join(f" (result {t.name})" for t in ft.results)
                trust = " trusted" if ft.trust is Trust.TRUSTED else ""
                self.emit(depth, f"call_indirect{trust}{sig}")
            case GetLocal(local=k) | SetLocal(local=k) | TeeLocal(local=k):
                self.emit(depth, f"{instr_name(ins)} {k}")
            case GetGlobal(glob=k) | SetGlobal(glob=k):
                self.emit(depth, f"{instr_name(ins)} {k}")
            case Load() | Store():
                self.emit(depth, instr_name(ins) + _memarg_text(ins))
            case Const(type=t, bits=bits):
                self.emit(depth, f"{t.name}.const {_const_literal(t, bits)}")
            case _:
                self.emit(depth, instr_name(ins))

    def _inline(self, exports: tuple[str, ...],
                imported: tuple[str, str] | None) -> str:
        out = "".join(f' (export "{e}")' for e in exports)
        if imported:
            out += f' (import "{imported[0]}" "{imported[1]}")'
        return out

    def module(self, m: Module) -> str:
        self.emit(0, "(module")
        for f in m.funcs:
            head = "(func" + self._inline(f.exports, f.imported)
            if f.type.trust is Trust.TRUSTED:
                head += " trusted"
            head += "".join(f" (param {t.name})" for t in f.type.params)
            head += "".join(f" (result {t.name})" for t in f.type.results)
            if f.imported is not None:
                self.emit(1, head + ")")
                continue
            self.emit(1, head)
            if f.locals:
                self.emit(2, "(local " + " ".join(t.name for t in f.locals) + ")")
            self.instrs(f.body, 2)
            self.emit(1, ")")
        if m.table is not None:
            t = m.table
            lim = f"{t.min}" + (f" {t.max}" if t.max is not None else "")
            self.emit(1, f"(table{self._inline(t.exports, t.imported)} {lim} funcref)")
            for seg in t.elems:
                off = self._expr_inline(seg.offset)
                refs = " ".join(str(k) for k in seg.funcs)
                self.emit(1, f"(elem {off} {refs})".rstrip() + "")
        if m.memory is not None:
            mem = m.memory
            lim = f"{mem.min}" + (f" {mem.max}" if mem.max is not None else "")
            sec = " secret" if mem.sec is Secrecy.SECRET else ""
            self.emit(1, f"(memory{self._inline(mem.exports, mem.imported)} {lim}{sec})")
        for seg in m.data:
            off = self._expr_inline(seg.offset)
            self.emit(1, f'(data {off} "{_escape_bytes(seg.data)}")')
        for g in m.globals:
            gt = f"(mut {g.type.name})" if g.mutable else g.type.name
            head = f"(global{self._inline(g.exports, g.imported)} {gt}"
            if g.init is not None:
                head += f" {self._expr_inline(g.init)}"
            self.emit(1, head + ")")
        self.emit(0, ")")
        return "\n".join(self.lines) + "\n"

    def _expr_inline(self, instrs: tuple[Instr, ...]) -> str:
        parts = []
        for ins in instrs:
            sub = _Printer()
            sub.instr(ins, 0)
            parts.append("(" + " ".join(line.strip() for line in sub.lines) + ")")
        return " ".join(parts)


def _escape_bytes(data: bytes) -> str:
    out = []
    for b in data:
        if b in (0x22, 0x5C):
            out.append("\\" + chr(b))
        elif 0x20 <= b < 0x7F:
            out.append(chr(b))
        else:
            out.append(f"\\{b:02x}")
    return "".join(out)


def print_module(m: Module) -> str:
    """Canonical text for a module; parse_module(print_module(m)) == m."""
    return _Printer().module(m)
