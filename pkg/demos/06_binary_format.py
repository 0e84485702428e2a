#!/usr/bin/env python3
"""The bytecode format: one prefix byte per secret operation.

Public instructions keep their standard single-byte opcodes, so plain
modules encode byte-identically to ordinary Wasm.  Secret operations are
the prefix 0xFE followed by the public counterpart's opcode; the
coercions and ``select secret`` get dedicated payload bytes.
"""

from ctwasm import binary, text

public = text.parse_module(
    '(module (func (export "f") (param i32 i32) (result i32)'
    " local.get 0 local.get 1 i32.add))")
secret = text.parse_module(
    '(module (func (export "f") (param s32 s32) (result s32)'
    " local.get 0 local.get 1 s32.add))")

pub_bytes = binary.encode_module(public)
sec_bytes = binary.encode_module(secret)
print(f"public add body: ...{pub_bytes[-8:].hex()}")
print(f"secret add body: ...{sec_bytes[-9:].hex()}")
print(f"  i32.add is 0x{binary.OPCODES['i32.add']:02x}; s32.add is "
      f"0x{binary.SECRET_PREFIX:02x} 0x{binary.OPCODES['i32.add']:02x}")
print(f"  value types: i32=0x{binary.VALTYPE_CODES[text.VALTYPES_BY_NAME['i32']]:02x} "
      f"s32=0x{binary.VALTYPE_CODES[text.VALTYPES_BY_NAME['s32']]:02x} "
      f"s64=0x{binary.VALTYPE_CODES[text.VALTYPES_BY_NAME['s64']]:02x}")

ct = text.parse_module("""
(module
  (memory 1 secret)
  (global (mut s64) (s64.const -1))
  (func (export "go") trusted (param s32) (result i32)
    local.get 0
    i32.declassify/s32
  )
)
""")
data = binary.encode_module(ct)
back = binary.decode_module(data)
print(f"\nfull round trip over {len(data)} bytes: {back == ct}")

# malformed input is rejected with a coded offset
try:
    binary.decode_module(data[:-3])
except binary.DecodeError as e:
    print(f"truncation detected: {e}")
