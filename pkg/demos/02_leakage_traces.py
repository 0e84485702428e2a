#!/usr/bin/env python3
"""What an attacker observes: the per-step leakage trace.

Every executed instruction emits one action.  Safe operations leak only
their opcode; branches leak the taken condition; memory accesses leak the
address (and the value too when the memory is public); div/rem leak their
operand values, which is why they are forbidden on secrets.
"""

from ctwasm import interp, text, validate
from ctwasm.interp import Store, parse_value

src = """
(module
  (memory 1 secret)
  (func (export "demo") (param $x s32) (param $n i32) (result s32)
    (s32.store (i32.const 0) (local.get $x))
    (if (i32.ge_u (local.get $n) (i32.const 2))
      (then (s32.store (i32.const 4) (s32.load (i32.const 0)))))
    (s32.add (s32.load (i32.const 0)) (local.get $x))
  )
)
"""
typed = validate.validate_module(text.parse_module(src))
store, inst = interp.instantiate(Store(), typed)
out = interp.invoke(store, inst, "demo",
                    [parse_value("s32:12345"), parse_value("i32:3")])

print("action trace (what the leakage model exposes):")
for i, action in enumerate(out.trace):
    print(f"  {i:2d}  {action}")

print("\nnote: the stores into the secret memory show the address and the")
print("width, but no value payload; the secret 12345 never appears above.")

pub = """
(module
  (memory 1)
  (func (export "demo") (param $a i32 ) (param $b i32) (result i32)
    (i32.store (i32.const 0) (local.get $a))
    (i32.div_u (i32.load (i32.const 0)) (local.get $b))
  )
)
"""
typed = validate.validate_module(text.parse_module(pub))
store, inst = interp.instantiate(Store(), typed)
out = interp.invoke(store, inst, "demo",
                    [parse_value("i32:84"), parse_value("i32:2")])
print("\npublic module for contrast (values visible, div leaks operands):")
for i, action in enumerate(out.trace):
    print(f"  {i:2d}  {action}")
