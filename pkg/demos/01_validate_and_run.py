#!/usr/bin/env python3
"""Parse, type check, and run a secrecy-typed module.

TEA's block and key live in a secret memory; the type checker proves no
instruction can leak them, and the interpreter runs the cipher while
recording what an attacker would observe.
"""

from pathlib import Path

from ctwasm import interp, text, validate
from ctwasm.interp import Store, parse_value

ROOT = Path(__file__).resolve().parents[1]

src = (ROOT / "corpus" / "tea" / "impl.cwat").read_text()
module = text.parse_module(src, "tea.cwat")
typed = validate.validate_module(module)
print(f"tea.cwat: {len(module.funcs)} functions validate "
      f"({typed.stats['instrs']} instructions, all untrusted)")

store, inst = interp.instantiate(Store(), typed)
memory = store.mems[store.insts[inst].mem_addr].data

# v = two 32-bit words at 0, key = four words at 16 (all secret bytes)
memory[0:8] = bytes(8)
memory[16:32] = bytes(16)
out = interp.invoke(store, inst, "tea_encrypt",
                    [parse_value("i32:0"), parse_value("i32:16")])
print(f"tea_encrypt ran {out.steps} steps -> ciphertext "
      f"{bytes(memory[0:8]).hex()}")

# the checker rejects the obvious leak: branching on key material
leaky = """
(module
  (memory 1 secret)
  (func (export "bad") (result i32)
    (if (result i32) (s32.load (i32.const 16))
      (then (i32.const 1)) (else (i32.const 0)))))
"""
_, errors = validate.check_module(text.parse_module(leaky, "leaky.cwat"))
print("\nleaky variant is rejected:")
for e in errors:
    print(f"  {e}")
