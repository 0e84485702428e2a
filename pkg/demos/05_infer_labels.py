#!/usr/bin/env python3
"""Porting existing Wasm: infer the secrecy labels.

Inference assumes everything is secret and demotes to public only what
the type system forces public (branch conditions, addresses, div/rem
operands) plus everything those flow from.  It never inserts declassify:
an irreducible flow is reported as a conflict with its provenance chain.
"""

from pathlib import Path

from ctwasm import infer, strip, text

ROOT = Path(__file__).resolve().parents[1]

# round trip: strip the annotated corpus, then recover labels
module = text.parse_module((ROOT / "corpus" / "tea" / "impl.cwat").read_text())
plain = strip.strip_module(module).module
result = infer.infer_labels(plain)
print("tea stripped and re-inferred:")
print(f"  solver: {result.iterations} rounds, {result.demotions} demotions")
for f in result.module.module.funcs:
    params = " ".join(t.name for t in f.type.params)
    print(f"  func ({params}) -> "
          f"{' '.join(t.name for t in f.type.results) or '()'}")
for note in result.notes:
    print(f"  note: {note}")

# a flow inference refuses to fix silently
src = """
(module
  (memory 1)
  (func (export "lookup") (param $i i32) (result i32)
    (if (result i32) (i32.load (local.get $i))
      (then (i32.const 1)) (else (i32.const 0)))))
"""
result = infer.infer_labels(text.parse_module(src))
print("\nbranching on loaded (assumed-secret) data is a conflict:")
for c in result.conflicts:
    for link in c.chain:
        print(f"  {link}")
    print(f"  suggestion: {c.suggestion}")

# hints can declare the memory public when the developer knows better
result = infer.infer_labels(text.parse_module(src),
                            infer.Hints(public_memory=True))
print(f"\nwith a public-memory hint the module validates: {result.ok}")
