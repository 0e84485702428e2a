#!/usr/bin/env python3
"""Shipping to plain Wasm engines: erase the annotations.

The stripper type checks first, then drops every secrecy and trust
marker, deletes the classify/declassify coercions, and rewrites each
``select secret`` to a constant-time mask sequence (plain engines may
compile ``select`` with a branch).  The output behaves bit-for-bit like
the original.
"""

from pathlib import Path

from ctwasm import binary, strip, text, validate

ROOT = Path(__file__).resolve().parents[1]

for name in ("tea", "salsa20", "sha256"):
    module = text.parse_module(
        (ROOT / "corpus" / name / "impl.cwat").read_text())
    report = strip.strip_module(module)
    print(f"{name:8s} annotated {report.input_bytes:5d} B  ->  plain "
          f"{report.output_bytes:5d} B   (overhead was "
          f"{100 * (report.size_ratio - 1):.1f}%)  warnings: "
          f"{len(report.warnings)}")

src = """
(module
  (func (export "pick") (param s64 s64 s32) (result s64)
    (select secret (local.get 0) (local.get 1) (local.get 2))))
"""
module = text.parse_module(src)
report = strip.strip_module(module)
print("\nselect secret compiles to a branch-free mask sequence:")
print(text.print_module(report.module))

# the output is ordinary Wasm: our own base validator accepts it, and so
# does any external decoder
validate.validate_module(report.module)
data = binary.encode_module(report.module)
print(f"encodes to {len(data)} bytes of standard bytecode")
