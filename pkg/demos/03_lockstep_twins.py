#!/usr/bin/env python3
"""Testing the constant-time guarantee by twin execution.

Two instantiations that differ only in secret inputs are stepped in
lockstep; if their leakage traces ever differ, the pair is a concrete
counterexample.  Well-typed untrusted code never diverges; a module with
the checker bypassed shows what a violation looks like.
"""

from pathlib import Path

from ctwasm import leakage, text, validate
from ctwasm.corpus import load_entry

ROOT = Path(__file__).resolve().parents[1]

entry = load_entry(ROOT / "corpus" / "salsa20")
typed = validate.validate_module(entry.module, annotate=True)

report = leakage.randomized_ct_trial(typed, entry.trial, trials=25, seed=1,
                                     vary=["key"])
print(f"salsa20 stream_xor: {report.passed}/{report.trials} trials with "
      f"all-zero vs random keys are indistinguishable")

report = leakage.randomized_ct_trial(typed, entry.trial, trials=25, seed=1)
print(f"varying key AND message: {report.passed}/{report.trials} trials "
      "indistinguishable")

# now a deliberately broken module: branch on a secret, checker bypassed
src = """
(module
  (memory 1 secret)
  (func (export "leaky") (result i32)
    (if (result i32) (s32.load (i32.const 0))
      (then (i32.const 1)) (else (i32.const 0)))))
"""
bad = validate.flatten_unchecked(text.parse_module(src))
verdict = leakage.lockstep_check(
    bad, "leaky", [], [],
    image_a={0: bytes(4)}, image_b={0: (99).to_bytes(4, "little")},
    require_untrusted=False)
print(f"\nbroken module verdict: {verdict.kind} at step {verdict.step}")
print(f"  zero-key twin observed:   {verdict.action_a}")
print(f"  random-key twin observed: {verdict.action_b}")
print(f"  at {verdict.location}")
