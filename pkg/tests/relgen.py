"""Random values, actions, and configurations for relation-property tests.

Draws from small pools so that related pairs occur often enough for the
symmetry/transitivity checks to exercise the positive cases.
"""

from __future__ import annotations

import random

from ctwasm import ast, interp, text, validate
from ctwasm.interp import Store, Value

ALL_TYPES = (ast.I32, ast.I64, ast.F32, ast.F64, ast.S32, ast.S64)


def random_value(rng: random.Random) -> Value:
    t = rng.choice(ALL_TYPES)
    bits = rng.choice((0, 1, 7, 0xFF, rng.getrandbits(t.bits)))
    return Value(t, bits)


def value_triple(rng: random.Random) -> tuple[Value, Value, Value]:
    """Triples biased toward related pairs (same type, often same bits)."""
    t = rng.choice(ALL_TYPES)
    pool = [rng.choice((0, 1, 5)) for _ in range(2)]

    def one():
        if rng.random() < 0.3:
            return random_value(rng)
        return Value(t, rng.choice(pool))
    return one(), one(), one()


_OPS = ("i32.add", "s32.add", "s64.xor", "local.get", "end", "call")


def random_action(rng: random.Random) -> tuple:
    kind = rng.randrange(8)
    if kind == 0:
        return ("op", rng.choice(_OPS))
    if kind == 1:
        return ("branch", rng.choice(("if", "br_if", "br_table", "select")),
                rng.choice((0, 1, 2)))
    if kind == 2:
        return ("secret-select",)
    if kind == 3:
        return ("mem", rng.choice(("load", "store")), rng.choice((0, 16)),
                4, rng.choice((None, 0, 258)))
    if kind == 4:
        return ("unsafe-binop", rng.choice(("div_u", "rem_s")),
                rng.choice((7, 9)), rng.choice((2, 3)))
    if kind == 5:
        return ("grow", 1, rng.choice((1, 64)), rng.choice((1, 0xFFFFFFFF)))
    if kind == 6:
        return ("call", rng.choice((0, 1)))
    return ("call-indirect", rng.choice((0, 1)))


def action_triple(rng: random.Random) -> tuple[tuple, tuple, tuple]:
    if rng.random() < 0.5:
        a = random_action(rng)
        near = a if rng.random() < 0.7 else random_action(rng)
        return a, near, random_action(rng)
    return random_action(rng), random_action(rng), random_action(rng)


_CFG_SRC = """
(module
  (memory 1 secret)
  (global $acc (mut s64) (s64.const 0))
  (global $pub (mut i32) (i32.const 0))
  (func (export "work") (param $secret s32) (param $rounds i32)
    (local $i i32)
    (block $done
      (loop $top
        (br_if $done (i32.ge_u (local.get $i) (local.get $rounds)))
        (s32.store (i32.const 64)
          (s32.add (s32.load (i32.const 64)) (local.get $secret)))
        (global.set $acc (s64.add (global.get $acc)
          (s64.extend_s32_u (s32.load (i32.const 64)))))
        (global.set $pub (i32.add (global.get $pub) (i32.const 1)))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $top)
      )
    )
  )
)
"""

_cfg_module = None


def _module():
    global _cfg_module
    if _cfg_module is None:
        _cfg_module = validate.validate_module(text.parse_module(_CFG_SRC),
                                               annotate=True)
    return _cfg_module


def make_config(rng: random.Random, family: tuple | None = None):
    """A mid-run configuration.

    ``family`` fixes the public skeleton (public argument, step count,
    public memory image seed); configurations of one family differ only
    in secret state and are therefore related.
    """
    if family is None:
        family = (rng.choice((1, 2, 3)), rng.randrange(0, 40), rng.randrange(4))
    rounds, steps, _ = family
    tm = _module()
    store, idx = interp.instantiate(Store(), tm)
    mem = store.mems[store.insts[idx].mem_addr]
    for i in range(0, 16):  # secret image may differ freely
        mem.data[64 + i] = rng.getrandbits(8)
    cfg = interp.make_config(
        store, idx, "work",
        [Value(ast.S32, rng.getrandbits(32)), Value(ast.I32, rounds)],
        fuel=100_000)
    interp.run(cfg, max_steps=steps)
    return cfg


def config_triple(rng: random.Random):
    if rng.random() < 0.7:
        fam = (rng.choice((1, 2, 3)), rng.randrange(0, 40), 0)
        return tuple(make_config(rng, fam) for _ in range(3))
    return tuple(make_config(rng) for _ in range(3))
