import random

import relgen
from ctwasm import ast, interp, leakage, text, validate
from ctwasm.ast import I32, I64, S32, Secrecy
from ctwasm.interp import Store, Value
from ctwasm.leakage import (
    TrialSpec, actions_indist, configs_indist, lockstep_check, project_config,
    randomized_ct_trial, values_indist,
)


# --- value indistinguishability ---------------------------------------------

def test_values_indist_examples():
    assert values_indist(Value(S32, 1), Value(S32, 2))  # both secret
    assert not values_indist(Value(I32, 1), Value(I32, 2))  # public payloads
    assert not values_indist(Value(I32, 7), Value(I64, 7))  # type mismatch
    assert values_indist(Value(I32, 7), Value(I32, 7))


# --- action indistinguishability --------------------------------------------

def test_actions_indist_examples():
    assert actions_indist(("op", "s32.add"), ("op", "s32.add"))
    assert not actions_indist(("unsafe-binop", "div_u", 7, 2),
                              ("unsafe-binop", "div_u", 9, 2))
    assert not actions_indist(("mem", "load", 16, 4, None),
                              ("mem", "load", 20, 4, None))
    assert actions_indist(("secret-select",), ("secret-select",))
    assert not actions_indist(("op", "s32.add"), ("op", "s32.sub"))
    assert not actions_indist(("branch", "if", 0), ("branch", "if", 1))


def test_action_equality_realizes_the_relation():
    rng = random.Random(3)
    for _ in range(2000):
        a, b, _ = relgen.action_triple(rng)
        assert actions_indist(a, b) == (a == b)


# --- configuration indistinguishability --------------------------------------

def test_config_reflexive_on_same_object():
    cfg = relgen.make_config(random.Random(0))
    assert configs_indist(cfg, cfg)


def test_configs_differing_in_secret_memory_are_related():
    rng = random.Random(1)
    fam = (2, 9, 0)
    a = relgen.make_config(rng, fam)
    b = relgen.make_config(rng, fam)
    assert configs_indist(a, b)  # secret memory bytes and args differ only
    assert project_config(a) == project_config(b)


def test_configs_differing_in_public_global_are_unrelated():
    rng = random.Random(2)
    fam = (2, 9, 0)
    a = relgen.make_config(rng, fam)
    b = relgen.make_config(rng, fam)
    ga = a.store.globals[a.store.insts[a.inst_idx].global_addrs[1]]
    ga.bits = (ga.bits + 1) & 0xFFFFFFFF  # the public counter global
    assert not configs_indist(a, b)
    assert project_config(a) != project_config(b)


def test_projection_idempotent_and_characterizes_relation():
    rng = random.Random(4)
    for _ in range(60):
        a, b, _ = relgen.config_triple(rng)
        assert configs_indist(a, b) == (project_config(a) == project_config(b))


def test_relations_are_equivalences_sampled():
    rng = random.Random(5)
    for _ in range(800):
        v1, v2, v3 = relgen.value_triple(rng)
        assert values_indist(v1, v1)
        assert values_indist(v1, v2) == values_indist(v2, v1)
        if values_indist(v1, v2) and values_indist(v2, v3):
            assert values_indist(v1, v3)
    for _ in range(800):
        a1, a2, a3 = relgen.action_triple(rng)
        assert actions_indist(a1, a1)
        assert actions_indist(a1, a2) == actions_indist(a2, a1)
        if actions_indist(a1, a2) and actions_indist(a2, a3):
            assert actions_indist(a1, a3)
    for _ in range(40):
        c1, c2, c3 = relgen.config_triple(rng)
        assert configs_indist(c1, c1)
        assert configs_indist(c1, c2) == configs_indist(c2, c1)
        if configs_indist(c1, c2) and configs_indist(c2, c3):
            assert configs_indist(c1, c3)


# --- typeability invariance ---------------------------------------------------

def _randomize_secret_consts(ins, rng):
    if isinstance(ins, ast.Const) and ins.type.sec is Secrecy.SECRET:
        return ast.Const(ins.type, rng.getrandbits(ins.type.bits))
    match ins:
        case ast.Block(result=r, body=b):
            return ast.Block(r, tuple(_randomize_secret_consts(i, rng)
                                      for i in b))
        case ast.Loop(result=r, body=b):
            return ast.Loop(r, tuple(_randomize_secret_consts(i, rng)
                                     for i in b))
        case ast.If(result=r, then=t, else_=e):
            return ast.If(r, tuple(_randomize_secret_consts(i, rng) for i in t),
                          tuple(_randomize_secret_consts(i, rng) for i in e))
    return ins


def test_typeability_invariant_under_secret_payload_mutation(positive_entries):
    rng = random.Random(6)
    for entry in positive_entries:
        m = entry.module
        for _ in range(3):
            funcs = tuple(
                ast.Func(f.type, f.locals,
                         tuple(_randomize_secret_consts(i, rng)
                               for i in f.body),
                         f.imported, f.exports, f.name, f.span)
                for f in m.funcs)
            mutated = ast.Module(funcs, m.globals, m.table, m.memory, m.data)
            validate.validate_module(mutated)  # same verdict: accepted


# --- lockstep ------------------------------------------------------------------

def test_lockstep_salsa20_random_keys_same_nonce(typed_corpus):
    entry, tm = typed_corpus["salsa20"]
    rng = random.Random(7)
    key_a = bytes(rng.getrandbits(8) for _ in range(32))
    key_b = bytes(rng.getrandbits(8) for _ in range(32))
    args = entry.trial.args
    v = lockstep_check(tm, "stream_xor", args, args,
                       {0: key_a}, {0: key_b}, fuel=2_000_000)
    assert v.ok, v


def test_lockstep_flags_secret_branch_at_first_branch_action():
    src = """(module (memory 1 secret)
      (func (export "leaky") (result i32)
        (s32.store (i32.const 8) (s32.load (i32.const 0)))
        (if (result i32) (s32.load (i32.const 8))
          (then (i32.const 1)) (else (i32.const 0)))))"""
    bad = validate.flatten_unchecked(text.parse_module(src))
    v = lockstep_check(bad, "leaky", [], [],
                       {0: bytes(4)}, {0: (42).to_bytes(4, "little")},
                       require_untrusted=False)
    assert v.kind == "diverged"
    # actions: store, load, mem-store, load-addr-const... first branch is the if
    assert v.action_a[0] == "branch" and v.action_b[0] == "branch"
    assert v.action_a[2] == 0 and v.action_b[2] == 42
    assert "if" in (v.location or "")


def test_lockstep_flags_br_if_on_secret():
    src = """(module (memory 1 secret)
      (func (export "leaky") (result i32)
        (block $out
          (br_if $out (s32.load (i32.const 0)))
        )
        (i32.const 0)))"""
    bad = validate.flatten_unchecked(text.parse_module(src))
    v = lockstep_check(bad, "leaky", [], [],
                       {0: bytes(4)}, {0: (7).to_bytes(4, "little")},
                       require_untrusted=False)
    assert v.kind == "diverged"
    assert v.action_a == ("branch", "br_if", 0)
    assert v.action_b == ("branch", "br_if", 7)


def test_lockstep_identical_secrets_identical_traces(typed_corpus):
    entry, tm = typed_corpus["tea"]
    args = entry.trial.args
    image = {0: bytes(range(24))}
    v = lockstep_check(tm, "tea_encrypt", args, args, image, image)
    assert v.ok
    # determinism: the traces must be identical, not merely related
    s1, i1 = interp.instantiate(Store(), tm)
    s2, i2 = interp.instantiate(Store(), tm)
    for s, i in ((s1, i1), (s2, i2)):
        s.mems[s.insts[i].mem_addr].data[0:24] = bytes(range(24))
    t1 = interp.invoke(s1, i1, "tea_encrypt", args).trace
    t2 = interp.invoke(s2, i2, "tea_encrypt", args).trace
    assert t1 == t2


def test_lockstep_public_results_must_match():
    src = """(module (func (export "f") trusted (param s32) (result i32)
      local.get 0 i32.declassify))"""
    tm = validate.validate_module(text.parse_module(src), annotate=True)
    v = lockstep_check(tm, "f", [Value(S32, 1)], [Value(S32, 2)],
                       require_untrusted=False)
    assert v.kind == "diverged"


def test_lockstep_refuses_trusted_exports():
    src = """(module (func (export "f") trusted (param s32) (result i32)
      local.get 0 i32.declassify))"""
    tm = validate.validate_module(text.parse_module(src), annotate=True)
    v = lockstep_check(tm, "f", [Value(S32, 1)], [Value(S32, 2)])
    assert v.kind == "incomparable"


def test_lockstep_fuel_exhaustion_on_both_sides_agrees():
    src = """(module (func (export "spin") (param s32)
      (loop (br 0))))"""
    tm = validate.validate_module(text.parse_module(src), annotate=True)
    v = lockstep_check(tm, "spin", [Value(S32, 0)], [Value(S32, 5)], fuel=999)
    assert v.ok  # both exhausted at the same step: prefix equivalence


def test_lockstep_initial_distinguishability_is_incomparable():
    src = "(module (memory 1) (func (export \"f\") nop))"
    tm = validate.validate_module(text.parse_module(src), annotate=True)
    v = lockstep_check(tm, "f", [], [], {0: b"a"}, {0: b"b"})
    assert v.kind == "incomparable"  # public memories differ


def test_lockstep_completeness_stepwise_on_tea(typed_corpus):
    # one action per barrier, residual instruction pointers and full state
    # compared at every single step
    entry, tm = typed_corpus["tea"]
    rng = random.Random(8)
    image_b = {0: bytes(rng.getrandbits(8) for _ in range(24))}
    v = lockstep_check(tm, "tea_encrypt", entry.trial.args, entry.trial.args,
                       {0: bytes(24)}, image_b, batch=1,
                       config_check_every=1)
    assert v.ok


def test_randomized_trial_reports():
    src = """(module (memory 1 secret)
      (func (export "f") (param s32) (result s32)
        (s32.add (s32.load (i32.const 0)) (local.get 0))))"""
    tm = validate.validate_module(text.parse_module(src), annotate=True)
    spec = TrialSpec("f", [Value(S32, 0)],
                     [leakage.SecretInput("key", offset=0, length=4),
                      leakage.SecretInput("x", param=0)], {}, None)
    rep = randomized_ct_trial(tm, spec, trials=20, seed=1)
    assert rep.ok and rep.passed == 20
    assert rep.to_json()["ok"] is True
    rep = randomized_ct_trial(tm, spec, trials=5, seed=1, vary=["key"])
    assert rep.ok and rep.varied == ["key"]
    try:
        randomized_ct_trial(tm, spec, trials=1, seed=1, vary=["nope"])
        assert False
    except ValueError:
        pass


def test_every_typed_untrusted_fuzz_function_is_constant_time():
    """Desk-scale check of the headline guarantee: no well-typed untrusted
    function ever produces diverging leakage under secret-varied twins."""
    import fuzzgen

    rng = random.Random(99)
    checked = 0
    for seed in range(120):
        m = text.parse_module(fuzzgen.generate(seed, ct=True))
        tm = validate.validate_module(m, annotate=True)
        sec_mem = m.memory is not None and \
            m.memory.sec is ast.Secrecy.SECRET
        for f in m.funcs:
            if not f.exports or f.type.trust is not ast.Trust.UNTRUSTED:
                continue
            if not any(t.sec is ast.Secrecy.SECRET for t in f.type.params) \
                    and not sec_mem:
                continue
            args_a, args_b = [], []
            for t in f.type.params:
                if t.sec is ast.Secrecy.SECRET:
                    args_a.append(Value(t, 0))
                    args_b.append(Value(t, rng.getrandbits(t.bits)))
                else:
                    v = Value(t, rng.getrandbits(t.bits) if t.is_int else 0)
                    args_a.append(v)
                    args_b.append(v)
            image_a = image_b = None
            if sec_mem:  # secret memories may differ freely between twins
                image_a = {0: bytes(64)}
                image_b = {0: bytes(rng.getrandbits(8) for _ in range(64))}
            v = lockstep_check(tm, f.exports[0], args_a, args_b,
                               image_a, image_b, fuel=200_000)
            assert v.kind != "diverged", (seed, f.exports[0], v)
            if v.ok:
                checked += 1
    assert checked > 80


def test_host_actions_compare_by_projection():
    src = """(module (memory 1 secret)
      (func (import "env" "note") (param s32 i32))
      (func (export "go") (param s32)
        (call 0 (local.get 0) (i32.const 3))))"""
    tm = validate.validate_module(text.parse_module(src), annotate=True)

    def imports():
        host = interp.HostFunc(
            "env", "note",
            ast.FuncType(ast.Trust.UNTRUSTED, (S32, I32), ()),
            lambda call: [])
        return {("env", "note"): host}

    v = lockstep_check(tm, "go", [Value(S32, 1)], [Value(S32, 2)],
                       imports_factory=imports)
    assert v.ok, v
