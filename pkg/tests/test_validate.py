import fuzzgen
import pytest

from ctwasm import ast, text
from ctwasm.ast import I32, I64, S32, S64, F32, Secrecy, Trust
from ctwasm.validate import (
    TANY, TSECRET, CheckState, Ctx, ErrorCode, ValidationFailure, check_instr,
    check_module, unify, validate_module,
)


def codes(src: str) -> list[str]:
    _, errs = check_module(text.parse_module(src))
    return [e.code.value for e in errs]


# --- unify ------------------------------------------------------------------

def test_unify_examples():
    assert unify(TANY, S32) == S32
    assert unify(TSECRET, I32) is None  # mismatch
    assert unify(TSECRET, TSECRET) is TSECRET


def test_unify_lattice():
    assert unify(TANY, TANY) is TANY
    assert unify(TANY, TSECRET) is TSECRET
    assert unify(TSECRET, S64) == S64
    assert unify(S32, S32) == S32
    assert unify(S32, S64) is None
    assert unify(I32, S32) is None
    for a in (TANY, TSECRET, I32, S32):
        assert unify(a, a) in (a,)  # idempotent
    for a in (TANY, TSECRET, I32, S64):
        for b in (TANY, TSECRET, I64, S64):
            assert unify(a, b) == unify(b, a)  # commutative


# --- check_instr ------------------------------------------------------------

def plain_ctx(trust=Trust.UNTRUSTED, **kw) -> Ctx:
    base = dict(trust=trust, funcs=(), globals=(), table=None, memory=None,
                locals=(), return_types=())
    base.update(kw)
    return Ctx(**base)


def primed_state(*vals) -> CheckState:
    st = CheckState()
    st.push_ctrl("func", (), ())
    st.vals.extend(vals)
    return st


def test_binop_rule_on_stack():
    st = primed_state(S32, S32)
    out = check_instr(plain_ctx(), st, ast.Binop(S32, "add"))
    assert out is st
    assert st.vals == [S32]


def test_secret_if_condition_rejected():
    st = primed_state(S32)
    err = check_instr(plain_ctx(), st, ast.If(None, (ast.Nop(),), ()))
    assert err.code is ErrorCode.SecretCondition


def test_untrusted_call_to_trusted_rejected():
    ctx = plain_ctx(funcs=(ast.FuncType(Trust.TRUSTED, (), ()),))
    err = check_instr(ctx, primed_state(), ast.Call(0))
    assert err.code is ErrorCode.TrustViolationCall


def test_secret_div_rejected():
    st = primed_state(S32, S32)
    err = check_instr(plain_ctx(), st, ast.Binop(S32, "div_u"))
    assert err.code is ErrorCode.UnsafeOpOnSecret


# --- validate_module --------------------------------------------------------

def test_corpus_accepted_untrusted(positive_entries):
    for entry in positive_entries:
        tm = validate_module(entry.module)
        assert all(f.type.trust is Trust.UNTRUSTED
                   for f in entry.module.funcs), entry.name


def test_declassify_needs_trust():
    assert "DeclassifyRequiresTrusted" in codes(
        "(module (func (param s32) (result i32)"
        " local.get 0 i32.declassify))")
    assert not codes(
        "(module (func trusted (param s32) (result i32)"
        " local.get 0 i32.declassify))")


def test_secret_store_to_public_memory():
    assert "MemorySecrecyMismatch" in codes(
        "(module (memory 1) (func (param s32)"
        " (s32.store (i32.const 0) (local.get 0))))")


def test_public_load_from_secret_memory_rejected():
    assert "MemorySecrecyMismatch" in codes(
        "(module (memory 1 secret) (func (result i32)"
        " (i32.load (i32.const 0))))")


def test_memory_grow_and_size_need_public_i32():
    assert "SecretMemoryIndex" in codes(
        "(module (memory 1) (func (param s32)"
        " (drop (memory.grow (local.get 0)))))")
    assert not codes("(module (memory 1) (func (result i32) memory.size))")


def test_reinterpret_requires_public_both_sides():
    assert "FloatSecrecy" in codes(
        "(module (func (param s32) (result f32)"
        " (f32.reinterpret/s32 (local.get 0))))")
    assert not codes(
        "(module (func (param i32) (result f32)"
        " (f32.reinterpret/i32 (local.get 0))))")


def test_secret_convert_width_changes_allowed():
    assert not codes("(module (func (param s64) (result s32)"
                     " local.get 0 s32.wrap_s64))")
    assert not codes("(module (func (param s32) (result s64)"
                     " local.get 0 s64.extend_s32_u))")
    # mixing secrecies in a conversion is not
    src = "(module (func (param s64) (result i32) local.get 0 i32.wrap_i64))"
    assert "TypeMismatch" in codes(src)


def test_select_rules():
    # public select over secret values is fine (condition stays public)
    assert not codes(
        "(module (func (param s32 s32 i32) (result s32)"
        " (select (local.get 0) (local.get 1) (local.get 2))))")
    # secret select requires a secret condition and secret operands
    assert not codes(
        "(module (func (param s32 s32 s32) (result s32)"
        " (select secret (local.get 0) (local.get 1) (local.get 2))))")
    assert "TypeMismatch" in codes(
        "(module (func (param i32 i32 s32) (result i32)"
        " (select secret (local.get 0) (local.get 1) (local.get 2))))")
    assert "FloatSecrecy" in codes(
        "(module (func (param f64 f64 s32) (result f64)"
        " (select secret (local.get 0) (local.get 1) (local.get 2))))")
    # public select leaks its condition, so the condition must be public
    assert "SecretCondition" in codes(
        "(module (func (param i32 i32 s32) (result i32)"
        " (select (local.get 0) (local.get 1) (local.get 2))))")


def test_relop_testop_result_secrecy_follows_operands():
    assert not codes("(module (func (param s32) (result s32)"
                     " local.get 0 s32.eqz))")
    # s32.eqz yields a secret i32; a branch on it must be rejected
    assert "SecretCondition" in codes(
        "(module (func (param s32)"
        " (if (s32.eqz (local.get 0)) (then nop))))")


def test_all_errors_reported_not_just_first():
    errs = codes(
        "(module (func (param s32 s32)"
        "  (if (local.get 0) (then nop))"
        "  (drop (s32.div_u (local.get 0) (local.get 1)))"
        "))")
    assert "SecretCondition" in errs and "UnsafeOpOnSecret" in errs


def test_error_locations_carry_offsets():
    _, errs = check_module(text.parse_module(
        "(module (func (param s32) (if (local.get 0) (then nop))))"))
    assert errs[0].func == 0
    assert errs[0].offset is not None
    assert errs[0].span is not None
    doc = errs[0].to_json()
    assert set(doc) == {"code", "func", "offset", "message"}


def test_determinism():
    src = "(module (func (param s32) (if (local.get 0) (then nop))))"
    a = codes(src)
    b = codes(src)
    assert a == b


def test_linearity_checks_equal_instruction_count(typed_corpus):
    for name, (entry, tm) in typed_corpus.items():
        assert tm.stats["checks"] == tm.stats["instrs"], name


def test_superset_fuzz_modules_accepted():
    for seed in range(200):
        m = text.parse_module(fuzzgen.generate(seed))
        tm, errs = check_module(m)
        assert not errs, (seed, [str(e) for e in errs][:3])


def test_secrecy_conservation_rule_table():
    """Audit every secret-typed operator the checker accepts: no rule
    except declassify turns a secret input into a public output."""
    from ctwasm.text import _SIMPLE_OPS

    ctx = plain_ctx(trust=Trust.TRUSTED)  # so declassify itself is audited
    audited = 0
    for name, proto in _SIMPLE_OPS.items():
        in_types, out_type = _instr_signature(proto)
        if not any(t.sec is Secrecy.SECRET for t in in_types):
            continue
        st = primed_state(*in_types)
        if not isinstance(check_instr(ctx, st, proto), CheckState):
            continue  # rejected rules (secret reinterpret) conserve trivially
        audited += 1
        produced = st.vals
        assert [out_type] == produced or out_type is None, name
        if isinstance(proto, ast.Declassify):
            assert out_type.sec is Secrecy.PUBLIC
        elif out_type is not None:
            assert out_type.sec is Secrecy.SECRET, name
    # 2 secret int types x (3 unops + 11 safe binops + eqz + 10 relops)
    # + 3 secret width conversions + 2 declassify forms
    assert audited == 55


def _instr_signature(ins):
    match ins:
        case ast.Unop(type=t) | ast.Binop(type=t):
            n = 2 if isinstance(ins, ast.Binop) else 1
            return (t,) * n, t
        case ast.Testop(type=t) | ast.Relop(type=t):
            n = 2 if isinstance(ins, ast.Relop) else 1
            return (t,) * n, ast.ValType(ast.Rep.I32, t.sec)
        case ast.Convert(to=to, frm=frm) | ast.Reinterpret(to=to, frm=frm):
            return (frm,), to
        case ast.Classify(to=to, frm=frm) | ast.Declassify(to=to, frm=frm):
            return (frm,), to
    return (), None


def test_syntax_index_codes():
    assert "SyntaxIndex" in codes("(module (func (drop (local.get 99))))")
    assert "SyntaxIndex" in codes("(module (func (drop (call 7))))")
    assert "SyntaxIndex" in codes("(module (func (br 9)))")
    assert "SyntaxIndex" in codes(
        "(module (func (result i32) (i32.load (i32.const 0))))")  # no memory
    # the text parser rejects dangling elem indices itself; a decoded
    # module can still carry them, so build the AST directly
    bad = ast.Module(
        table=ast.Table(1, None, (ast.ElemSeg((ast.Const(I32, 0),), (5,)),)))
    _, errs = check_module(bad)
    assert ErrorCode.SyntaxIndex in [e.code for e in errs]


def test_stack_underflow_code():
    assert "StackUnderflow" in codes("(module (func (result i32) i32.add))")


def test_validation_failure_raises_with_all_errors():
    with pytest.raises(ValidationFailure) as e:
        validate_module(text.parse_module(
            "(module (func (param s32) (if (local.get 0) (then nop))))"))
    assert e.value.errors[0].code is ErrorCode.SecretCondition


def test_init_expr_checking():
    assert not codes("(module (global s32 (s32.const 1)))")
    # public constants may flow up into a secret global slot
    assert not codes("(module (global s64 (i64.const 1)))")
    assert "TypeMismatch" in codes("(module (global i32 (i64.const 1)))")
    assert "TypeMismatch" in codes("(module (global i32 (nop)))")
    assert not codes('(module (global (import "e" "g") i32)'
                     " (global i32 (global.get 0)))")


def test_annotations_record_stack_types():
    tm = validate_module(text.parse_module(
        "(module (func (param s32 i32) (result s32)"
        " local.get 0 local.get 1 drop))"), annotate=True)
    ff = tm.flat(0)
    assert ff.stack_types[0] == ()
    assert ff.stack_types[1] == (S32,)
    assert ff.stack_types[2] == (S32, I32)
