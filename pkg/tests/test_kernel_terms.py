import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_ground_term, random_term
from tacforge.kernel import (
    Constructor,
    Ctor,
    Equation,
    Fun,
    FunctionSym,
    KernelError,
    Signature,
    UnboundVariable,
    Var,
    default_signature,
    ground_eval,
    nat_term,
    normalize,
    parse_term,
    term_to_text,
)


class TestNormalize:
    def test_plus_zero_left(self, sig):
        assert normalize(parse_term("plus(0, y)", sig), sig) == Var("y")

    def test_plus_succ_left(self, sig):
        t = normalize(parse_term("plus(S(0), y)", sig), sig)
        assert t == Ctor("S", (Var("y"),))

    def test_append_cons(self, sig):
        # oracle: innermost rewriting by hand with the two append equations:
        # append(cons(h,nil), l) -> cons(h, append(nil, l)) -> cons(h, l)
        t = normalize(parse_term("append(cons(h, nil), l)", sig), sig)
        assert term_to_text(t) == "cons(h, l)"

    def test_stuck_on_variable_argument(self, sig):
        t = parse_term("plus(n, 0)", sig)
        assert normalize(t, sig) == t

    def test_ground_arithmetic(self, sig):
        assert normalize(parse_term("plus(3, 4)", sig), sig) == nat_term(7)
        assert normalize(parse_term("mult(3, 4)", sig), sig) == nat_term(12)

    def test_rev_example(self, sig):
        t = normalize(parse_term("rev(cons(0, cons(S(0), nil)))", sig), sig)
        assert term_to_text(t) == "cons(S(0), cons(0, nil))"


class TestNormalizeProperties:
    def test_termination_and_idempotence_fuzz(self, sig):
        rng = random.Random(20260810)
        for _ in range(300):
            sort = rng.choice(("nat", "list"))
            t = random_term(rng, sig, sort, depth=8, var_sorts={"x": "nat", "l": "list"})
            nf = normalize(t, sig, max_steps=100_000)
            assert normalize(nf, sig) == nf

    @given(st.integers(0, 12), st.integers(0, 12))
    @settings(max_examples=60, deadline=None)
    def test_plus_and_mult_agree_with_integers(self, a, b):
        sig = default_signature()
        assert normalize(Fun("plus", (nat_term(a), nat_term(b))), sig) == nat_term(a + b)
        assert normalize(Fun("mult", (nat_term(a), nat_term(b))), sig) == nat_term(a * b)


class TestGroundEval:
    def test_closed_sum(self, sig):
        assert ground_eval(parse_term("plus(S(0), S(0))", sig), {}, sig) == nat_term(2)

    def test_append_with_environment(self, sig):
        # oracle: hand rewriting of the two append equations
        t = parse_term("append(cons(a, nil), cons(b, nil))", sig)
        out = ground_eval(t, {"a": nat_term(0), "b": nat_term(1)}, sig)
        assert term_to_text(out) == "cons(0, cons(S(0), nil))"

    def test_substitution_identity(self, sig):
        assert ground_eval(Var("x"), {"x": nat_term(0)}, sig) == nat_term(0)

    def test_missing_variable(self, sig):
        with pytest.raises(UnboundVariable):
            ground_eval(parse_term("plus(x, y)", sig), {"x": nat_term(1)}, sig)

    def test_non_ground_environment_rejected(self, sig):
        with pytest.raises(ValueError):
            ground_eval(Var("x"), {"x": Fun("plus", (nat_term(0), nat_term(0)))}, sig)

    def test_random_environments_are_constructor_only(self, sig):
        rng = random.Random(7)
        t = parse_term("plus(mult(x, y), length(l))", sig)
        for _ in range(50):
            env = {
                "x": random_ground_term(rng, sig, "nat", 4),
                "y": random_ground_term(rng, sig, "nat", 4),
                "l": random_ground_term(rng, sig, "list", 4),
            }
            out = ground_eval(t, env, sig)
            assert term_to_text(out)  # constructor-only guaranteed by ground_eval


class TestSignatureValidation:
    def test_default_signature_is_valid(self):
        default_signature().validate()

    def test_missing_equation_rejected(self):
        sig = Signature(
            sorts=("nat",),
            constructors=(Constructor("0", (), "nat"), Constructor("S", ("nat",), "nat")),
            functions=(FunctionSym("f", ("nat",), "nat", 0),),
            equations=(Equation(Fun("f", (Ctor("0"),)), Ctor("0")),),
        )
        with pytest.raises(ValueError, match="exactly one equation"):
            sig.validate()

    def test_non_structural_recursion_rejected(self):
        bad = Equation(
            Fun("f", (Ctor("S", (Var("x"),)),)),
            Fun("f", (Ctor("S", (Var("x"),)),)),
        )
        sig = Signature(
            sorts=("nat",),
            constructors=(Constructor("0", (), "nat"), Constructor("S", ("nat",), "nat")),
            functions=(FunctionSym("f", ("nat",), "nat", 0),),
            equations=(Equation(Fun("f", (Ctor("0"),)), Ctor("0")), bad),
        )
        with pytest.raises(ValueError, match="recursive call"):
            sig.validate()

    def test_cyclic_function_calls_rejected(self):
        sig = Signature(
            sorts=("nat",),
            constructors=(Constructor("0", (), "nat"), Constructor("S", ("nat",), "nat")),
            functions=(
                FunctionSym("f", ("nat",), "nat", 0),
                FunctionSym("g", ("nat",), "nat", 0),
            ),
            equations=(
                Equation(Fun("f", (Ctor("0"),)), Ctor("0")),
                Equation(Fun("f", (Ctor("S", (Var("x"),)),)), Fun("g", (Var("x"),))),
                Equation(Fun("g", (Ctor("0"),)), Ctor("0")),
                Equation(Fun("g", (Ctor("S", (Var("x"),)),)), Fun("f", (Ctor("S", (Var("x"),)),))),
            ),
        )
        with pytest.raises(ValueError, match="cyclic"):
            sig.validate()

    def test_unknown_function_in_rhs_rejected(self, sig):
        with pytest.raises(KernelError):
            normalize(Fun("unknown", (nat_term(0),)), sig)
