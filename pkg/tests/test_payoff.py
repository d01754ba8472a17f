import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmot import InputError, PayoffEvaluationError, PayoffSyntaxError, eval_payoff, parse_payoff
from hmot.payoff import BinOp, Call, Coord, Neg, Num, shift_coords, to_string


@pytest.mark.parametrize("text, path, expected", [
    ("pos(S2 - S1)", [1.0, 3.0], 2.0),
    ("pos(S3 - (S1+S2)/2)", [1.0, 2.0, 1.0], 0.0),
    ("pos(S3 - (S1+S2)/2)", [1.0, 2.0, 2.0], 0.5),
    ("-S1 * 2 + 3", [4.0], -5.0),
    ("- -S1", [4.0], 4.0),
    ("2 - 3 - 4", [], -5.0),
    ("24 / 4 / 2", [], 3.0),
    ("max(S1, min(S2, 1.5e0))", [1.0, 2.0], 1.5),
    ("abs(S1 - S2)", [1.0, 3.5], 2.5),
    (".5*S1", [3.0], 1.5),
])
def test_evaluation(text, path, expected):
    assert eval_payoff(parse_payoff(text), path) == pytest.approx(expected, abs=1e-15)


def test_precedence_tree():
    e = parse_payoff("1 + 2 * S1")
    assert e == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Coord(1)))
    assert parse_payoff("-S1 * S2") == BinOp("*", Neg(Coord(1)), Coord(2))


@pytest.mark.parametrize("text, offset", [
    ("pos(S2 - )", 9),
    ("S1 + ", 5),
    ("(S1", 3),
    ("foo(S1)", 0),
    ("pos(S1, S2)", 0),
    ("S1 $ 2", 3),
    ("", 0),
    ("Sx + 1", 0),
])
def test_syntax_errors_carry_offsets(text, offset):
    with pytest.raises(PayoffSyntaxError) as e:
        parse_payoff(text)
    assert e.value.offset == offset


def test_byte_offset_counts_utf8():
    with pytest.raises(PayoffSyntaxError) as e:
        parse_payoff("S1 + é")
    assert e.value.offset == 5
    with pytest.raises(PayoffSyntaxError) as e:
        parse_payoff("é é")
    assert e.value.offset == 0


def test_coordinate_range():
    with pytest.raises(InputError):
        parse_payoff("S4 - S1", n_coords=3)
    with pytest.raises(InputError):
        parse_payoff("S0")
    assert parse_payoff("S3", n_coords=3).max_coord() == 3


def test_division_by_zero():
    with pytest.raises(PayoffEvaluationError):
        eval_payoff(parse_payoff("1 / (S1 - S2)"), [1.0, 1.0])


def test_batch_evaluation_matches_single():
    e = parse_payoff("pos(S3 - (S1 + S2) / 2) + S1 * 0.1")
    paths = np.random.default_rng(0).uniform(0, 3, size=(50, 3))
    batch = e.evaluate(paths)
    assert np.array_equal(batch, [eval_payoff(e, p) for p in paths])
    assert parse_payoff("2").evaluate(paths).shape == (50,)


def test_shift_coords():
    e = shift_coords(parse_payoff("pos(S9 - S8)"), 6)
    assert to_string(e) == "pos((S3 - S2))"
    with pytest.raises(InputError):
        shift_coords(parse_payoff("S2 - S1"), 1)


leaf = st.one_of(st.integers(1, 4).map(Coord), st.floats(-5, 5, allow_nan=False).map(lambda v: Num(abs(v))))
exprs = st.recursive(
    leaf,
    lambda kids: st.one_of(
        kids.map(Neg),
        st.tuples(st.sampled_from("+-*"), kids, kids).map(lambda t: BinOp(*t)),
        kids.map(lambda k: Call("pos", (k,))),
        st.tuples(kids, kids).map(lambda t: Call("max", t)),
    ),
    max_leaves=12,
)


@given(exprs)
def test_print_parse_round_trip(e):
    assert parse_payoff(to_string(e)) == e


@given(exprs, st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_round_trip_preserves_values(e, path):
    back = parse_payoff(to_string(e))
    assert eval_payoff(back, path) == eval_payoff(e, path)
