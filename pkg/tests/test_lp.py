from pathlib import Path

import highspy
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hmot import DiscreteMeasure, InputError, ProblemSpec, TimeGrid, build_primal
from hmot.lp import LPBuilder, LPModel, SimplexOptions, check_point, solve
from hmot.lp.export import fmt_num, read_lp_text, to_lp_text, to_mps, write_model

DATA = Path(__file__).parent / "data"


def model(A, rel, b, c, sense="max", lb=None, ub=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    lb = np.zeros(n) if lb is None else lb
    ub = np.full(n, np.inf) if ub is None else ub
    return LPModel(sp.csr_matrix(A), list(rel), b, c, lb, ub, sense)


def random_lp(rng):
    m, n = int(rng.integers(2, 12)), int(rng.integers(2, 20))
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.5)
    x0 = rng.random(n)
    rel = rng.choice(list("ELG"), m)
    b = A @ x0
    b[rel == "L"] += rng.random((rel == "L").sum())
    b[rel == "G"] -= rng.random((rel == "G").sum())
    lb = np.where(rng.random(n) < 0.2, -np.inf, 0.0)
    ub = np.where((rng.random(n) < 0.3) & np.isfinite(lb), x0 + rng.random(n), np.inf)
    return model(A, rel, b, rng.normal(size=n), rng.choice(["min", "max"]), lb, ub)


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_small_lp_and_dual_signs(backend):
    sol = solve(model([[1, 1], [1, 3]], "LL", [4, 6], [3, 2]), backend)
    assert sol.optimal and sol.objective == pytest.approx(12.0)
    assert np.all(sol.duals >= -1e-12)  # <= rows of a max problem
    sol = solve(model([[1, 1]], "G", [2], [1, 1], "max", ub=np.array([3.0, 3.0])), backend)
    assert sol.objective == pytest.approx(6.0) and sol.duals[0] <= 1e-12
    sol = solve(model([[1, 1]], "G", [2], [1, 2], "min"), backend)
    assert sol.objective == pytest.approx(2.0) and sol.duals[0] >= -1e-12


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_infeasible_and_unbounded(backend):
    inf = solve(model([[1, 1]], "G", [5], [1, 1], ub=np.array([1.0, 1.0])), backend)
    assert inf.status == "infeasible" and inf.x is None
    unb = solve(model([[1, -1]], "E", [0], [1, 1]), backend)
    assert unb.status == "unbounded"


def test_infeasibility_certificate_rows():
    m = model([[1, 0], [0, 1], [1, 1]], "LLG", [1, 1, 3], [1, 1])
    sol = solve(m, "simplex")
    assert sol.status == "infeasible"
    assert set(sol.infeasible_rows.tolist()) == {0, 1, 2}


def test_iteration_limit():
    rng = np.random.default_rng(3)
    m = random_lp(rng)
    while solve(m, "simplex").iterations < 3:
        m = random_lp(rng)
    assert solve(m, "simplex", SimplexOptions(max_iter=1)).status == "iteration_limit"


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_internal_simplex_matches_highs(seed):
    m = random_lp(np.random.default_rng(seed))
    a, h = solve(m, "simplex"), solve(m, "highs")
    assert a.status == h.status
    if a.optimal:
        assert abs(a.objective - h.objective) <= 1e-7 * (1 + abs(h.objective))
        assert a.primal_residual <= 1e-8 and a.dual_residual <= 1e-8
        assert a.duality_gap <= 1e-7 and a.cs_residual <= 1e-7


def test_builder_families_and_check_point():
    b = LPBuilder(3)
    s1 = b.add_rows("a", 1, [0, 0], [0, 1], [1, 1], "E", 1.0)
    s2 = b.add_rows("a", 1, [0], [2], [1], "L", 0.5)
    s3 = b.add_rows("b", 2, [0, 1], [0, 2], [1, 1], "G", 0.0)
    assert (s1, s2, s3) == (slice(0, 1), slice(1, 2), slice(2, 4))
    assert b.families == {"a": slice(0, 2), "b": slice(2, 4)}
    with pytest.raises(InputError):
        b.add_rows("a", 1, [0], [0], [1], "E", 0.0)
    m = b.build([1, 1, 1], "max")
    rep = check_point(m, [0.5, 0.5, 1.0])
    assert rep.max_row_residual == pytest.approx(0.5)
    assert check_point(m, [0.25, 0.75, 0.5]).max_residual == 0.0


def test_model_validation():
    with pytest.raises(InputError):
        model([[1, 1]], "X", [1], [1, 1])
    with pytest.raises(InputError):
        model([[1, 1]], "E", [np.nan], [1, 1])
    with pytest.raises(InputError):
        model([[1, 1]], "E", [1], [1, 1], lb=np.array([1.0, 0.0]), ub=np.array([0.0, 1.0]))
    with pytest.raises(InputError):
        solve(model([[1]], "E", [1], [1]), "cplex")


def _toy_primal():
    ms = [DiscreteMeasure([-1.0, 1.0], [0.5, 0.5]), DiscreteMeasure([-2.0, 2.0], [0.5, 0.5])]
    return build_primal(ProblemSpec(TimeGrid.uniform(2), ms, "pos(S2 - S1)", "mot", sense="sup"))


def test_golden_mps(tmp_path):
    p = _toy_primal()
    assert to_mps(p.model) == (DATA / "toy_mot.mps").read_text()
    written = write_model(p.model, tmp_path / "toy.mps", "mps")
    assert [w.name for w in written] == ["toy.mps", "toy.mps.names.csv"]
    assert (tmp_path / "toy.mps.names.csv").read_text() == (DATA / "toy_mot.mps.names.csv").read_text()


def test_golden_mps_solves_in_highs():
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(DATA / "toy_mot.mps"))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(0.75, abs=1e-12)


def test_lp_text_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = random_lp(rng)
        back = read_lp_text(to_lp_text(m))
        assert back.sense == m.sense
        assert np.array_equal(back.c, m.c) and np.array_equal(back.rhs, m.rhs)
        assert (back.A != m.A).nnz == 0
        assert np.array_equal(back.lb, m.lb) and np.array_equal(back.ub, m.ub)
        assert list(back.relations) == list(m.relations)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_number_format_round_trips(v):
    assert float(fmt_num(v)) == v
