import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hmot import DiscreteMeasure, GridProjector, InputError, RobustPricer, convex_order, quantize_lognormal
from hmot.validation import check_grid, check_marginals, check_measure, check_payoff, check_sense

TOY = [{-1: 0.5, 1: 0.5}, {-2: 0.5, 2: 0.5}]


def test_pricer_predicts_bounds():
    p = RobustPricer(mode="mot").fit(TOY)
    out = p.predict(["pos(S2 - S1)", "S2", "pos(S2)"])
    assert out.shape == (3, 2)
    assert out[0].tolist() == [0.75, 0.75]
    assert out[1] == pytest.approx([0.0, 0.0], abs=1e-12)
    assert out[2] == pytest.approx([1.0, 1.0])
    assert p.predict("S1").shape == (1, 2)


def test_pricer_hedge_and_caching():
    p = RobustPricer().fit(TOY)
    h = p.hedge("pos(S2 - S1)", "sup")
    assert h.sense == "sup"
    assert "pos(S2 - S1)" in p.results_


def test_pricer_params_and_clone():
    p = RobustPricer(mode="hmot", r=0.1)
    assert p.get_params()["mode"] == "hmot"
    q = clone(p).set_params(mode="mot")
    assert q.mode == "mot" and p.mode == "hmot"
    with pytest.raises(NotFittedError):
        q.predict(["S1"])


def test_pricer_infeasible_gives_nan():
    p = RobustPricer(mode="hmot").fit([{0: 1.0}, {0: 1.0}, {-1: 0.5, 1: 0.5}])
    out = p.predict(["S3"])
    assert np.isnan(out).all()


def test_grid_projector():
    ms = [quantize_lognormal(1.0, 0.25, t, 8) for t in (1, 2)]
    gp = GridProjector(n_points=20).fit(ms)
    out = gp.transform(ms)
    assert len(gp.grid_) == 20
    assert all(abs(a.mean - b.mean) < 1e-12 for a, b in zip(ms, out))
    assert convex_order(out[0], out[1]).holds
    fixed = GridProjector(grid=np.linspace(0.1, 4.0, 9)).fit_transform(ms)
    assert len(fixed[0]) <= 9


def test_validation_helpers():
    assert check_measure({1.0: 0.5, 0.0: 0.5}).values.tolist() == [0.0, 1.0]
    assert check_measure(np.array([[0.0, 0.25], [2.0, 0.75]])).mean == 1.5
    mu = DiscreteMeasure([0.0], [1.0])
    assert check_measure(mu) is mu
    with pytest.raises(InputError):
        check_measure(np.ones(3))
    with pytest.raises(InputError):
        check_marginals([mu])
    with pytest.raises(InputError):
        check_marginals(mu)
    with pytest.raises(InputError):
        check_grid([0.0, 0.0, 1.0])
    with pytest.raises(InputError):
        check_payoff("S3", 2)
    with pytest.raises(InputError):
        check_payoff(3.0, 2)
    with pytest.raises(InputError):
        check_sense("mid")
