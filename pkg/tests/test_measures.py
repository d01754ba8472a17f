import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmot import (
    ArbitrageError, DiscreteMeasure, FiniteMeasure, InputError, convex_order, density,
    from_call_quotes, lognormal_chain, lognormal_kernel, meet, project_to_grid,
    quantize_lognormal, uniform_band,
)
from hmot.measures import read_measure_csv, write_measure_csv

atoms = st.lists(st.integers(-20, 20), min_size=1, max_size=8, unique=True)


@st.composite
def measures(draw):
    vals = sorted(draw(atoms))
    w = np.array(draw(st.lists(st.integers(1, 9), min_size=len(vals), max_size=len(vals))), dtype=float)
    return DiscreteMeasure.from_atoms(vals, w / w.sum())


def test_validation_errors():
    with pytest.raises(InputError):
        DiscreteMeasure([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(InputError):
        DiscreteMeasure([0.0, 1.0], [0.6, 0.6])
    with pytest.raises(InputError):
        DiscreteMeasure([0.0], [np.nan])
    with pytest.raises(InputError):
        FiniteMeasure([0.0, 1.0], [-0.1, 0.2])


def test_from_atoms_merges_and_sorts():
    mu = DiscreteMeasure.from_atoms([2.0, 1.0, 2.0 + 1e-12, 5.0], [0.25, 0.25, 0.25, 0.25])
    assert mu.values.tolist() == [1.0, 2.0, 5.0]
    assert mu.weights.tolist() == [0.25, 0.5, 0.25]
    assert mu.weight_at(2.0) == 0.5 and mu.weight_at(3.0) == 0.0


def test_meet_and_density():
    mu = DiscreteMeasure([0.0, 1.0, 2.0], [0.2, 0.5, 0.3])
    nu = DiscreteMeasure([1.0, 2.0, 3.0], [0.1, 0.6, 0.3])
    th = meet(mu, nu)
    assert th.values.tolist() == [1.0, 2.0]
    assert np.allclose(th.weights, [0.1, 0.3])
    assert np.allclose(density(th, mu), [0.0, 0.2, 1.0])
    assert np.allclose(density(th, nu, at=[1.0, 2.0]), [1.0, 0.5])
    assert meet(DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(1.0)).total_mass == 0.0


@given(measures(), measures())
def test_meet_is_symmetric_and_dominated(mu, nu):
    a, b = meet(mu, nu), meet(nu, mu)
    assert a.allclose(b)
    for x, w in zip(a.values, a.weights):
        assert w <= mu.weight_at(x) + 1e-15 and w <= nu.weight_at(x) + 1e-15


def test_convex_order_examples():
    mu = DiscreteMeasure([0.0], [1.0])
    nu = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    assert convex_order(mu, nu).holds
    rep = convex_order(nu, mu)
    assert not rep.holds and rep.worst_strike == 0.0
    assert not convex_order(mu, DiscreteMeasure([0.0, 2.0], [0.5, 0.5])).holds


@given(measures(), st.lists(st.floats(0.05, 0.95), min_size=1, max_size=4))
def test_mean_preserving_spread_is_in_convex_order(mu, splits):
    # spread every atom to x - 1 and x + a with martingale weights
    vals, wts = [], []
    for x, w in zip(mu.values, mu.weights):
        a = splits[int(abs(x)) % len(splits)] * 3
        p_up = 1.0 / (1.0 + a)
        vals += [x - 1.0, x + a]
        wts += [w * (1.0 - p_up), w * p_up]
    nu = DiscreteMeasure.from_atoms(vals, wts, normalize=True)
    assert convex_order(mu, nu, tol=1e-9).holds


def test_from_call_quotes_butterfly():
    mu = from_call_quotes([0.0, 1.0, 2.0, 3.0], [1.5, 0.5, 0.0, 0.0])
    assert mu.values.tolist() == [1.0, 2.0]
    assert np.allclose(mu.weights, [0.5, 0.5])


@given(st.lists(st.integers(1, 9), min_size=3, max_size=10), st.floats(0.1, 5.0))
def test_call_quotes_round_trip(raw, dk):
    k = np.arange(len(raw) + 2) * dk
    w = np.array(raw, dtype=float)
    mu = DiscreteMeasure(k[1:-1], w / w.sum())
    prices = mu.call_prices(k)
    back = from_call_quotes(k, prices)
    assert np.max(np.abs(back.call_prices(k[1:-1]) - prices[1:-1])) <= 1e-12 * (1.0 + dk)


def test_call_quote_arbitrage_errors():
    with pytest.raises(ArbitrageError) as e:
        from_call_quotes([0, 1, 2, 3], [1.0, 0.5, 0.3, 0.0])
    assert e.value.strike == 2.0
    with pytest.raises(ArbitrageError):
        from_call_quotes([0, 1, 2], [1.0, 1.1, 0.0])
    with pytest.raises(ArbitrageError):
        from_call_quotes([0, 1, 2], [1.0, 0.5, 0.1])
    with pytest.raises(InputError):
        from_call_quotes([0, 1, 3], [1.0, 0.5, 0.0])


@pytest.mark.parametrize("n", [1, 5, 30, 200])
def test_quantize_lognormal_moments(n):
    mu = quantize_lognormal(1.3, 0.25, 2.0, n)
    assert len(mu) == n
    assert abs(mu.mean - 1.3) < 1e-12
    assert np.all(np.diff(mu.values) > 0)
    # quantization contracts the variance towards the lognormal one from below
    var = 1.3 ** 2 * (np.exp(0.25 ** 2 * 2.0) - 1.0)
    assert mu.variance() <= var + 1e-12
    if n == 200:
        assert mu.variance() > 0.97 * var


def test_quantize_lognormal_increases_in_convex_order():
    ms = [quantize_lognormal(1.0, 0.25, t, 30) for t in (1, 2, 3)]
    assert convex_order(ms[0], ms[1]).holds and convex_order(ms[1], ms[2]).holds


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.05, 0.5), st.integers(1, 3), st.integers(2, 25), st.integers(10, 60))
def test_projection_keeps_mean_and_order(x0, sigma, t, n, g):
    mu = quantize_lognormal(x0, sigma, t, n)
    nu = quantize_lognormal(x0, sigma, t + 1, n + 3)
    lo = min(mu.values[0], nu.values[0]) * 0.9
    hi = max(mu.values[-1], nu.values[-1]) * 1.1
    grid = np.linspace(lo, hi, g)
    pm, pn = project_to_grid(mu, grid), project_to_grid(nu, grid)
    assert abs(pm.mean - mu.mean) <= 1e-12 * (1 + abs(mu.mean))
    assert convex_order(mu, pm).holds
    if convex_order(mu, nu).holds:
        assert convex_order(pm, pn, tol=1e-12).holds


def test_projection_requires_covering_grid():
    with pytest.raises(InputError):
        project_to_grid(DiscreteMeasure([0.0, 5.0], [0.5, 0.5]), [1.0, 2.0, 6.0])


def test_uniform_band():
    mu = uniform_band(3)
    assert mu.values.tolist() == [97.0, 99.0, 101.0, 103.0]
    assert convex_order(uniform_band(2), uniform_band(3)).holds
    with pytest.raises(InputError):
        uniform_band(0)


def test_lognormal_kernel_is_martingale():
    grid = np.linspace(0.2, 3.0, 40)
    K = lognormal_kernel(grid, 0.25, 1.0, 20)
    assert np.allclose(K.sum(axis=1), 1.0)
    assert np.allclose(K @ grid, grid, atol=1e-12)
    assert np.all(K >= 0)


def test_lognormal_chain_marginals():
    grid = np.linspace(0.2, 3.0, 30)
    ms = lognormal_chain(1.0, 0.25, grid, 3)
    for a, b in zip(ms, ms[1:]):
        assert convex_order(a, b).holds
    assert all(abs(m.mean - 1.0) < 1e-12 for m in ms)


def test_measure_csv_round_trip(tmp_path):
    mu = DiscreteMeasure([0.5, 1.0, 1.25], [0.2, 0.3, 0.5])
    write_measure_csv(mu, tmp_path / "m.csv")
    assert read_measure_csv(tmp_path / "m.csv").allclose(mu)
    (tmp_path / "bad.csv").write_text("value,weight\n1,abc\n")
    with pytest.raises(InputError):
        read_measure_csv(tmp_path / "bad.csv")
