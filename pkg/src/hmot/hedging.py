"""Superhedging portfolios read off the transport LP duals.

A portfolio holds static positions ``h_t`` in time-``t`` claims, stock
holdings ``theta_t`` per history prefix, and homogeneity swaps ``g`` paying
``g(S_s, S_{s+tau}) dtheta/dmu_s(S_s) - g(S_t, S_{t+tau}) dtheta/dmu_t(S_t)``.
For an upper bound the combined payoff dominates the claim on every path;
for a lower bound it is dominated (a subhedge).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, NotOptimalError
from .lp import LPSolution
from .measures import match_atoms
from .problem import HomTuple, Metric, Mode, ProblemSpec
from .transport import PrimalLP, union_values

VERIFY_MAX_PATHS = 2_000_000
_CHUNK = 200_000


@dataclass
class GTable:
    """Swap positions of one homogeneity tuple on the grid ``x`` times ``y`` (times ``z``)."""

    tuple: HomTuple
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    dens_s: np.ndarray
    dens_t: np.ndarray
    z: np.ndarray | None = None
    partner: HomTuple | None = None
    # relaxed problems: shadow price of the distance budget and its level
    budget_price: float | None = None
    r: float | None = None

    @property
    def times(self):
        s, t = self.tuple.i, self.tuple.j
        out = [(s, s + self.tuple.tau_i), (t, t + self.tuple.tau_j)]
        if self.partner is not None:
            out = [
                (s, s + self.tuple.tau_i, s + self.partner.tau_i),
                (t, t + self.tuple.tau_j, t + self.partner.tau_j),
            ]
        return out


@dataclass
class HedgePortfolio:
    """Static options, stock strategy and homogeneity swaps.

    ``theta[t]`` is flat over history prefixes ``(x_1, ..., x_{t+1})`` in C
    order, or over ``x_{t+1}`` alone when ``pairwise`` is set (a certificate
    for the relaxed problem only).
    """

    grids: tuple
    h: list
    theta: list
    g: list = field(default_factory=list)
    pairwise: bool = False
    sense: str = "sup"

    @property
    def shape(self):
        return tuple(len(v) for v in self.grids)

    @property
    def relaxation_cost(self) -> float:
        return float(sum((gt.budget_price or 0.0) * (gt.r or 0.0) for gt in self.g))

    def hedge_values(self, idx: np.ndarray) -> np.ndarray:
        """Payoff of the portfolio on paths given as grid indices (shape ``N x P``)."""
        n = len(self.grids)
        out = np.zeros(idx.shape[1])
        for t in range(n):
            out += self.h[t][idx[t]]
        for t, th in enumerate(self.theta):
            step = self.grids[t + 1][idx[t + 1]] - self.grids[t][idx[t]]
            key = idx[t] if self.pairwise else np.ravel_multi_index(tuple(idx[: t + 1]), self.shape[: t + 1])
            out += th[key] * step
        for gt in self.g:
            for (times, dens, sign) in zip(gt.times, (gt.dens_s, gt.dens_t), (1.0, -1.0)):
                cx = _lookup(gt.x, self.grids[times[0] - 1])[idx[times[0] - 1]]
                m = cx >= 0
                cy = _lookup(gt.y, self.grids[times[1] - 1])[idx[times[1] - 1][m]]
                if gt.z is None:
                    val = gt.values[cx[m], cy]
                else:
                    cz = _lookup(gt.z, self.grids[times[2] - 1])[idx[times[2] - 1][m]]
                    val = gt.values[cx[m], cy, cz]
                out[m] += sign * val * dens[cx[m]]
        return out

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        shape = self.shape
        theta = []
        for t, th in enumerate(self.theta):
            if self.pairwise:
                keys = [[float(v)] for v in self.grids[t]]
            else:
                pidx = np.indices(shape[: t + 1]).reshape(t + 1, -1)
                keys = np.column_stack([self.grids[u][pidx[u]] for u in range(t + 1)]).tolist()
            theta.append({"t": t + 1, "keys": keys, "values": th.tolist()})
        g, dens_s, dens_t = [], [], []
        for gt in self.g:
            entry = {"tuple": list(gt.tuple), "x": gt.x.tolist(), "y": gt.y.tolist(), "values": gt.values.tolist()}
            if gt.z is not None:
                entry.update({"partner": list(gt.partner), "z": gt.z.tolist()})
            if gt.budget_price is not None:
                entry.update({"budget_price": gt.budget_price, "r": gt.r})
            g.append(entry)
            dens_s.append({"tuple": list(gt.tuple), "x": gt.x.tolist(), "values": gt.dens_s.tolist()})
            dens_t.append({"tuple": list(gt.tuple), "x": gt.x.tolist(), "values": gt.dens_t.tolist()})
        return {
            "sense": self.sense,
            "pairwise": self.pairwise,
            "grids": [v.tolist() for v in self.grids],
            "h": [{"t": t + 1, "x": self.grids[t].tolist(), "values": h.tolist()} for t, h in enumerate(self.h)],
            "theta": theta,
            "g": g,
            "density_s": dens_s,
            "density_t": dens_t,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "HedgePortfolio":
        grids = tuple(np.asarray(v, dtype=float) for v in d["grids"])
        h = [np.asarray(e["values"], dtype=float) for e in d["h"]]
        theta = [np.asarray(e["values"], dtype=float) for e in d["theta"]]
        g = []
        for e, ds, dt in zip(d["g"], d["density_s"], d["density_t"]):
            g.append(GTable(
                HomTuple(*e["tuple"]), np.asarray(e["x"], float), np.asarray(e["y"], float),
                np.asarray(e["values"], float), np.asarray(ds["values"], float), np.asarray(dt["values"], float),
                np.asarray(e["z"], float) if "z" in e else None,
                HomTuple(*e["partner"]) if "partner" in e else None,
                e.get("budget_price"), e.get("r"),
            ))
        return cls(grids, h, theta, g, d.get("pairwise", False), d.get("sense", "sup"))


def _lookup(sub: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Position of each ``grid`` atom inside ``sub`` (``-1`` when absent)."""
    out = np.full(len(grid), -1)
    i, j = match_atoms(sub, grid)
    out[j] = i
    return out


def extract_portfolio(primal: PrimalLP, solution: LPSolution, sense: str) -> HedgePortfolio:
    """Turn the duals of an optimal transport LP into a (sub/super)hedge.

    Homogeneity duals are rescaled by ``mu_s(x) mu_t(x) / theta(x)`` so the
    swap term takes the density form of the portfolio.

    Raises:
        NotOptimalError: the solution is not optimal.
    """
    if not solution.optimal:
        raise NotOptimalError(f"cannot extract a hedge from a {solution.status} solution")
    if sense not in ("inf", "sup"):
        raise InputError("sense must be inf or sup")
    y = solution.duals
    spec = primal.spec
    h = [y[rows].copy() for rows in primal.marginal_rows]
    theta = [y[sl].copy() for sl in primal.martingale_rows]
    if not spec.mode.martingale:
        theta = [np.zeros(len(g)) if spec.pairwise else np.zeros(int(np.prod(primal.shape[: t + 1])))
                 for t, g in enumerate(primal.grids[:-1])]
    g = []
    for blk in primal.hom_blocks:
        dens_s = blk.theta / blk.mu_s
        dens_t = blk.theta / blk.mu_t
        if spec.mode is Mode.RHMOT:
            g.append(_relaxed_table(primal, blk, y, dens_s, dens_t))
            continue
        vals = y[blk.rows].reshape(len(blk.x), len(blk.y)) * (blk.mu_s * blk.mu_t / blk.theta)[:, None]
        g.append(GTable(blk.tuple, blk.x, blk.y, vals, dens_s, dens_t))
    for blk in primal.hom2_blocks:
        vals = y[blk.rows].reshape(len(blk.x), len(blk.y), len(blk.z))
        vals = vals * (blk.mu_s * blk.mu_t / blk.theta)[:, None, None]
        g.append(GTable(blk.tuple, blk.x, blk.y, vals, blk.theta / blk.mu_s, blk.theta / blk.mu_t, blk.z, blk.partner))
    return HedgePortfolio(primal.grids, h, theta, g, spec.pairwise, sense)


def _relaxed_table(primal: PrimalLP, blk, y, dens_s, dens_t) -> GTable:
    info = primal.relaxed[blk.tuple]
    nx, ny = len(blk.x), len(blk.y)
    pos = y[info["pos"]]
    neg = y[info["neg"]]
    gamma = (pos - neg).reshape(nx, -1)
    if primal.spec.metric is Metric.TV:
        vals = gamma
    else:
        # cumulative rows: g(x, y_j) = sum_{k >= j} gamma(x, k), zero at the top atom
        vals = np.zeros((nx, ny))
        vals[:, : ny - 1] = np.cumsum(gamma[:, ::-1], axis=1)[:, ::-1]
    return GTable(blk.tuple, blk.x, blk.y, vals, dens_s, dens_t, budget_price=float(y[info["budget_row"]]), r=info["r"])


def portfolio_cost(portfolio: HedgePortfolio, marginals) -> float:
    """``sum_t sum_x h_t(x) mu_t(x)`` plus the price of any relaxation budgets."""
    total = 0.0
    for t, mu in enumerate(marginals):
        i, j = match_atoms(mu.values, portfolio.grids[t])
        if len(i) != len(mu):
            missing = np.setdiff1d(np.arange(len(mu)), i)
            raise InputError(f"h_{t + 1} has no entry for atom {mu.values[missing[0]]}")
        total += float(portfolio.h[t][j] @ mu.weights[i])
    return total + portfolio.relaxation_cost


@dataclass
class HedgeReport:
    passed: bool
    min_slack: float
    argmin_path: list
    active_fraction: float
    exhaustive: bool
    n_paths: int
    seed: int | None = None
    certificate_scope: str = "full"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_slack": self.min_slack,
            "argmin_path": self.argmin_path,
            "active_fraction": self.active_fraction,
            "exhaustive": self.exhaustive,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "certificate_scope": self.certificate_scope,
        }


def hedge_slack(portfolio: HedgePortfolio, spec: ProblemSpec, idx: np.ndarray) -> np.ndarray:
    """Signed slack on the given paths: ``hedge - f`` for upper bounds, ``f - hedge`` for lower."""
    pay = spec.payoff.evaluate(np.column_stack([portfolio.grids[t][idx[t]] for t in range(len(portfolio.grids))]))
    sign = 1.0 if portfolio.sense == "sup" else -1.0
    return sign * (portfolio.hedge_values(idx) - np.asarray(pay, dtype=float))


def verify_superhedge(
    portfolio: HedgePortfolio,
    spec: ProblemSpec,
    tol: float = 1e-7,
    max_paths: int = VERIFY_MAX_PATHS,
    n_samples: int = 200_000,
    seed: int = 0,
) -> HedgeReport:
    """Evaluate the hedging inequality on every grid path (or a seeded sample above ``max_paths``)."""
    for t, mu in enumerate(spec.marginals):
        i, _ = match_atoms(mu.values, portfolio.grids[t])
        if len(i) != len(mu):
            raise InputError(f"portfolio grid at time {t + 1} does not cover the marginal support")
    shape = portfolio.shape
    total = int(np.prod(shape, dtype=np.int64))
    exhaustive = total <= max_paths
    best, best_idx, active, count = np.inf, None, 0, 0
    if exhaustive:
        chunks = (np.arange(a, min(a + _CHUNK, total)) for a in range(0, total, _CHUNK))
        used_seed = None
    else:
        rng = np.random.default_rng(seed)
        sample = rng.integers(0, total, size=n_samples)
        chunks = (sample[a: a + _CHUNK] for a in range(0, n_samples, _CHUNK))
        used_seed = seed
    for flat in chunks:
        idx = np.vstack(np.unravel_index(flat, shape))
        sl = hedge_slack(portfolio, spec, idx)
        k = int(np.argmin(sl))
        if sl[k] < best:
            best, best_idx = float(sl[k]), idx[:, k]
        active += int(np.sum(sl <= tol))
        count += len(flat)
    path = [float(portfolio.grids[t][best_idx[t]]) for t in range(len(shape))]
    return HedgeReport(
        passed=best >= -tol,
        min_slack=best,
        argmin_path=path,
        active_fraction=active / count,
        exhaustive=exhaustive,
        n_paths=count,
        seed=used_seed,
        certificate_scope="pairwise relaxation" if portfolio.pairwise else "full",
    )


def dual_gap(primal_value: float, cost: float) -> float:
    return abs(cost - primal_value) / (1.0 + abs(primal_value))


def swap_expectation(table: GTable, coupling) -> float:
    """Expected payoff of one homogeneity swap under ``coupling`` (zero for homogeneous laws)."""
    total = 0.0
    for times, dens, sign in zip(table.times, (table.dens_s, table.dens_t), (1.0, -1.0)):
        if table.z is not None:
            raise InputError("swap_expectation supports one-step swaps")
        a, b = times
        p = coupling.pair_marginal(a, b)
        cx = _lookup(table.x, coupling.values[a - 1])
        cy = _lookup(table.y, coupling.values[b - 1])
        rows = np.flatnonzero(cx >= 0)
        for r in rows:
            cols = np.flatnonzero(cy >= 0)
            total += sign * dens[cx[r]] * float(p[r, cols] @ table.values[cx[r], cy[cols]])
    return total
