"""Finite measures on the real line.

Marginal laws of the stock are :class:`DiscreteMeasure` objects (probability
measures with finitely many atoms).  Meet measures between two marginals are
plain :class:`FiniteMeasure` objects whose mass may be below one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .exceptions import ArbitrageError, InputError

MASS_TOL = 1e-12
MERGE_RTOL = 1e-9


def same_value(a, b):
    """Atom identity test used everywhere values from two grids are compared."""
    return np.abs(a - b) <= MERGE_RTOL * (1.0 + np.abs(a))


def match_atoms(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)`` with ``a[i] == b[j]`` up to :data:`MERGE_RTOL`.

    Both inputs must be strictly increasing.
    """
    if len(a) == 0 or len(b) == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    pos = np.searchsorted(b, a)
    ia, jb = [], []
    for i, p in enumerate(pos):
        for j in (p - 1, p):
            if 0 <= j < len(b) and same_value(a[i], b[j]):
                ia.append(i)
                jb.append(j)
                break
    return np.asarray(ia, dtype=int), np.asarray(jb, dtype=int)


def _merge_sorted(values: np.ndarray, weights: np.ndarray):
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    out_v, out_w = [], []
    for v, w in zip(values, weights):
        if out_v and same_value(out_v[-1], v):
            out_w[-1] += w
        else:
            out_v.append(v)
            out_w.append(w)
    return np.asarray(out_v, dtype=float), np.asarray(out_w, dtype=float)


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Nonnegative finite measure with atoms ``values`` and masses ``weights``."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if v.shape != w.shape:
            raise InputError("values and weights must have equal length")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise InputError("atoms must be finite")
        if np.any(np.diff(v) <= 0):
            raise InputError("atom values must be strictly increasing")
        if np.any(w < 0):
            raise InputError("atom weights must be nonnegative")
        v.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, values, weights, normalize: bool = False):
        """Sort, merge near-duplicate values and drop zero-weight atoms."""
        v = np.asarray(values, dtype=float).reshape(-1)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if v.shape != w.shape:
            raise InputError("values and weights must have equal length")
        v, w = _merge_sorted(v, w)
        keep = w > 0
        v, w = v[keep], w[keep]
        if normalize:
            total = w.sum()
            if total <= 0:
                raise InputError("cannot normalize a measure with zero mass")
            w = w / total
        return cls(v, w)

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        atoms = ", ".join(f"{v:g}: {w:.6g}" for v, w in zip(self.values, self.weights))
        return f"{type(self).__name__}({{{atoms}}})"

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def mean(self) -> float:
        return float(self.values @ self.weights)

    def weight_at(self, x: float) -> float:
        """Mass of the atom at ``x`` (zero off the support)."""
        i = np.searchsorted(self.values, x)
        for j in (i - 1, i):
            if 0 <= j < len(self.values) and same_value(self.values[j], x):
                return float(self.weights[j])
        return 0.0

    def call_prices(self, strikes) -> np.ndarray:
        """``∫ (x - k)^+`` for every strike ``k``."""
        k = np.asarray(strikes, dtype=float)
        payoff = np.maximum(self.values[None, :] - k.reshape(-1, 1), 0.0)
        return (payoff @ self.weights).reshape(k.shape)

    def allclose(self, other: "FiniteMeasure", atol: float = 1e-12) -> bool:
        if len(self) != len(other):
            return False
        return bool(
            np.all(same_value(self.values, other.values))
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure(FiniteMeasure):
    """Probability measure with finitely many strictly positive atoms."""

    def __post_init__(self):
        super().__post_init__()
        if len(self.values) == 0:
            raise InputError("a probability measure needs at least one atom")
        if np.any(self.weights <= 0):
            raise InputError("probability atoms must have positive weight")
        if abs(self.weights.sum() - 1.0) > MASS_TOL:
            raise InputError(f"total weight {self.weights.sum()!r} differs from 1")

    @classmethod
    def dirac(cls, x: float) -> "DiscreteMeasure":
        return cls([x], [1.0])

    @classmethod
    def from_atoms(cls, values, weights, normalize: bool = False):
        """Like :meth:`FiniteMeasure.from_atoms`; renormalizes round-off by default.

        Inputs whose total mass is off by more than ``1e-9`` are rejected
        unless ``normalize`` is set.
        """
        w = np.asarray(weights, dtype=float)
        if not normalize and abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"total weight {w.sum()!r} differs from 1")
        return super().from_atoms(values, weights, normalize=True)

    def variance(self) -> float:
        return float(((self.values - self.mean) ** 2) @ self.weights)


# ---------------------------------------------------------------------------
# operations


def meet(mu: FiniteMeasure, nu: FiniteMeasure) -> FiniteMeasure:
    """Atomwise minimum of two measures on the intersection of their supports.

    For discrete laws this is the canonical finite measure equivalent to the
    part of ``nu`` that is absolutely continuous with respect to ``mu``; both
    densities ``d meet / d mu`` and ``d meet / d nu`` lie in ``[0, 1]``.
    """
    i, j = match_atoms(mu.values, nu.values)
    if len(i) == 0:
        return FiniteMeasure(np.empty(0), np.empty(0))
    w = np.minimum(mu.weights[i], nu.weights[j])
    return FiniteMeasure(mu.values[i], w)


def density(theta: FiniteMeasure, mu: FiniteMeasure, at=None) -> np.ndarray:
    """Radon-Nikodym density ``d theta / d mu`` evaluated at ``at`` (default: atoms of mu).

    Zero wherever theta has no atom; ``theta`` must be absolutely continuous
    with respect to ``mu``.
    """
    at = mu.values if at is None else np.asarray(at, dtype=float)
    out = np.zeros(len(at))
    for k, x in enumerate(at):
        m = mu.weight_at(x)
        if m > 0:
            out[k] = theta.weight_at(x) / m
        elif theta.weight_at(x) > 0:
            raise InputError(f"theta has mass at {x} where mu has none")
    return out


@dataclass(frozen=True)
class ConvexOrderReport:
    holds: bool
    mean_gap: float
    worst_strike: float | None
    worst_violation: float

    def __bool__(self):
        return self.holds


def convex_order(mu: FiniteMeasure, nu: FiniteMeasure, tol: float = 1e-9) -> ConvexOrderReport:
    """Check ``mu <=_cx nu`` through call prices at every atom of either measure."""
    mean_gap = nu.mean - mu.mean
    strikes = np.union1d(mu.values, nu.values)
    excess = mu.call_prices(strikes) - nu.call_prices(strikes)
    k = int(np.argmax(excess)) if len(strikes) else 0
    worst = float(excess[k]) if len(strikes) else 0.0
    holds = abs(mean_gap) <= tol and worst <= tol
    return ConvexOrderReport(
        holds=holds,
        mean_gap=float(mean_gap),
        worst_strike=float(strikes[k]) if worst > 0 else None,
        worst_violation=max(worst, 0.0),
    )


def from_call_quotes(strikes: Sequence[float], prices: Sequence[float], tol: float = 1e-9) -> DiscreteMeasure:
    """Risk-neutral law from call prices on a uniform strike grid.

    Interior atoms receive the butterfly weight
    ``(C[i-1] - 2 C[i] + C[i+1]) / dk``; whatever mass is left goes to the
    first strike, which leaves every interior call price unchanged.

    Raises:
        InputError: unequal lengths, fewer than three strikes, nonuniform spacing.
        ArbitrageError: an increasing or non-convex price curve, a slope below
            -1, or a nonzero price at the last strike.
    """
    k = np.asarray(strikes, dtype=float)
    c = np.asarray(prices, dtype=float)
    if k.shape != c.shape or k.ndim != 1:
        raise InputError("strikes and prices must be 1-d sequences of equal length")
    if len(k) < 3:
        raise InputError("at least three quotes are required")
    steps = np.diff(k)
    dk = steps[0]
    if dk <= 0 or np.any(np.abs(steps - dk) > 1e-9 * max(1.0, abs(dk))):
        raise InputError("strikes must be increasing and uniformly spaced")

    for i in range(1, len(k)):
        if c[i] > c[i - 1] + tol:
            raise ArbitrageError(f"call price increases at strike {k[i]:g}", strike=float(k[i]))
        if i < len(k) - 1 and c[i - 1] - 2 * c[i] + c[i + 1] < -tol:
            raise ArbitrageError(f"call prices not convex at strike {k[i]:g}", strike=float(k[i]))
    if abs(c[-1]) > tol:
        raise ArbitrageError(f"call price at the last strike {k[-1]:g} must be 0", strike=float(k[-1]))

    interior = np.maximum((c[:-2] - 2 * c[1:-1] + c[2:]) / dk, 0.0)
    boundary = 1.0 - interior.sum()
    if boundary < -tol:
        raise ArbitrageError(f"call slope below -1 at strike {k[0]:g}", strike=float(k[0]))
    weights = np.concatenate([[max(boundary, 0.0)], interior, [0.0]])
    return DiscreteMeasure.from_atoms(k, weights)


def quantize_lognormal(x0: float, sigma: float, t: float, n: int) -> DiscreteMeasure:
    """Quantile-band conditional means of ``x0 * exp(sigma W_t - sigma^2 t / 2)``.

    Atom ``i`` is ``E[X | U in ((i-1)/n, i/n]]`` where ``U`` is the quantile
    level, each with weight ``1/n``.  Uses
    ``E[X; a < Z <= b] = x0 (Phi(b - v) - Phi(a - v))`` with ``v = sigma sqrt(t)``.
    """
    if not (x0 > 0 and sigma > 0 and t > 0):
        raise InputError("x0, sigma and t must be positive")
    if int(n) != n or n < 1:
        raise InputError("n must be a positive integer")
    n = int(n)
    v = sigma * np.sqrt(t)
    z = norm.ppf(np.arange(n + 1) / n)
    # tail-accurate band masses of Phi(z - v)
    upper = norm.sf(z[:-1] - v) - norm.sf(z[1:] - v)
    values = x0 * n * upper
    # telescoping sum is exact in exact arithmetic; remove float drift
    values *= x0 / values.mean()
    return DiscreteMeasure(values, np.full(n, 1.0 / n))


def project_to_grid(mu: FiniteMeasure, grid: Sequence[float]):
    """Move every atom onto its two grid neighbours, preserving the mean.

    Atom ``x`` with ``g <= x <= g'`` sends ``(g' - x)/(g' - g)`` of its mass to
    ``g`` and the rest to ``g'``.  The split is a martingale kernel, so
    ``mu <=_cx project(mu)`` and convex order between measures is kept.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 1 or np.any(np.diff(g) <= 0):
        raise InputError("grid must be strictly increasing")
    lo, hi = mu.values.min(), mu.values.max()
    if lo < g[0] and not same_value(lo, g[0]) or hi > g[-1] and not same_value(hi, g[-1]):
        raise InputError(f"grid [{g[0]:g}, {g[-1]:g}] does not span support [{lo:g}, {hi:g}]")
    out = np.zeros(len(g))
    for x, w in zip(mu.values, mu.weights):
        j = int(np.searchsorted(g, x))
        if j < len(g) and same_value(g[j], x):
            out[j] += w
        elif j > 0 and same_value(g[j - 1], x):
            out[j - 1] += w
        else:
            lam = (x - g[j - 1]) / (g[j] - g[j - 1])
            out[j - 1] += w * (1.0 - lam)
            out[j] += w * lam
    keep = out > 0
    cls = DiscreteMeasure if isinstance(mu, DiscreteMeasure) else FiniteMeasure
    if cls is DiscreteMeasure:
        return DiscreteMeasure.from_atoms(g[keep], out[keep])
    return FiniteMeasure(g[keep], out[keep])


def uniform_band(t: int, center: float = 100.0, step: float = 2.0) -> DiscreteMeasure:
    """Uniform law on ``t + 1`` equally spaced atoms centred at ``center``.

    With the default step this is the uniform law on
    ``{center - t, center - t + 2, ..., center + t}``.
    """
    if int(t) != t or t < 1:
        raise InputError("t must be an integer >= 1")
    if step <= 0:
        raise InputError("step must be positive")
    t = int(t)
    values = center + step * (np.arange(t + 1) - t / 2.0)
    return DiscreteMeasure(values, np.full(t + 1, 1.0 / (t + 1)))


def lognormal_kernel(grid: Sequence[float], sigma: float, dt: float, n: int) -> np.ndarray:
    """Martingale transition matrix on ``grid`` for one lognormal step of length ``dt``.

    From state ``x`` the quantized gross returns ``R`` (mean one) move the
    price to ``x (1 + lam (R - 1))``, projected onto the grid.  ``lam <= 1``
    shrinks the returns only where the full move would leave the grid.
    """
    g = np.asarray(grid, dtype=float)
    if len(g) < 2 or np.any(np.diff(g) <= 0) or g[0] <= 0:
        raise InputError("grid must be positive and strictly increasing")
    ret = quantize_lognormal(1.0, sigma, dt, n)
    r, w = ret.values, ret.weights
    K = np.zeros((len(g), len(g)))
    for i, x in enumerate(g):
        lam = 1.0
        if x * r.max() > g[-1]:
            lam = min(lam, (g[-1] / x - 1.0) / (r.max() - 1.0))
        if x * r.min() < g[0]:
            lam = min(lam, (g[0] / x - 1.0) / (r.min() - 1.0))
        step = project_to_grid(FiniteMeasure.from_atoms(x * (1.0 + lam * (r - 1.0)), w), g)
        K[i, np.searchsorted(g, step.values - 1e-12 * (1 + np.abs(step.values)))] = step.weights
    return K


def lognormal_chain(
    x0: float, sigma: float, grid: Sequence[float], n_times: int,
    n_init: int = 30, n_step: int = 20, dt: float = 1.0,
) -> list:
    """Marginals of a time-homogeneous martingale chain approximating Black-Scholes on ``grid``.

    The first marginal is the quantized lognormal law at time ``dt`` projected
    onto the grid; later ones follow by applying :func:`lognormal_kernel`.
    Being generated by one kernel, the marginals always admit a homogeneous
    martingale coupling.
    """
    g = np.asarray(grid, dtype=float)
    first = project_to_grid(quantize_lognormal(x0, sigma, dt, n_init), g)
    mu = np.zeros(len(g))
    i, j = match_atoms(g, first.values)
    mu[i] = first.weights[j]
    K = lognormal_kernel(g, sigma, dt, n_step)
    out = []
    for _ in range(n_times):
        keep = mu > 1e-14
        out.append(DiscreteMeasure.from_atoms(g[keep], mu[keep], normalize=True))
        mu = mu @ K
    return out


# ---------------------------------------------------------------------------
# CSV I/O


def read_measure_csv(path) -> DiscreteMeasure:
    """Read a ``value,weight`` CSV with header."""
    rows = _read_two_columns(path, ("value", "weight"))
    return DiscreteMeasure.from_atoms([r[0] for r in rows], [r[1] for r in rows])


def write_measure_csv(mu: FiniteMeasure, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "weight"])
        for v, p in zip(mu.values, mu.weights):
            w.writerow([repr(float(v)), repr(float(p))])


def read_call_quotes_csv(path) -> DiscreteMeasure:
    rows = _read_two_columns(path, ("strike", "price"))
    return from_call_quotes([r[0] for r in rows], [r[1] for r in rows])


def _read_two_columns(path, header: Iterable[str]):
    header = tuple(header)
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if tuple(h.strip().lower() for h in first) != header:
            raise InputError(f"{path}: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 columns")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric entry") from None
    values = [r[0] for r in rows]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InputError(f"{path}: rows must be sorted by {header[0]}")
    return rows
