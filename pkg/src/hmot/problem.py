"""Time grids, homogeneity index sets and the `ProblemSpec` bundle of inputs."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .exceptions import InputError
from .measures import DiscreteMeasure, convex_order
from .payoff import Expr, parse_payoff


class TimeGrid:
    """Strictly increasing trading-day labels ``t_1 < ... < t_N``."""

    def __init__(self, labels: Sequence[int]):
        labels = tuple(int(t) for t in labels)
        if len(labels) < 2:
            raise InputError("a time grid needs at least two points")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise InputError("time labels must be strictly increasing")
        self.labels = labels

    @classmethod
    def uniform(cls, n: int, start: int = 1) -> "TimeGrid":
        return cls(range(start, start + n))

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"TimeGrid({list(self.labels)})"

    @property
    def is_uniform(self) -> bool:
        gaps = np.diff(self.labels)
        return bool(np.all(gaps == gaps[0]))


class HomTuple(NamedTuple):
    """One element ``(i, j, tau_i, tau_j)`` of the homogeneity index set (1-based)."""

    i: int
    j: int
    tau_i: int
    tau_j: int

    @property
    def key(self) -> str:
        return f"{self.i},{self.j},{self.tau_i},{self.tau_j}"


@dataclass(frozen=True)
class DeltaSet:
    tuples: tuple[HomTuple, ...]

    def __len__(self):
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    def __contains__(self, item):
        return tuple(item) in {tuple(t) for t in self.tuples}


def build_delta(grid: TimeGrid) -> DeltaSet:
    """All lag-matched index pairs whose forward kernels must agree.

    A tuple ``(i, j, tau_i, tau_j)`` with ``i < j`` is included when both
    forward points exist and span the same number of trading days.  On a
    uniform grid this reduces to ``{(s, t, tau, tau) : s < t, t + tau <= N}``.
    Tuples come out in lexicographic order.
    """
    t = grid.labels
    n = len(t)
    out = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for ti in range(1, n - i + 1):
                gap = t[i + ti - 1] - t[i - 1]
                for tj in range(1, n - j + 1):
                    if t[j + tj - 1] - t[j - 1] == gap:
                        out.append(HomTuple(i, j, ti, tj))
    return DeltaSet(tuple(out))


def order2_pairs(delta: DeltaSet):
    """Pairs of tuples sharing ``(i, j)`` with ``tau_i`` increasing, for two-period kernels."""
    by_ij: dict = {}
    for tup in delta:
        by_ij.setdefault((tup.i, tup.j), []).append(tup)
    pairs = []
    for (i, j), tups in sorted(by_ij.items()):
        tups.sort()
        for a in range(len(tups)):
            for b in range(a + 1, len(tups)):
                if tups[a].tau_i < tups[b].tau_i and tups[a].tau_j < tups[b].tau_j:
                    pairs.append((tups[a], tups[b]))
    return pairs


class Mode(str, enum.Enum):
    OT = "ot"
    MOT = "mot"
    HMOT = "hmot"
    HMOT2 = "hmot2"
    RHMOT = "rhmot"
    PEN = "pen"

    @property
    def martingale(self) -> bool:
        return self is not Mode.OT

    @property
    def homogeneous(self) -> bool:
        return self in (Mode.HMOT, Mode.HMOT2)


class Metric(str, enum.Enum):
    TV = "tv"
    W1 = "w1"


SENSES = ("inf", "sup")


def parse_r(r, delta: DeltaSet) -> dict[HomTuple, float]:
    """Resolve a global or per-tuple relaxation level into a dict over ``delta``.

    Per-tuple mappings are keyed by :class:`HomTuple`, plain tuples, or strings
    like ``"1,2,1"`` (uniform shorthand) / ``"1,2,1,1"``.
    """
    if r is None:
        return {}
    if isinstance(r, Mapping):
        out = {}
        for key, val in r.items():
            tup = _tuple_key(key)
            match = [d for d in delta if tuple(d) == tup or (len(tup) == 3 and tuple(d) == tup + (tup[2],))]
            if not match:
                raise InputError(f"r given for {key!r}, which is not a homogeneity tuple")
            out[match[0]] = float(val)
        missing = [d.key for d in delta if d not in out]
        if missing:
            raise InputError(f"r missing for tuples {missing}")
    else:
        out = {d: float(r) for d in delta}
    if any(v < 0 or not np.isfinite(v) for v in out.values()):
        raise InputError("r must be finite and nonnegative")
    return out


def _tuple_key(key):
    if isinstance(key, str):
        parts = key.replace("(", "").replace(")", "").split(",")
        return tuple(int(p) for p in parts)
    return tuple(int(k) for k in key)


@dataclass(frozen=True)
class SolverOptions:
    backend: str = "auto"
    max_iter: int = 1_000_000
    feas_tol: float = 1e-9
    max_vars: int = 200_000
    # columns above which "auto" hands the LP to HiGHS
    simplex_max_cols: int = 4000


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to build one robust-pricing linear program."""

    grid: TimeGrid
    marginals: tuple
    payoff: Expr
    mode: Mode = Mode.MOT
    sense: str = "both"
    metric: Metric = Metric.TV
    r: object = None
    pairwise: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)
    check_convex_order: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if isinstance(self.payoff, str):
            object.__setattr__(self, "payoff", parse_payoff(self.payoff, len(self.grid)))
        if not isinstance(self.grid, TimeGrid):
            object.__setattr__(self, "grid", TimeGrid(self.grid))
        if len(self.marginals) != len(self.grid):
            raise InputError(f"{len(self.marginals)} marginals for a grid of {len(self.grid)} points")
        if not all(isinstance(m, DiscreteMeasure) for m in self.marginals):
            raise InputError("marginals must be DiscreteMeasure objects")
        if self.payoff.max_coord() > len(self.grid):
            raise InputError(f"payoff references S{self.payoff.max_coord()} beyond the grid")
        if self.sense not in SENSES + ("both",):
            raise InputError(f"sense must be inf, sup or both, not {self.sense!r}")
        if self.mode in (Mode.RHMOT, Mode.PEN):
            if self.r is None:
                raise InputError(f"mode {self.mode.value} needs a level r")
            rr = parse_r(self.r, self.delta)
            if self.mode is Mode.PEN and any(v <= 0 for v in rr.values()):
                raise InputError("penalized mode needs r > 0")
        for t, (a, b) in enumerate(zip(self.marginals, self.marginals[1:]), start=1):
            rep = convex_order(a, b, tol=1e-9)
            if not rep.holds:
                detail = (f"mean gap {rep.mean_gap:.3g}" if rep.worst_strike is None
                          else f"worst strike {rep.worst_strike:.6g}")
                msg = f"marginals {t} and {t + 1} are not in convex order ({detail})"
                if self.mode.martingale and self.check_convex_order:
                    raise InputError(msg)
                warnings.warn(msg, stacklevel=2)

    @property
    def delta(self) -> DeltaSet:
        return build_delta(self.grid)

    @property
    def r_values(self) -> dict[HomTuple, float]:
        return parse_r(self.r, self.delta)

    @property
    def n_paths(self) -> int:
        return int(np.prod([len(m) for m in self.marginals], dtype=object))

    def senses(self):
        return SENSES if self.sense == "both" else (self.sense,)

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)
