"""JSON problem configs.

A config names the time grid, the marginals, the payoff and the constraint
mode.  Marginal entries take one of the forms::

    {"atoms": [[value, weight], ...]}
    {"csv": "measure.csv"}                      # value,weight columns
    {"calls": {"strikes": [...], "prices": [...]}}  or  {"calls": "quotes.csv"}
    {"lognormal": {"x0": 1, "sigma": 0.25, "t": 1, "n": 30}}
    {"uniform_band": {"t": 3, "center": 100, "step": 2}}

or the whole ``marginals`` field is ``{"lognormal_chain": {...}}`` which
generates one marginal per grid label on ``common_grid`` (an optional
``"times"`` list picks chain steps, e.g. ``[1, 2, 4]``).  With a
``common_grid`` every marginal is projected onto it.  Relative file paths
resolve against the config's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, HMOTError, PayoffSyntaxError
from .measures import (
    DiscreteMeasure, from_call_quotes, lognormal_chain, project_to_grid, quantize_lognormal,
    read_call_quotes_csv, read_measure_csv, uniform_band,
)
from .problem import Metric, Mode, ProblemSpec, SolverOptions, TimeGrid

ENV_MAX_VARS = "HMOT_MAX_VARS"
_TOP = {
    "name", "grid", "marginals", "common_grid", "payoff", "mode", "sense", "r", "metric",
    "pairwise", "solver", "pen", "check_convex_order", "description",
}


@dataclass
class Config:
    spec: ProblemSpec
    name: str = "problem"
    base_dir: Path = field(default_factory=Path.cwd)
    pen: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def load_config(path) -> Config:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, path.parent)


def parse_config(data: dict, base_dir=".") -> Config:
    """Build a :class:`Config` from decoded JSON; errors name the offending field."""
    base_dir = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(data) - _TOP)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    for key in ("marginals", "payoff"):
        if key not in data:
            raise ConfigError(key, "required field missing")

    common = _common_grid(data.get("common_grid"))
    raw_m = data["marginals"]
    grid = _grid(data.get("grid"), raw_m)
    if isinstance(raw_m, dict):
        if set(raw_m) != {"lognormal_chain"}:
            raise ConfigError("marginals", "object form must be {\"lognormal_chain\": {...}}")
        if common is None:
            raise ConfigError("common_grid", "required by lognormal_chain")
        raw_c = dict(raw_m["lognormal_chain"]) if isinstance(raw_m["lognormal_chain"], dict) else raw_m["lognormal_chain"]
        pick = raw_c.pop("times", None) if isinstance(raw_c, dict) else None
        p = _params("marginals.lognormal_chain", raw_c, {"x0", "sigma"}, {"n_init", "n_step", "dt"})
        if pick is None:
            pick = list(range(1, len(grid) + 1))
        elif not (isinstance(pick, list) and pick and all(isinstance(v, int) and v >= 1 for v in pick)):
            raise ConfigError("marginals.lognormal_chain.times", "must be a list of chain steps >= 1")
        try:
            chain = lognormal_chain(grid=common, n_times=max(pick), **p)
        except HMOTError as exc:
            raise ConfigError("marginals.lognormal_chain", str(exc)) from exc
        marginals = [chain[i - 1] for i in pick]
    elif isinstance(raw_m, list):
        marginals = [_marginal(f"marginals[{i}]", e, base_dir, common) for i, e in enumerate(raw_m)]
    else:
        raise ConfigError("marginals", "must be a list of marginal entries or a lognormal_chain object")
    if len(marginals) != len(grid):
        raise ConfigError("grid", f"{len(grid)} time labels for {len(marginals)} marginals")

    solver = _solver(data.get("solver", {}))
    kwargs = {}
    for key, conv in (("mode", Mode), ("metric", Metric)):
        if key in data:
            try:
                kwargs[key] = conv(data[key])
            except ValueError:
                choices = ", ".join(m.value for m in conv)
                raise ConfigError(key, f"{data[key]!r} is not one of {choices}") from None
    if "sense" in data:
        if data["sense"] not in ("inf", "sup", "both"):
            raise ConfigError("sense", "must be inf, sup or both")
        kwargs["sense"] = data["sense"]
    for key in ("pairwise", "check_convex_order"):
        if key in data:
            if not isinstance(data[key], bool):
                raise ConfigError(key, "must be true or false")
            kwargs[key] = data[key]
    if not isinstance(data["payoff"], str):
        raise ConfigError("payoff", "must be a string expression")
    try:
        spec = ProblemSpec(grid, marginals, data["payoff"], r=data.get("r"), solver=solver, **kwargs)
    except PayoffSyntaxError as exc:
        raise ConfigError("payoff", str(exc)) from exc
    except HMOTError as exc:
        raise ConfigError(_guess_field(exc), str(exc)) from exc
    pen = data.get("pen", {})
    if not isinstance(pen, dict):
        raise ConfigError("pen", "must be an object")
    return Config(spec, str(data.get("name", "problem")), base_dir, pen, data)


def _guess_field(exc) -> str:
    msg = str(exc)
    for needle, fld in (("payoff", "payoff"), ("coordinate", "payoff"), ("convex order", "marginals"),
                        ("r must", "r"), ("r given", "r"), ("r missing", "r"), ("r > 0", "r")):
        if needle in msg:
            return fld
    return "<root>"


def _grid(raw, marginals) -> TimeGrid:
    n = len(marginals) if isinstance(marginals, list) else None
    if raw is None:
        if n is None:
            raise ConfigError("grid", "required when marginals are generated")
        return TimeGrid.uniform(n)
    try:
        if isinstance(raw, int) and not isinstance(raw, bool):
            return TimeGrid.uniform(raw)
        if isinstance(raw, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
            return TimeGrid(raw)
    except HMOTError as exc:
        raise ConfigError("grid", str(exc)) from exc
    raise ConfigError("grid", "must be a count or a list of increasing integer labels")


def _common_grid(raw):
    if raw is None:
        return None
    if isinstance(raw, dict) and set(raw) == {"linspace"}:
        v = raw["linspace"]
        if not (isinstance(v, list) and len(v) == 3 and all(isinstance(a, (int, float)) for a in v)):
            raise ConfigError("common_grid.linspace", "must be [start, stop, count]")
        if int(v[2]) != v[2] or v[2] < 2 or not v[1] > v[0]:
            raise ConfigError("common_grid.linspace", "need start < stop and an integer count >= 2")
        return np.linspace(float(v[0]), float(v[1]), int(v[2]))
    if isinstance(raw, list) and all(isinstance(a, (int, float)) for a in raw):
        g = np.asarray(raw, dtype=float)
        if len(g) < 2 or np.any(np.diff(g) <= 0):
            raise ConfigError("common_grid", "must be strictly increasing")
        return g
    raise ConfigError("common_grid", "must be a list of values or {\"linspace\": [start, stop, count]}")


def _params(path, raw, required, optional):
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be an object")
    for key in sorted(required):
        if key not in raw:
            raise ConfigError(f"{path}.{key}", "required field missing")
    for key, val in raw.items():
        if key not in required | optional:
            raise ConfigError(f"{path}.{key}", "unknown field")
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(f"{path}.{key}", "must be a number")
    return dict(raw)


def _marginal(path, entry, base_dir: Path, common):
    if not isinstance(entry, dict):
        raise ConfigError(path, "must be an object")
    kinds = [k for k in ("atoms", "csv", "calls", "lognormal", "uniform_band") if k in entry]
    extra = set(entry) - {"atoms", "csv", "calls", "lognormal", "uniform_band", "project"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown field")
    if len(kinds) != 1:
        raise ConfigError(path, "needs exactly one of atoms, csv, calls, lognormal, uniform_band")
    kind = kinds[0]
    val = entry[kind]
    where = f"{path}.{kind}"
    try:
        if kind == "atoms":
            arr = np.asarray(val, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ConfigError(where, "must be a list of [value, weight] pairs")
            mu = DiscreteMeasure.from_atoms(arr[:, 0], arr[:, 1])
        elif kind == "csv":
            mu = read_measure_csv(_resolve(where, val, base_dir))
        elif kind == "calls":
            if isinstance(val, str):
                mu = read_call_quotes_csv(_resolve(where, val, base_dir))
            else:
                if not isinstance(val, dict) or set(val) != {"strikes", "prices"}:
                    raise ConfigError(where, "must be a CSV path or {\"strikes\": [...], \"prices\": [...]}")
                mu = from_call_quotes(val["strikes"], val["prices"])
        elif kind == "lognormal":
            p = _params(where, val, {"x0", "sigma", "t", "n"}, set())
            mu = quantize_lognormal(p["x0"], p["sigma"], p["t"], p["n"])
        else:
            p = _params(where, val, {"t"}, {"center", "step"})
            mu = uniform_band(**p)
    except ConfigError:
        raise
    except (HMOTError, ValueError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from exc
    project = entry.get("project", common is not None)
    if not isinstance(project, bool):
        raise ConfigError(f"{path}.project", "must be true or false")
    if project:
        if common is None:
            raise ConfigError(f"{path}.project", "projection needs a common_grid")
        try:
            mu = project_to_grid(mu, common)
        except HMOTError as exc:
            raise ConfigError(f"{path}.project", str(exc)) from exc
    return mu


def _resolve(where, val, base_dir: Path) -> Path:
    if not isinstance(val, str):
        raise ConfigError(where, "must be a file path")
    p = Path(val)
    p = p if p.is_absolute() else base_dir / p
    if not p.exists():
        raise ConfigError(where, f"file not found: {p}")
    return p


def _solver(raw) -> SolverOptions:
    if not isinstance(raw, dict):
        raise ConfigError("solver", "must be an object")
    fields = {"backend": str, "max_iter": int, "feas_tol": float, "max_vars": int, "simplex_max_cols": int}
    kw = {}
    for key, val in raw.items():
        if key not in fields:
            raise ConfigError(f"solver.{key}", "unknown field")
        typ = fields[key]
        if typ is str:
            if val not in ("auto", "simplex", "highs"):
                raise ConfigError(f"solver.{key}", "must be auto, simplex or highs")
        elif isinstance(val, bool) or not isinstance(val, (int, float)) or (typ is int and int(val) != val):
            raise ConfigError(f"solver.{key}", f"must be {'an integer' if typ is int else 'a number'}")
        kw[key] = typ(val)
    env = os.environ.get(ENV_MAX_VARS)
    if env is not None:
        try:
            kw["max_vars"] = int(env)
        except ValueError:
            raise ConfigError(ENV_MAX_VARS, f"must be an integer, got {env!r}") from None
    return SolverOptions(**kw)
