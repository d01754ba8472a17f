"""MPS and CPLEX-LP text writers, plus an LP-text reader for round trips."""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..exceptions import InputError
from .model import EQ, GE, LE, LPModel

FORMATS = ("mps", "lp")
_LP_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")
_LP_WRAP = 200


def fmt_num(v: float) -> str:
    """Shortest round-trip decimal (at most 17 significant digits); integers lose the ``.0``."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    if s == "-0":
        s = "0"
    return s


def mangle_names(model: LPModel):
    """Deterministic 8-character MPS names: ``C0000001``... for columns, ``R0000001``... for rows."""
    if max(model.n_cols, model.n_rows) >= 10**7:
        raise InputError("model too large for 8-character MPS names")
    cols = [f"C{j + 1:07d}" for j in range(model.n_cols)]
    rows = [f"R{i + 1:07d}" for i in range(model.n_rows)]
    return rows, cols


def mangling_table(model: LPModel) -> str:
    rows, cols = mangle_names(model)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "mps_name", "name"])
    w.writerow(["objective", "OBJ", "obj"])
    for short, name in zip(rows, model.row_names):
        w.writerow(["row", short, name])
    for short, name in zip(cols, model.col_names):
        w.writerow(["column", short, name])
    return buf.getvalue()


def _field_line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # fixed-format columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61; over-long
    # numbers widen their field but stay blank-separated
    line = " " + f1.ljust(2) + " " + f2.ljust(8)
    if f3 or f4:
        line += "  " + f3.ljust(8) + "  " + f4.rjust(12)
    if f5 or f6:
        line += "   " + f5.ljust(8) + "  " + f6.rjust(12)
    return line.rstrip()


def to_mps(model: LPModel) -> str:
    rows, cols = mangle_names(model)
    out = [f"NAME          {model.name}"]
    if model.sense == "max":
        out += ["OBJSENSE", "    MAX"]
    out.append("ROWS")
    out.append(" N  OBJ")
    for rel, name in zip(model.relations, rows):
        out.append(f" {rel}  {name}")
    out.append("COLUMNS")
    A = model.A.tocsc()
    for j in range(model.n_cols):
        if model.c[j] != 0:
            out.append(_field_line("", cols[j], "OBJ", fmt_num(model.c[j])))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        for i, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            out.append(_field_line("", cols[j], rows[i], fmt_num(v)))
    out.append("RHS")
    for i in np.flatnonzero(model.rhs):
        out.append(_field_line("", "RHS", rows[i], fmt_num(model.rhs[i])))
    bound_lines = []
    for j in range(model.n_cols):
        lo, hi = model.lb[j], model.ub[j]
        if lo == 0 and hi == np.inf:
            continue
        if lo == -np.inf and hi == np.inf:
            bound_lines.append(_field_line("FR", "BND", cols[j]))
        elif lo == hi:
            bound_lines.append(_field_line("FX", "BND", cols[j], fmt_num(lo)))
        else:
            if lo == -np.inf:
                bound_lines.append(_field_line("MI", "BND", cols[j]))
            elif lo != 0:
                bound_lines.append(_field_line("LO", "BND", cols[j], fmt_num(lo)))
            if hi != np.inf:
                bound_lines.append(_field_line("UP", "BND", cols[j], fmt_num(hi)))
    if bound_lines:
        out.append("BOUNDS")
        out += bound_lines
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _check_lp_name(name):
    if not _LP_NAME.match(name) or re.match(r"^[eE][0-9.]", name):
        raise InputError(f"name {name!r} is not a valid LP-format identifier")


def _terms(coefs, names, force=False):
    parts = []
    for v, name in zip(coefs, names):
        if v == 0 and not force:
            continue
        sign = "-" if v < 0 or (v == 0 and np.signbit(v)) else "+"
        parts.append(f"{sign} {fmt_num(abs(v))} {name}")
    return parts


def _wrap(head, parts, tail=""):
    lines, cur = [], head
    for p in parts + ([tail] if tail else []):
        if len(cur) + 1 + len(p) > _LP_WRAP and cur.strip():
            lines.append(cur)
            cur = "  " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def to_lp_text(model: LPModel) -> str:
    for name in model.col_names + model.row_names:
        _check_lp_name(name)
    out = [f"\\ {model.name}", "Maximize" if model.sense == "max" else "Minimize"]
    # every column appears in the objective so the column order survives a round trip
    out += _wrap(" obj:", _terms(model.c, model.col_names, force=True))
    out.append("Subject To")
    A = model.A.tocsr()
    ops = {EQ: "=", LE: "<=", GE: ">="}
    for i in range(model.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        names = [model.col_names[j] for j in A.indices[lo:hi]]
        parts = _terms(A.data[lo:hi], names) or ["0 " + model.col_names[0]]
        out += _wrap(f" {model.row_names[i]}:", parts, f"{ops[model.relations[i]]} {fmt_num(model.rhs[i])}")
    bounds = []
    for j, name in enumerate(model.col_names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == 0 and hi == np.inf:
            continue
        if lo == -np.inf and hi == np.inf:
            bounds.append(f" {name} free")
        elif lo == hi:
            bounds.append(f" {name} = {fmt_num(lo)}")
        elif hi == np.inf:
            bounds.append(f" {name} >= {fmt_num(lo)}")
        else:
            lo_s = "-inf" if lo == -np.inf else fmt_num(lo)
            bounds.append(f" {lo_s} <= {name} <= {fmt_num(hi)}")
    if bounds:
        out.append("Bounds")
        out += bounds
    out.append("End")
    return "\n".join(out) + "\n"


def export(model: LPModel, fmt: str) -> str:
    """Serialize ``model`` as ``"mps"`` or ``"lp"`` text."""
    if fmt == "mps":
        return to_mps(model)
    if fmt == "lp":
        return to_lp_text(model)
    raise InputError(f"unknown export format {fmt!r}; choose from {FORMATS}")


def write_model(model: LPModel, path, fmt: str) -> list[Path]:
    """Write the model and, for MPS, the name-mangling table ``<path>.names.csv``."""
    path = Path(path)
    path.write_text(export(model, fmt))
    written = [path]
    if fmt == "mps":
        table = path.with_name(path.name + ".names.csv")
        table.write_text(mangling_table(model))
        written.append(table)
    return written


_TOKEN = re.compile(
    r"\s*(<=|>=|=<|=>|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[<>=:+-]|[^\s<>=:+-]+)"
)
_SECTIONS = {
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "con", "such that": "con", "st": "con", "s.t.": "con",
    "bounds": "bnd", "end": "end",
}


_NUMBER = re.compile(r"^(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def _num(tok):
    return float(tok) if _NUMBER.match(tok) else None


def read_lp_text(text: str) -> LPModel:
    """Parse the LP-text subset written by :func:`to_lp_text`."""
    name = "model"
    sense = "min"
    section = None
    chunks = {"obj": [], "con": [], "bnd": []}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if name == "model":
                name = line[1:].strip() or name
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "obj":
                sense = "max" if key.startswith("max") else "min"
            if section == "end":
                break
            continue
        if section is None:
            raise InputError(f"LP text: content before a section header: {line!r}")
        chunks[section].append(line)

    col_index: dict[str, int] = {}
    col_names: list[str] = []

    def col(n):
        if n not in col_index:
            col_index[n] = len(col_names)
            col_names.append(n)
        return col_index[n]

    def linear(tokens, k, stop):
        coefs = {}
        sign, coef = 1.0, None
        while k < len(tokens) and tokens[k] not in stop:
            t = tokens[k]
            if t in "+-":
                sign = -1.0 if t == "-" else 1.0
            elif _num(t) is not None:
                coef = _num(t)
            else:
                j = col(t)
                coefs[j] = coefs.get(j, 0.0) + sign * (1.0 if coef is None else coef)
                sign, coef = 1.0, None
            k += 1
        return coefs, k

    obj_tokens = _TOKEN.findall(" ".join(chunks["obj"]))
    if len(obj_tokens) >= 2 and obj_tokens[1] == ":":
        obj_tokens = obj_tokens[2:]
    obj, _ = linear(obj_tokens, 0, ())

    rel_of = {"=": EQ, "<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE}
    tokens = _TOKEN.findall(" ".join(chunks["con"]))
    rows, row_names, rels, rhs = [], [], [], []
    k = 0
    while k < len(tokens):
        if k + 1 < len(tokens) and tokens[k + 1] == ":":
            row_names.append(tokens[k])
            k += 2
        else:
            row_names.append(f"r{len(row_names)}")
        coefs, k = linear(tokens, k, rel_of)
        if k >= len(tokens):
            raise InputError("LP text: constraint without relation")
        rels.append(rel_of[tokens[k]])
        k += 1
        sgn = 1.0
        if tokens[k] in "+-":
            sgn = -1.0 if tokens[k] == "-" else 1.0
            k += 1
        rhs.append(sgn * float(tokens[k]))
        k += 1
        rows.append(coefs)

    lb = {}
    ub = {}
    def val(tok):
        low = tok.lower()
        if low in ("inf", "+inf", "infinity"):
            return np.inf
        if low in ("-inf", "-infinity"):
            return -np.inf
        return float(tok)

    for line in chunks["bnd"]:
        raw = _TOKEN.findall(line)
        t = []
        for tok in raw:
            # glue signs onto the number or infinity that follows
            if t and t[-1] in "+-" and (len(t) == 1 or t[-2] in ("<=", ">=", "=")) and tok not in "+-":
                t[-1] = t[-1] + tok
            else:
                t.append(tok)
        if len(t) == 2 and t[1].lower() == "free":
            j = col(t[0])
            lb[j], ub[j] = -np.inf, np.inf
        elif len(t) == 3 and t[1] in ("=", ">=", "<="):
            j = col(t[0])
            v = val(t[2])
            if t[1] == "=":
                lb[j] = ub[j] = v
            elif t[1] == ">=":
                lb[j] = v
            else:
                ub[j] = v
        elif len(t) == 5 and t[1] == "<=" and t[3] == "<=":
            j = col(t[2])
            lb[j], ub[j] = val(t[0]), val(t[4])
        else:
            raise InputError(f"LP text: unsupported bound line {line!r}")

    n = len(col_names)
    data, ri, ci = [], [], []
    for i, coefs in enumerate(rows):
        for j, v in coefs.items():
            ri.append(i); ci.append(j); data.append(v)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v
    lbv = np.zeros(n)
    ubv = np.full(n, np.inf)
    for j, v in lb.items():
        lbv[j] = v
    for j, v in ub.items():
        ubv[j] = v
    return LPModel(A, np.array(rels, dtype="<U1"), np.array(rhs), c, lbv, ubv, sense,
                   tuple(row_names), tuple(col_names), name)
