#!/usr/bin/env python3
"""MILP backend helper.

Reads the fixed-format MPS files emitted by the C++ model builder, solves them
with HiGHS, and prints one JSON line per request.

Two backends, picked at startup:
  * scipy's vendored HiGHS bindings (scipy.optimize._highspy). HiGHS reads the
    MPS itself, honours solver options directly, and accepts MIP warm starts.
  * scipy.optimize.milp as a fallback when the bindings are missing. The MPS is
    parsed here; warm starts are ignored (milp has no interface for them).

Modes:
  solve_mps.py solve <file.mps> <time_limit_s> <rel_gap> <seed> [warm.json]
  solve_mps.py server     # handshake line, then
                          # "SOLVE <file> <tl> <gap> <seed> [warm.json]"
                          # per line on stdin; "EXIT" terminates

warm.json holds one JSON array with a value per column, in file column order.
"""

import json
import math
import sys
import time


def _import_highs():
    import numpy as np
    from scipy.optimize._highspy import _core

    return np, _core


def _import_milp():
    import numpy as np
    import scipy
    import scipy.sparse
    from scipy.optimize import Bounds, LinearConstraint, milp

    return np, scipy, Bounds, LinearConstraint, milp


def solve_highs(path, time_limit, rel_gap, seed, warm):
    np, core = _import_highs()

    h = core._Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(time_limit))
    h.setOptionValue("mip_rel_gap", float(rel_gap))
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", int(seed) & 0x7FFFFFFF)
    if h.readModel(path) != core.HighsStatus.kOk:
        raise ValueError(f"HiGHS could not read {path}")

    n = h.getNumCol()
    lp = h.getLp()
    is_mip = any(t == core.HighsVarType.kInteger for t in lp.integrality_)
    if warm is not None:
        if len(warm) != n:
            raise ValueError(f"warm start has {len(warm)} values for {n} columns")
        h.setSolution(n, np.arange(n, dtype=np.int32),
                      np.asarray(warm, dtype=np.float64))
        # A root restart rebuilds the search from scratch and loses the
        # branching guidance of the injected incumbent; skip it on warm solves.
        h.setOptionValue("mip_allow_restart", False)

    t0 = time.perf_counter()
    h.run()
    dt = time.perf_counter() - t0

    status = h.getModelStatus()
    info = h.getInfo()
    out = {
        "ok": True,
        "num_rows": h.getNumRow(),
        "num_cols": n,
        "solve_time": dt,
        "backend": "highspy",
    }
    gap = float(info.mip_gap) if is_mip else 0.0
    has_primal = info.primal_solution_status == core.kSolutionStatusFeasible
    ms = core.HighsModelStatus
    if status == ms.kOptimal:
        if not math.isfinite(gap):
            gap = 0.0
        out["status"] = "optimal" if gap <= 1e-9 else "feasible_gap"
    elif status in (ms.kTimeLimit, ms.kIterationLimit, ms.kSolutionLimit,
                    ms.kInterrupt):
        out["status"] = "feasible_gap" if has_primal else "timeout_no_solution"
    elif status == ms.kInfeasible:
        out["status"] = "infeasible"
    elif status in (ms.kUnbounded, ms.kUnboundedOrInfeasible):
        out["status"] = "unbounded"
    else:
        return {"ok": False, "error": f"backend status {status}"}
    if out["status"] in ("optimal", "feasible_gap"):
        out["values"] = [float(v) for v in h.getSolution().col_value]
        out["objective"] = float(info.objective_function_value)
        out["gap"] = gap if math.isfinite(gap) else 1e30
    return out


class MpsModel:
    def __init__(self):
        self.obj_name = None
        self.row_names = []        # constraint rows, in file order
        self.row_sense = {}        # name -> 'L'|'G'|'E'
        self.col_index = {}        # name -> column id (first-appearance order)
        self.col_integer = []
        self.obj_coeff = []
        self.entries = []          # (row_name, col_id, value)
        self.rhs = {}              # row_name -> value
        self.obj_constant = 0.0
        self.lb = []
        self.ub = []


def parse_mps(path):
    m = MpsModel()
    section = None
    in_int = False
    inf = float("inf")

    def ensure_col(name):
        if name not in m.col_index:
            m.col_index[name] = len(m.col_index)
            m.col_integer.append(in_int)
            m.obj_coeff.append(0.0)
            m.lb.append(0.0)
            m.ub.append(inf)
        return m.col_index[name]

    with open(path) as f:
        for raw in f:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line[0].isspace():  # section headers start at column 0
                section = line.split()[0]
                if section == "ENDATA":
                    break
                continue
            tok = line.split()
            if section == "ROWS":
                sense, name = tok[0], tok[1]
                if sense == "N":
                    if m.obj_name is None:
                        m.obj_name = name
                else:
                    m.row_names.append(name)
                    m.row_sense[name] = sense
            elif section == "COLUMNS":
                if "'MARKER'" in tok:
                    in_int = "'INTORG'" in tok
                    continue
                col = ensure_col(tok[0])
                for rname, val in zip(tok[1::2], tok[2::2]):
                    v = float(val)
                    if rname == m.obj_name:
                        m.obj_coeff[col] += v
                    else:
                        m.entries.append((rname, col, v))
            elif section == "RHS":
                for rname, val in zip(tok[1::2], tok[2::2]):
                    v = float(val)
                    if rname == m.obj_name:
                        m.obj_constant = -v
                    else:
                        m.rhs[rname] = v
            elif section == "BOUNDS":
                btype = tok[0]
                col = ensure_col(tok[2])
                if btype == "FR":
                    m.lb[col], m.ub[col] = -inf, inf
                elif btype == "MI":
                    m.lb[col] = -inf
                elif btype == "LO":
                    m.lb[col] = float(tok[3])
                elif btype == "UP":
                    m.ub[col] = float(tok[3])
                elif btype == "FX":
                    m.lb[col] = m.ub[col] = float(tok[3])
                elif btype == "BV":
                    m.lb[col], m.ub[col] = 0.0, 1.0
                else:
                    raise ValueError(f"unsupported bound type {btype}")
            elif section == "RANGES":
                raise ValueError("RANGES section not supported")
    return m


def solve_milp(path, time_limit, rel_gap, seed):
    np, scipy, Bounds, LinearConstraint, milp = _import_milp()
    del seed  # single-threaded backend is deterministic; kept for protocol stability
    m = parse_mps(path)

    n = len(m.col_index)
    c = np.asarray(m.obj_coeff)
    integrality = np.asarray([1 if b else 0 for b in m.col_integer])
    bounds = Bounds(np.asarray(m.lb), np.asarray(m.ub))

    constraints = ()
    if m.row_names:
        row_id = {name: i for i, name in enumerate(m.row_names)}
        rows = [row_id[r] for r, _, _ in m.entries]
        cols = [cid for _, cid, _ in m.entries]
        vals = [v for _, _, v in m.entries]
        a = scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(len(m.row_names), n))
        lo = np.empty(len(m.row_names))
        hi = np.empty(len(m.row_names))
        for i, name in enumerate(m.row_names):
            b = m.rhs.get(name, 0.0)
            s = m.row_sense[name]
            lo[i] = -np.inf if s == "L" else b
            hi[i] = np.inf if s == "G" else b
        constraints = LinearConstraint(a, lo, hi)

    t0 = time.perf_counter()
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=bounds,
        options={"time_limit": time_limit, "mip_rel_gap": rel_gap, "presolve": True},
    )
    dt = time.perf_counter() - t0

    out = {
        "ok": True,
        "num_rows": len(m.row_names),
        "num_cols": n,
        "solve_time": dt,
        "backend": f"scipy-{scipy.__version__}-milp",
    }
    gap = getattr(res, "mip_gap", None)
    has_x = res.x is not None
    if res.status == 0:
        out["status"] = "optimal" if gap is None or gap <= 1e-9 else "feasible_gap"
    elif res.status == 1:
        out["status"] = "feasible_gap" if has_x else "timeout_no_solution"
    elif res.status == 2:
        out["status"] = "infeasible"
    elif res.status == 3:
        out["status"] = "unbounded"
    else:
        return {"ok": False, "error": f"backend status {res.status}: {res.message}"}
    if has_x and out["status"] in ("optimal", "feasible_gap"):
        out["values"] = [float(v) for v in res.x]
        out["objective"] = float(c @ res.x) + m.obj_constant
        out["gap"] = float(gap) if gap is not None else 0.0
    return out


def pick_backend():
    try:
        _import_highs()
        return "highspy"
    except Exception:  # noqa: BLE001 - any import trouble means fall back
        _import_milp()
        return "scipy-milp"


def handle(backend, path, time_limit, rel_gap, seed, warm_path=None):
    try:
        warm = None
        if warm_path is not None:
            with open(warm_path) as f:
                warm = json.load(f)
        if backend == "highspy":
            return solve_highs(path, time_limit, rel_gap, seed, warm)
        return solve_milp(path, time_limit, rel_gap, seed)
    except Exception as exc:  # noqa: BLE001 - reply instead of dying
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main(argv):
    if len(argv) >= 2 and argv[1] == "solve":
        backend = pick_backend()
        path, tl, gap, seed = argv[2], float(argv[3]), float(argv[4]), int(argv[5])
        warm = argv[6] if len(argv) > 6 else None
        reply(handle(backend, path, tl, gap, seed, warm))
        return 0
    if len(argv) >= 2 and argv[1] == "server":
        try:
            backend = pick_backend()
            reply({"ready": True, "backend": backend})
        except Exception as exc:  # noqa: BLE001
            reply({"ready": False, "error": f"{type(exc).__name__}: {exc}"})
            return 1
        for line in sys.stdin:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "EXIT":
                break
            if tok[0] == "SOLVE" and len(tok) in (5, 6):
                warm = tok[5] if len(tok) == 6 else None
                reply(handle(backend, tok[1], float(tok[2]), float(tok[3]),
                             int(tok[4]), warm))
            else:
                reply({"ok": False, "error": f"bad request: {line.strip()}"})
        return 0
    sys.stderr.write(__doc__)
    return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv))
