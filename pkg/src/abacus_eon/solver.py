"""Exact solving of :class:`IlpModel` instances.

Backends:

* ``highs``     in-process HiGHS via ``highspy``.
* ``lp-file``   writes LP text, runs an external command (or HiGHS reading the
                file when no command is given) and parses the solution file.
* ``reference`` exhaustive enumeration: routes x modulations x start slots
                for RMLSA models, plain 0/1 enumeration for tiny generic ones.
"""

from __future__ import annotations

import itertools
import logging
import math
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import networkx as nx
import numpy as np

from . import pli as pli_mod
from .ilp import IlpModel, parse_solution, write_lp
from .model import Allocation, RmlsaInstance, encode
from .network import NetworkState
from .traffic import Request

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, TIMEOUT = "optimal", "infeasible", "timeout"
FEAS_TOL = 1e-6
OBJ_RTOL = 1e-9
BACKENDS = ("highs", "lp-file", "reference")


class SolverError(RuntimeError):
    pass


class SolverUnavailableError(SolverError):
    pass


class CandidateExplosionError(ValueError):
    pass


@dataclass
class SolveResult:
    status: str
    objective_value: float = math.nan
    assignment: dict[str, float] = field(default_factory=dict)
    solve_time: float = 0.0
    backend: str = ""


def _finalise(model: IlpModel, result: SolveResult) -> SolveResult:
    """Round integers, then re-check every row independently of the backend."""
    if not result.assignment:
        return result
    values = {}
    for i, name in enumerate(model.var_names):
        v = result.assignment.get(name, 0.0)
        values[name] = float(round(v)) if model.integer[i] else v
    result.assignment = values
    if result.status == OPTIMAL:
        bad = model.violations(values, FEAS_TOL)
        if bad:
            raise SolverError(f"{result.backend} returned an infeasible point: {bad[:5]}")
        recomputed = model.objective_value(values)
        if not math.isclose(recomputed, result.objective_value, rel_tol=1e-6, abs_tol=1e-6):
            raise SolverError(f"objective mismatch {recomputed} vs {result.objective_value}")
        result.objective_value = recomputed
    return result


def solve(model: IlpModel, backend: str = "highs", time_limit: float | None = None, **options) -> SolveResult:
    t0 = time.perf_counter()
    if backend == "highs":
        result = _solve_highs(model, time_limit, options.get("presolve", "off"))
    elif backend == "lp-file":
        result = _solve_lp_file(model, time_limit, options.get("command"), options.get("workdir"), options.get("presolve", "off"))
    elif backend == "reference":
        result = _solve_reference(model, options.get("cap"))
    else:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    result.backend = backend
    result.solve_time = time.perf_counter() - t0
    return _finalise(model, result)


# --------------------------------------------------------------------------
# HiGHS


def _highs():
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise SolverUnavailableError("highspy is not installed") from exc
    return highspy


def _configure(h, time_limit: float | None, presolve: str = "off") -> None:
    # MIP presolve probing dominates run time on these models while the
    # tightened root LP is usually integral already
    h.setOptionValue("output_flag", False)
    h.setOptionValue("presolve", presolve)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1e-9)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))


def _status_from_highs(h, highspy) -> str:
    st = h.getModelStatus()
    MS = highspy.HighsModelStatus
    if st == MS.kOptimal:
        return OPTIMAL
    if st in (MS.kInfeasible, MS.kUnboundedOrInfeasible):
        return INFEASIBLE
    if st in (MS.kTimeLimit, MS.kIterationLimit, MS.kSolutionLimit, MS.kInterrupt):
        return TIMEOUT
    if st == MS.kModelEmpty:
        return OPTIMAL
    raise SolverError(f"HiGHS finished with status {h.modelStatusToString(st)}")


def _solve_highs(model: IlpModel, time_limit: float | None, presolve: str = "off") -> SolveResult:
    highspy = _highs()
    h = highspy.Highs()
    _configure(h, time_limit, presolve)
    n = model.num_vars
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = len(model.constraints)
    cost = np.zeros(n)
    for name, c in model.objective.items():
        cost[model.var_index[name]] = c
    lp.col_cost_ = cost
    lp.col_lower_ = np.asarray(model.lower, dtype=float)
    lp.col_upper_ = np.asarray(model.upper, dtype=float)
    inf = highspy.kHighsInf
    lo, hi, starts, index, value = [], [], [0], [], []
    for con in model.constraints:
        lo.append(-inf if con.sense == "<=" else con.rhs)
        hi.append(inf if con.sense == ">=" else con.rhs)
        for name, c in con.terms.items():
            index.append(model.var_index[name])
            value.append(c)
        starts.append(len(index))
    lp.row_lower_ = np.asarray(lo, dtype=float)
    lp.row_upper_ = np.asarray(hi, dtype=float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.start_ = np.asarray(starts, dtype=np.int32)
    lp.a_matrix_.index_ = np.asarray(index, dtype=np.int32)
    lp.a_matrix_.value_ = np.asarray(value, dtype=float)
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = len(model.constraints)
    lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous for b in model.integer]
    h.passModel(lp)
    h.run()
    status = _status_from_highs(h, highspy)
    return _collect(h, model, status)


def _collect(h, model: IlpModel, status: str) -> SolveResult:
    if status == INFEASIBLE:
        return SolveResult(INFEASIBLE)
    sol = h.getSolution()
    if not sol.value_valid:
        return SolveResult(status)
    values = dict(zip(model.var_names, sol.col_value))
    return SolveResult(status, float(h.getInfo().objective_function_value), values)


# --------------------------------------------------------------------------
# LP file round trip


def _solve_lp_file(model: IlpModel, time_limit, command: str | None, workdir, presolve: str = "off") -> SolveResult:
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "model.sol"
        lp_path.write_text(write_lp(model))
        if command:
            cmd = command.format(lp=shlex.quote(str(lp_path)), sol=shlex.quote(str(sol_path)), time_limit=time_limit or 1e9)
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0:
                raise SolverUnavailableError(f"solver command failed ({proc.returncode}): {proc.stderr.strip()[:200]}")
            text = sol_path.read_text() if sol_path.exists() else ""
            status = _status_from_text(text)
        else:
            highspy = _highs()
            h = highspy.Highs()
            _configure(h, time_limit, presolve)
            if h.readModel(str(lp_path)) != highspy.HighsStatus.kOk:
                raise SolverError("HiGHS could not read the LP file")
            h.run()
            status = _status_from_highs(h, highspy)
            if status == INFEASIBLE:
                return SolveResult(INFEASIBLE)
            h.writeSolution(str(sol_path), 0)
            text = sol_path.read_text()
        if status == INFEASIBLE or not text:
            return SolveResult(INFEASIBLE if status != TIMEOUT else TIMEOUT)
        values = parse_solution(text, model.var_names)
        return SolveResult(status, model.objective_value(values), values)


def _status_from_text(text: str) -> str:
    low = text.lower()
    if not low.strip() or "infeasible" in low:
        return INFEASIBLE
    if "time limit" in low or "timeout" in low:
        return TIMEOUT
    return OPTIMAL


# --------------------------------------------------------------------------
# enumeration


def candidate_score(objective: str, N: int, hops: int, first_slot: int, num_slots: int) -> float:
    """Objective of a (route, block) choice computed from its definition."""
    block = range(first_slot, first_slot + num_slots)
    if objective == "abacus":
        per_link = sum(1.0 + math.log(t) / math.log(N) for t in block)
    elif objective == "jo":
        per_link = float(first_slot + num_slots - 1)
    elif objective == "jo-slot-sum":
        per_link = float(sum(block))
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return hops * per_link


def candidate_routes(state: NetworkState, s: int, d: int, path_set=None) -> list[tuple[int, ...]]:
    if path_set is not None:
        return [tuple(p) for p in path_set]
    g = state.topology.to_networkx()
    return sorted(tuple(p) for p in nx.all_simple_paths(g, s, d))


def qot_admissible(state: NetworkState, alloc: Allocation, params: pli_mod.PliParams) -> bool:
    """New lightpath meets its threshold on every slot and no existing
    connection drops below its own."""
    inv = pli_mod.path_inverse_sinr(state, alloc.path, alloc.slots, params)
    if max(inv.values()) > state.modulations[alloc.modulation].inverse_threshold:
        return False
    for r in state.records.values():
        inc = pli_mod.increment_inverse_sinr(state, r, alloc.path, alloc.slots, params)
        limit = state.modulations[r.modulation].inverse_threshold
        for k, extra in inc.items():
            if extra and 1.0 / r.per_slot_sinr[k] + extra > limit:
                return False
    return True


def brute_force_rmlsa(
    state: NetworkState,
    request: Request,
    objective: str = "abacus",
    pli: pli_mod.PliParams | None = None,
    reach: bool = True,
    path_set=None,
    cap: int | None = 10_000,
) -> Allocation | None:
    """Globally optimal allocation by enumeration, or None when blocked."""
    N = state.N
    routes = candidate_routes(state, request.s, request.d, path_set)
    demand = {lv.m: math.ceil(round(request.rate_gbps / lv.slot_capacity_gbps, 9)) for lv in state.modulations}
    total = len(routes) * sum(max(N - rho + 1, 0) for rho in demand.values())
    if cap is not None and total > cap:
        raise CandidateExplosionError(f"{total} candidates exceed the cap of {cap}")
    occ = state.occupancy
    topo = state.topology
    scored = []
    for route in routes:
        rows = [topo.arc_index[a] for a in zip(route[:-1], route[1:])]
        busy = occ[rows].any(axis=0)
        length = topo.path_length(route)
        hops = len(rows)
        for lv in state.modulations:
            rho = demand[lv.m]
            if pli is None and reach and length > lv.reach_km:
                continue
            for k in range(1, N - rho + 2):
                if busy[k - 1 : k - 1 + rho].any():
                    continue
                score = candidate_score(objective, N, hops, k, rho)
                scored.append((round(score, 9), score, hops, route, lv.m, k, rho))
    scored.sort(key=lambda t: (t[0], t[2], t[3], t[4], t[5]))
    for _, score, _, route, m, k, rho in scored:
        alloc = Allocation(route, m, k, rho, {"objective": score})
        if pli is None or qot_admissible(state, alloc, pli):
            return alloc
    return None


def _solve_reference(model: IlpModel, cap: int | None) -> SolveResult:
    inst = model.instance
    if isinstance(inst, RmlsaInstance):
        alloc = brute_force_rmlsa(
            inst.state,
            inst.request,
            inst.objective,
            inst.pli,
            inst.reach,
            inst.path_set,
            cap=cap if cap is not None else 1_000_000,
        )
        if alloc is None:
            return SolveResult(INFEASIBLE)
        values = encode(model, alloc)
        return SolveResult(OPTIMAL, model.objective_value(values), values)
    return _enumerate_generic(model)


def _enumerate_generic(model: IlpModel, limit: int = 20) -> SolveResult:
    if not all(model.integer):
        raise SolverError("reference backend enumerates pure 0/1 models only")
    free = [i for i in range(model.num_vars) if model.lower[i] != model.upper[i]]
    if len(free) > limit:
        raise CandidateExplosionError(f"{len(free)} free binaries exceed the enumeration limit {limit}")
    base = {n: model.lower[i] for i, n in enumerate(model.var_names)}
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(free)):
        values = dict(base)
        for i, b in zip(free, bits):
            values[model.var_names[i]] = min(max(b, model.lower[i]), model.upper[i])
        if model.violations(values, FEAS_TOL):
            continue
        obj = model.objective_value(values)
        if best is None or obj < best[0] - 1e-12:
            best = (obj, values)
    if best is None:
        return SolveResult(INFEASIBLE)
    return SolveResult(OPTIMAL, best[0], best[1])


def objectives_agree(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=OBJ_RTOL, abs_tol=1e-12)


def objective_of(model: IlpModel, values: Mapping[str, float]) -> float:
    return model.objective_value(values)
