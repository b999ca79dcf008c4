"""Joint routing, modulation and spectrum assignment ILP for one request."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import pli as pli_mod
from .baselines import restrict_model_to_paths
from .ilp import EQ, GE, LE, IlpModel, LinExpr
from .network import NetworkState, SpectrumState, slots_required
from .traffic import Request
from .variables import noise, x_link, x_slot, z_start

OBJECTIVES = ("abacus", "jo", "jo-slot-sum")


class InfeasibleDemandError(ValueError):
    """No modulation format fits the demand into N slots."""


@dataclass
class RmlsaInstance:
    """What the model was built from; lets structured backends and decoders
    work on the same problem."""

    state: NetworkState
    request: Request
    demand: dict[int, int]
    objective: str = "abacus"
    reach: bool = True
    pli: pli_mod.PliParams | None = None
    path_set: list[tuple[int, ...]] | None = None
    nsis: float | None = None
    noise_scale: float = 1.0

    @property
    def N(self) -> int:
        return self.state.N

    @property
    def M(self) -> int:
        return self.state.modulations.M


@dataclass
class Allocation:
    path: tuple[int, ...]
    modulation: int
    first_slot: int
    num_slots: int
    extra: dict = field(default_factory=dict)

    @property
    def slots(self) -> range:
        return range(self.first_slot, self.first_slot + self.num_slots)

    @property
    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.path[:-1], self.path[1:]))


def demand_slots(state: NetworkState, rate_gbps: float) -> dict[int, int]:
    return {lv.m: slots_required(rate_gbps, lv.m, state.modulations.M) for lv in state.modulations}


def new_model(state: NetworkState, request: Request) -> IlpModel:
    """Declare x_link, x_slot and z_start for every arc, slot and modulation."""
    model = IlpModel(name=f"rmlsa_{request.id}_{request.s}_{request.d}")
    N, M = state.N, state.modulations.M
    for i, j in state.topology.arcs:
        model.add_binary(x_link(i, j))
    for i, j in state.topology.arcs:
        for k in range(1, N + 1):
            for m in range(1, M + 1):
                model.add_binary(x_slot(i, j, k, m))
                model.add_binary(z_start(i, j, k, m))
    model.instance = RmlsaInstance(state, request, demand_slots(state, request.rate_gbps))
    return model


def _inst(model: IlpModel) -> RmlsaInstance:
    if not isinstance(model.instance, RmlsaInstance):
        raise TypeError("model was not created by new_model()")
    return model.instance


# --------------------------------------------------------------------------
# objectives


def build_objective_abacus(model: IlpModel, N: int, M: int) -> IlpModel:
    """Weight slot k by 1 + log_N(k): slot count first, low indices second."""
    if N < 2:
        raise ValueError("the log-index weighting needs N >= 2")
    inst = _inst(model)
    weights = [1.0 + math.log(k) / math.log(N) for k in range(1, N + 1)]
    model.set_objective(
        {x_slot(i, j, k, m): weights[k - 1] for i, j in inst.state.topology.arcs for k in range(1, N + 1) for m in range(1, M + 1)}
    )
    inst.objective = "abacus"
    return model


def abacus_coefficient(k: int, N: int) -> float:
    if N < 2:
        raise ValueError("the log-index weighting needs N >= 2")
    return 1.0 + math.log(k) / math.log(N)


def build_objective_jo(model: IlpModel, variant: str = "jo") -> IlpModel:
    """Linear slot-index objective used by the comparison schemes.

    ``jo``: per route link, the index of the highest slot of the block
    (one per used slot plus k-1 on the start slot).
    ``jo-slot-sum``: per route link, the sum of all used slot indices.
    """
    inst = _inst(model)
    N, M = inst.N, inst.M
    terms: dict[str, float] = {}
    for i, j in inst.state.topology.arcs:
        for k in range(1, N + 1):
            for m in range(1, M + 1):
                if variant == "jo":
                    terms[x_slot(i, j, k, m)] = 1.0
                    terms[z_start(i, j, k, m)] = float(k - 1)
                elif variant == "jo-slot-sum":
                    terms[x_slot(i, j, k, m)] = float(k)
                else:
                    raise ValueError(f"unknown linear objective {variant!r}")
    model.set_objective(terms)
    inst.objective = variant
    return model


# --------------------------------------------------------------------------
# constraints


def add_linkage_constraints(model: IlpModel) -> IlpModel:
    """z <= x_slot <= x_link for every arc, slot and modulation."""
    inst = _inst(model)
    for i, j in inst.state.topology.arcs:
        xl = x_link(i, j)
        for k in range(1, inst.N + 1):
            for m in range(1, inst.M + 1):
                xs, zs = x_slot(i, j, k, m), z_start(i, j, k, m)
                model.add_constraint({zs: 1.0, xs: -1.0}, LE, 0.0, "linkage")
                model.add_constraint({xs: 1.0, xl: -1.0}, LE, 0.0, "linkage")
    return model


def add_path_constraints(model: IlpModel, s: int, d: int) -> IlpModel:
    """Unit flow from s to d on x_link with at most one arc in/out per node."""
    if s == d:
        raise ValueError("source and destination must differ")
    topo = _inst(model).state.topology
    if s not in topo.out_arcs or d not in topo.out_arcs:
        raise ValueError("unknown source or destination")
    model.add_constraint({x_link(*a): 1.0 for a in topo.out_arcs[s]}, EQ, 1.0, "source_out")
    model.add_constraint({x_link(*a): 1.0 for a in topo.in_arcs[d]}, EQ, 1.0, "dest_in")
    for j in topo.nodes:
        if j in (s, d):
            continue
        terms: dict[str, float] = {}
        for i, _ in topo.in_arcs[j]:
            if i != d:
                terms[x_link(i, j)] = 1.0
        for _, q in topo.out_arcs[j]:
            if q != s:
                terms[x_link(j, q)] = terms.get(x_link(j, q), 0.0) - 1.0
        if terms:
            model.add_constraint(terms, EQ, 0.0, "flow")
    for i in topo.nodes:
        if i != d and topo.out_arcs[i]:
            model.add_constraint({x_link(*a): 1.0 for a in topo.out_arcs[i]}, LE, 1.0, "out_degree")
    for j in topo.nodes:
        if j != s and topo.in_arcs[j]:
            model.add_constraint({x_link(*a): 1.0 for a in topo.in_arcs[j]}, LE, 1.0, "in_degree")
    for i, j, _ in topo.edges:
        model.add_constraint({x_link(i, j): 1.0, x_link(j, i): 1.0}, LE, 1.0, "antiparallel")
    return model


def add_spectrum_constraints(model: IlpModel, demand: Mapping[int, int] | None = None) -> IlpModel:
    """Single start slot at the source, contiguous blocks of rho_m slots,
    start slot carried unchanged along the route."""
    inst = _inst(model)
    demand = dict(inst.demand if demand is None else demand)
    inst.demand = demand
    topo, N, M = inst.state.topology, inst.N, inst.M
    s, d = inst.request.s, inst.request.d
    if all(rho > N for rho in demand.values()):
        raise InfeasibleDemandError(f"demand {demand} exceeds N={N} for every modulation")
    last_start = {m: N - demand[m] + 1 for m in range(1, M + 1)}
    # start-slot domain pruning: blocks must end inside the spectrum
    for i, j in topo.arcs:
        for m in range(1, M + 1):
            for k in range(max(last_start[m], 0) + 1, N + 1):
                model.fix(z_start(i, j, k, m), 0.0)

    model.add_constraint(
        {z_start(s, j, k, m): 1.0 for _, j in topo.out_arcs[s] for m in range(1, M + 1) for k in range(1, last_start[m] + 1)},
        EQ,
        1.0,
        "single_start",
    )
    for i, j in topo.arcs:
        for m in range(1, M + 1):
            rho = demand[m]
            for k in range(1, last_start[m] + 1):
                terms = {x_slot(i, j, t, m): 1.0 for t in range(k, k + rho)}
                terms[z_start(i, j, k, m)] = -float(rho)
                model.add_constraint(terms, GE, 0.0, "contiguity")
            model.add_constraint(
                {x_slot(i, j, k, m): 1.0 for k in range(1, N + 1)}, LE, float(rho), "slot_cap"
            )
    for j in topo.nodes:
        if j in (s, d):
            continue
        for m in range(1, M + 1):
            for k in range(1, last_start[m] + 1):
                terms: dict[str, float] = {}
                for i, _ in topo.in_arcs[j]:
                    if i != d:
                        terms[z_start(i, j, k, m)] = 1.0
                for _, q in topo.out_arcs[j]:
                    if q != s:
                        terms[z_start(j, q, k, m)] = terms.get(z_start(j, q, k, m), 0.0) - 1.0
                if terms:
                    model.add_constraint(terms, EQ, 0.0, "start_continuity")
    return model


def add_nonoverlap_capacity(model: IlpModel, spectrum: SpectrumState) -> IlpModel:
    """Occupied slots stay unusable; per-link slot budget of N."""
    inst = _inst(model)
    topo, N, M = inst.state.topology, inst.N, inst.M
    if spectrum.N != N:
        raise ValueError("spectrum dimension does not match the model")
    occ = spectrum.occupancy
    for a, (i, j) in enumerate(topo.arcs):
        for k in range(1, N + 1):
            busy = bool(occ[a, k - 1])
            model.add_constraint(
                {x_slot(i, j, k, m): 1.0 for m in range(1, M + 1)}, LE, 1.0 - busy, "non_overlap"
            )
            if busy:
                for m in range(1, M + 1):
                    model.fix(x_slot(i, j, k, m), 0.0)
                    model.fix(z_start(i, j, k, m), 0.0)
        model.add_constraint(
            {x_slot(i, j, k, m): 1.0 for k in range(1, N + 1) for m in range(1, M + 1)}, LE, float(N), "link_capacity"
        )
    return model


def add_reach_constraint(
    model: IlpModel, distances: Mapping[tuple[int, int], float], reach_km: Mapping[int, float]
) -> IlpModel:
    """Route length of the chosen modulation within its optical reach.

    Distance is summed over arcs carrying a start variable; the start slot is
    replicated on every route arc, so this is the route length.
    """
    inst = _inst(model)
    inst.reach = True
    for m in range(1, inst.M + 1):
        limit = reach_km[m]
        if not math.isfinite(limit):
            continue
        terms = {}
        for (i, j), dist in distances.items():
            for k in range(1, inst.N + 1):
                name = z_start(i, j, k, m)
                if model.bounds(name)[1] > 0:
                    terms[name] = float(dist)
        if terms:
            model.add_constraint(terms, LE, float(limit), "reach")
    return model


def add_tightening_rows(model: IlpModel) -> IlpModel:
    """Rows satisfied by every optimal allocation that shrink the LP relaxation.

    The base rows admit zero-cost detached arcs (cycles, chains from the
    destination back to the source) and fractional mixes of modulations. On
    an optimal solution each route arc carries exactly one block start and
    exactly the block's slots, and the chosen modulation's reach bounds the
    route, so requiring that removes only detached arcs and never changes the
    optimum value.
    """
    inst = _inst(model)
    topo, N, M = inst.state.topology, inst.N, inst.M
    s = inst.request.s
    demand = inst.demand
    for i, j in topo.arcs:
        starts = {z_start(i, j, k, m): 1.0 for k in range(1, N + 1) for m in range(1, M + 1)
                  if model.bounds(z_start(i, j, k, m))[1] > 0}
        terms = dict(starts)
        terms[x_link(i, j)] = -1.0
        model.add_constraint(terms, EQ, 0.0, "tight_one_block")
        for m in range(1, M + 1):
            rho = demand[m]
            terms = {x_slot(i, j, k, m): 1.0 for k in range(1, N + 1)}
            for k in range(1, N + 1):
                if model.bounds(z_start(i, j, k, m))[1] > 0:
                    terms[z_start(i, j, k, m)] = -float(rho)
            model.add_constraint(terms, EQ, 0.0, "tight_block_size")
            for t in range(1, N + 1):
                xs = x_slot(i, j, t, m)
                if model.bounds(xs)[1] == 0:
                    continue
                cover = {
                    z_start(i, j, k, m): -1.0
                    for k in range(max(1, t - rho + 1), t + 1)
                    if model.bounds(z_start(i, j, k, m))[1] > 0
                }
                cover[xs] = 1.0
                model.add_constraint(cover, LE, 0.0, "tight_cover")
    if inst.reach and inst.pli is None:
        for lv in inst.state.modulations:
            if not math.isfinite(lv.reach_km):
                continue
            m = lv.m
            terms: dict[str, float] = {}
            for (i, j), dist in topo.distance.items():
                for k in range(1, N + 1):
                    name = z_start(i, j, k, m)
                    if model.bounds(name)[1] > 0:
                        terms[name] = terms.get(name, 0.0) + float(dist)
            for _, j in topo.out_arcs[s]:
                for k in range(1, N + 1):
                    name = z_start(s, j, k, m)
                    if model.bounds(name)[1] > 0:
                        terms[name] = terms.get(name, 0.0) - lv.reach_km
            if terms:
                model.add_constraint(terms, LE, 0.0, "tight_reach")
    return model


def big_m(sis: Sequence[float], spread: float) -> float:
    """NSIS: twice the largest SIS, widened if slot-dependent noise could
    exceed it (keeps the row slack for unused slots)."""
    return max(2.0 * max(sis), max(sis) + spread)


def add_pli_constraints(
    model: IlpModel,
    coeffs: pli_mod.PliCoefficients,
    records=None,
    inline_noise: bool = False,
) -> IlpModel:
    """QoT rows for the new connection and for every existing connection.

    Unless ``inline_noise`` is set, the per-slot inverse SINR is carried by a
    continuous variable q_k defined by an equality row, so each per-(arc,
    slot, modulation) row holds two terms instead of the full expression.
    """
    inst = _inst(model)
    state = inst.state
    topo, N, M = state.topology, inst.N, inst.M
    params = coeffs.params
    inst.pli = params
    inst.reach = False
    sis = [lv.inverse_threshold for lv in state.modulations]
    scale = 1.0 / min(sis)
    inst.noise_scale = scale
    exprs = pli_mod.noise_expressions(coeffs, topo, M)
    ase_terms = pli_mod.compute_ase_expr(params, topo).scaled(1.0 / params.p_ch).terms
    spread = 0.0
    for e in exprs:
        slot_dep = sum(max(c - ase_terms.get(n, 0.0), 0.0) for n, c in e.terms.items())
        spread = max(spread, slot_dep)
    nsis = big_m(sis, spread)
    inst.nsis = nsis

    for k in range(1, N + 1):
        e = exprs[k - 1].scaled(scale)
        if inline_noise:
            row_base = e
        else:
            q = model.add_continuous(noise(k))
            defn = LinExpr({q: 1.0}) + e.scaled(-1.0)
            model.add_constraint(defn, EQ, 0.0, "noise_def")
            row_base = LinExpr({q: 1.0})
        for i, j in topo.arcs:
            for m in range(1, M + 1):
                xs = x_slot(i, j, k, m)
                if model.bounds(xs)[1] == 0:
                    continue
                row = row_base + LinExpr({xs: scale * nsis})
                model.add_constraint(row, LE, scale * (nsis + sis[m - 1]), "qot_new")

    for r in (state.records.values() if records is None else records):
        inc = pli_mod.increment_expressions(topo, r, coeffs, M)
        limit = state.modulations[r.modulation].inverse_threshold
        for k in r.slots:
            base = 1.0 / r.per_slot_sinr[k] if k in r.per_slot_sinr else 0.0
            e = inc[k].scaled(scale)
            if not e.terms:
                continue
            model.add_constraint(e, LE, scale * (limit - base), "qot_existing")
    return model


# --------------------------------------------------------------------------
# composition and decoding


def build_model(
    state: NetworkState,
    request: Request,
    objective: str = "abacus",
    pli: pli_mod.PliParams | None = None,
    reach: bool = True,
    path_set: Sequence[Sequence[int]] | None = None,
    inline_noise: bool = False,
    coeffs: pli_mod.PliCoefficients | None = None,
    tighten: bool = True,
) -> IlpModel:
    """Full model for one request.

    With ``pli`` the QoT rows replace the reach rows; otherwise the reach
    rows are added when ``reach`` is true. ``tighten=False`` emits the base
    formulation only.
    """
    model = new_model(state, request)
    inst = _inst(model)
    if objective == "abacus":
        build_objective_abacus(model, state.N, state.modulations.M)
    elif objective in ("jo", "jo-slot-sum"):
        build_objective_jo(model, objective)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    add_linkage_constraints(model)
    add_path_constraints(model, request.s, request.d)
    add_nonoverlap_capacity(model, state.spectrum)
    add_spectrum_constraints(model, inst.demand)
    if pli is not None:
        if coeffs is None:
            coeffs = pli_mod.compute_coefficients(state, pli)
        add_pli_constraints(model, coeffs, inline_noise=inline_noise)
    else:
        inst.reach = reach
        if reach:
            add_reach_constraint(model, state.topology.distance, {lv.m: lv.reach_km for lv in state.modulations})
    if tighten:
        add_tightening_rows(model)
    if path_set is not None:
        restrict_model_to_paths(model, path_set)
        inst.path_set = [tuple(p) for p in path_set]
    return model


def decode(model: IlpModel, assignment: Mapping[str, float]) -> Allocation:
    """Route by walking x_link from the source; block from the source start slot."""
    inst = _inst(model)
    topo = inst.state.topology
    s, d = inst.request.s, inst.request.d

    def on(name: str) -> bool:
        return assignment.get(name, 0.0) > 0.5

    path = [s]
    while path[-1] != d:
        nxt = [j for _, j in topo.out_arcs[path[-1]] if on(x_link(path[-1], j))]
        if len(nxt) != 1 or nxt[0] in path:
            raise ValueError(f"assignment does not decode to a simple route (at {path})")
        path.append(nxt[0])
    first_hop = (path[0], path[1])
    starts = [
        (k, m)
        for k in range(1, inst.N + 1)
        for m in range(1, inst.M + 1)
        if on(z_start(*first_hop, k, m))
    ]
    if len(starts) != 1:
        raise ValueError(f"expected one start slot on the first hop, found {starts}")
    k, m = starts[0]
    return Allocation(tuple(path), m, k, inst.demand[m])


def encode(model: IlpModel, alloc: Allocation) -> dict[str, float]:
    """0/1 assignment of the model variables realising ``alloc``."""
    inst = _inst(model)
    values = {name: 0.0 for name in model.var_names}
    for i, j in alloc.arcs:
        values[x_link(i, j)] = 1.0
        values[z_start(i, j, alloc.first_slot, alloc.modulation)] = 1.0
        for t in alloc.slots:
            values[x_slot(i, j, t, alloc.modulation)] = 1.0
    if inst.path_set is not None:
        for p, path in enumerate(inst.path_set):
            values[f"y_{p}"] = 1.0 if tuple(path) == tuple(alloc.path) else 0.0
    if inst.pli is not None:
        for con in model.constraints:
            if con.family == "noise_def":
                (q,) = [n for n in con.terms if n.startswith("q_")]
                rest = sum(c * values[n] for n, c in con.terms.items() if n != q)
                values[q] = -rest / con.terms[q]
    return values
