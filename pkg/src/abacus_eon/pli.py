"""Physical-layer impairments: in-band crosstalk, GN-model nonlinear
interference and LO-ASE beat noise.

Two routes are provided. The *coefficient* route precomputes tables from the
current spectrum state and assembles linear expressions in the RMLSA decision
variables; the *scalar* route evaluates a decoded path directly. All noise
quantities handed to the model are normalised by the coherent signal power,
i.e. they are inverse SINR values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ilp import LinExpr
from .network import ConnectionRecord, NetworkState, Topology, db_to_linear, linear_to_db
from .variables import x_link, x_slot

log = logging.getLogger(__name__)


@dataclass
class PliParams:
    """Physical-layer parameters; dB/dBm where the parameter table uses them."""

    p_lo_dbm: float = 0.0
    p_r_dbm: float = -12.0
    responsivity: float = 0.7  # A/W
    f_c_hz: float = 193.1e12
    n_sp: float = 2.0
    alpha_db_per_km: float = 0.2
    l_wss_db: float = 2.0
    l_tap_db: float = 1.0
    span_km: float = 80.0
    g_in_db: float = 18.0
    g_out_db: float = 8.0
    g_out_node_db: dict[int, float] = field(default_factory=lambda: {7: 5.0, 10: 5.0})
    c_x_db: float = -40.0
    gamma: float = 1.33  # 1/(W km)
    beta2_ps2_per_km: float = -21.7
    b_e_hz: float = 7e9
    planck: float = 6.62e-34
    slot_width_hz: float = 37.5e9

    # -- linear quantities
    @property
    def p_lo(self) -> float:
        return dbm_to_watt(self.p_lo_dbm)

    @property
    def p_r(self) -> float:
        return dbm_to_watt(self.p_r_dbm)

    @property
    def alpha(self) -> float:
        """Power attenuation in 1/km."""
        return self.alpha_db_per_km * math.log(10.0) / 10.0

    @property
    def beta2_abs(self) -> float:
        """|beta2| in s^2/km."""
        return abs(self.beta2_ps2_per_km) * 1e-24

    @property
    def g_in(self) -> float:
        return db_to_linear(self.g_in_db)

    def g_out(self, node: int) -> float:
        return db_to_linear(self.g_out_node_db.get(node, self.g_out_db))

    @property
    def c_x(self) -> float:
        return db_to_linear(self.c_x_db)

    @property
    def p_x(self) -> float:
        return self.p_r * self.c_x

    @property
    def lo_gain(self) -> float:
        """R_a^2 / 2 * P_lo, the factor turning optical power into current variance."""
        return self.responsivity**2 / 2.0 * self.p_lo

    @property
    def p_ch(self) -> float:
        return self.lo_gain * self.p_r

    @property
    def zeta(self) -> float:
        return self.lo_gain * 2.0 * self.n_sp * self.planck * self.f_c_hz * self.b_e_hz

    @property
    def omega(self) -> float:
        return 3.0 * self.gamma**2 / (2.0 * math.pi * self.alpha * self.beta2_abs)

    @property
    def psd(self) -> float:
        """Per-slot power spectral density G(f), uniform over slots."""
        return self.p_r / self.slot_width_hz

    def check_g_out(self, topology: Topology) -> list[int]:
        """Nodes whose output gain is below the switch-loss bound (warned, not fatal)."""
        low = []
        for n in topology.nodes:
            q = max(topology.node_degree_io[n], 1)
            bound = 3 * math.ceil(math.log2(q)) + self.l_wss_db if q > 1 else self.l_wss_db
            g = self.g_out_node_db.get(n, self.g_out_db)
            if g < bound:
                low.append(n)
        if low:
            log.warning("output EDFA gain below switch-through loss at nodes %s", low)
        return low

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "PliParams":
        """Build from string key/values (config file); unknown keys raise."""
        known = {f.name for f in fields(cls)}
        kwargs: dict = {}
        for key, raw in values.items():
            if key == "enabled":
                continue
            if key not in known:
                raise ValueError(f"unknown PLI parameter {key!r}")
            if key == "g_out_node_db":
                kwargs[key] = {
                    int(a): float(b) for a, b in (item.split(":") for item in str(raw).split(",") if item.strip())
                }
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w * 1000.0)


def spans(distance_km: float, span_km: float) -> int:
    return math.ceil(distance_km / span_km - 1e-12)


# --------------------------------------------------------------------------
# elementary GN-model terms


def compute_nli_sci(params: PliParams) -> float:
    """Self-channel interference power per span (W)."""
    if params.gamma == 0:
        return 0.0
    df = params.slot_width_hz
    g = params.psd
    arg = math.pi**2 * params.beta2_abs * df**2 / params.alpha
    return params.omega * df * g**3 * math.log(abs(arg))


def xci_log_factor(delta_k: int) -> float:
    """ln|mu| with slot separation in slot-width units; zero at delta 0."""
    dk = abs(delta_k)
    return math.log(abs((dk + 0.5) / (dk - 0.5)))


def compute_nli_xci_kernel(params: PliParams, N: int) -> np.ndarray:
    """Cross-channel interference per span caused by one slot ``dk`` away (W)."""
    df = params.slot_width_hz
    g = params.psd
    dk = np.arange(N, dtype=float)
    kernel = params.omega * df * g * g**2 * np.log(np.abs((dk + 0.5) / (dk - 0.5)))
    kernel[0] = 0.0
    return kernel


def _kernel_matrix(kernel: np.ndarray) -> np.ndarray:
    N = len(kernel)
    idx = np.arange(N)
    return kernel[np.abs(idx[:, None] - idx[None, :])]


# --------------------------------------------------------------------------
# coefficient tables


@dataclass
class PliCoefficients:
    params: PliParams
    pxt_node: np.ndarray  # (arcs, N) crosstalk power at the head node of each arc
    nli_sci: float
    nli_xci_oc: np.ndarray  # (arcs, N) XCI from other connections, per span
    nli_xci_pc_kernel: np.ndarray  # (N,) by slot separation, per span
    spans: np.ndarray  # (arcs,)
    ase_per_edfa: float  # zeta

    @property
    def N(self) -> int:
        return self.pxt_node.shape[1]


def compute_crosstalk_node(state: NetworkState, params: PliParams, occupancy: np.ndarray | None = None) -> np.ndarray:
    """Pxt for every arc (i, j) and slot: interferers entering node i from j' != j."""
    topo = state.topology
    occ = state.occupancy if occupancy is None else occupancy
    pxt = np.zeros(occ.shape, dtype=float)
    for a, (i, j) in enumerate(topo.arcs):
        for arc_in in topo.in_arcs[i]:
            if arc_in[0] != j:
                pxt[a] += params.p_x * occ[topo.arc_index[arc_in]]
    return pxt


def compute_coefficients(state: NetworkState, params: PliParams) -> PliCoefficients:
    """All state-dependent tables; rebuild after every admission or release."""
    occ = state.occupancy.astype(float)
    kernel = compute_nli_xci_kernel(params, state.N)
    xci_oc = occ @ _kernel_matrix(kernel)  # symmetric kernel, sums over k'
    sp = np.array([spans(state.topology.distance[a], params.span_km) for a in state.topology.arcs], dtype=float)
    return PliCoefficients(
        params=params,
        pxt_node=compute_crosstalk_node(state, params),
        nli_sci=compute_nli_sci(params),
        nli_xci_oc=xci_oc,
        nli_xci_pc_kernel=kernel,
        spans=sp,
        ase_per_edfa=params.zeta,
    )


# --------------------------------------------------------------------------
# linear expressions in the decision variables (powers in W, variance in A^2)


def compute_path_crosstalk_expr(coeffs: PliCoefficients, topology: Topology) -> list[LinExpr]:
    """Per-slot accumulated crosstalk power along the (unknown) route."""
    exprs = []
    for k in range(1, coeffs.N + 1):
        e = LinExpr()
        for a, (i, j) in enumerate(topology.arcs):
            e.add_term(x_link(i, j), coeffs.pxt_node[a, k - 1])
        exprs.append(e)
    return exprs


def compute_crosstalk_increment(
    topology: Topology, record: ConnectionRecord, params: PliParams, M: int
) -> dict[int, LinExpr]:
    """Extra crosstalk power the new connection adds to ``record``'s slots."""
    out = {}
    for k in record.slots:
        e = LinExpr()
        for i, j in record.arcs:
            for jp, _ in topology.in_arcs[i]:
                if jp == j:
                    continue
                for m in range(1, M + 1):
                    e.add_term(x_slot(jp, i, k, m), params.p_x)
        out[k] = e
    return out


def assemble_nli_total_expr(coeffs: PliCoefficients, topology: Topology, M: int) -> list[LinExpr]:
    """Per-slot accumulated NLI power: SCI + XCI (others) + XCI (own slots).

    Cross-channel terms sum occupancy at every other slot k' weighted by the
    kernel at |k - k'|; the occupancy factor is indexed by k', not by k.
    """
    N = coeffs.N
    kernel = coeffs.nli_xci_pc_kernel
    exprs = []
    for k in range(1, N + 1):
        e = LinExpr()
        for a, (i, j) in enumerate(topology.arcs):
            s = coeffs.spans[a]
            e.add_term(x_link(i, j), s * (coeffs.nli_sci + coeffs.nli_xci_oc[a, k - 1]))
            for kp in range(1, N + 1):
                w = s * kernel[abs(k - kp)]
                if w:
                    for m in range(1, M + 1):
                        e.add_term(x_slot(i, j, kp, m), w)
        exprs.append(e)
    return exprs


def compute_nli_increment(
    topology: Topology, record: ConnectionRecord, coeffs: PliCoefficients, M: int
) -> dict[int, LinExpr]:
    """Extra NLI power on ``record``'s slots from new slots on its links."""
    kernel = coeffs.nli_xci_pc_kernel
    out = {}
    for k in record.slots:
        e = LinExpr()
        for i, j in record.arcs:
            s = coeffs.spans[topology.arc_index[(i, j)]]
            for kp in range(1, coeffs.N + 1):
                w = s * kernel[abs(k - kp)]
                if w:
                    for m in range(1, M + 1):
                        e.add_term(x_slot(i, j, kp, m), w)
        out[k] = e
    return out


def compute_ase_expr(params: PliParams, topology: Topology) -> LinExpr:
    """LO-ASE beat-noise variance; amplifier count and node gains are linear in x_link."""
    zeta = params.zeta
    e = LinExpr()
    for i, j in topology.arcs:
        coef = zeta * (params.g_in - 1.0) * topology.distance[(i, j)] / params.span_km
        coef += zeta * (params.g_out(i) - 1.0)
        e.add_term(x_link(i, j), coef)
    return e


def noise_expressions(coeffs: PliCoefficients, topology: Topology, M: int) -> list[LinExpr]:
    """Per-slot inverse SINR of the new connection as linear expressions."""
    p = coeffs.params
    ase = compute_ase_expr(p, topology)
    xt = compute_path_crosstalk_expr(coeffs, topology)
    nli = assemble_nli_total_expr(coeffs, topology, M)
    out = []
    for k in range(coeffs.N):
        e = ase.scaled(1.0 / p.p_ch)
        e += (xt[k] + nli[k]).scaled(p.lo_gain / p.p_ch)
        out.append(e)
    return out


def increment_expressions(
    topology: Topology, record: ConnectionRecord, coeffs: PliCoefficients, M: int
) -> dict[int, LinExpr]:
    """Per-slot inverse-SINR increase of an existing connection."""
    p = coeffs.params
    xt = compute_crosstalk_increment(topology, record, p, M)
    nli = compute_nli_increment(topology, record, coeffs, M)
    return {k: (xt[k] + nli[k]).scaled(p.lo_gain / p.p_ch) for k in record.slots}


# --------------------------------------------------------------------------
# scalar route: direct evaluation on a decoded path


def _direct_kernel(params: PliParams, dk: int) -> float:
    g = params.psd
    return params.omega * params.slot_width_hz * g * g * g * xci_log_factor(dk) if dk else 0.0


def path_noise_terms(
    state: NetworkState,
    path: Sequence[int],
    slots: Iterable[int],
    params: PliParams,
    occupancy: np.ndarray | None = None,
) -> dict[int, dict[str, float]]:
    """ASE variance, crosstalk power and NLI power per slot of a lightpath.

    ``occupancy`` is the spectrum seen by the lightpath (its own slots must
    not be included).
    """
    topo = state.topology
    occ = state.occupancy if occupancy is None else occupancy
    slots = list(slots)
    arcs = list(zip(path[:-1], path[1:]))
    amplifiers = sum(topo.distance[a] for a in arcs) / params.span_km
    ase = params.zeta * (amplifiers * (params.g_in - 1.0) + sum(params.g_out(i) - 1.0 for i in path[:-1]))
    sci = compute_nli_sci(params)
    out = {}
    for k in slots:
        xt = 0.0
        nli = 0.0
        for i, j in arcs:
            for jp in topo.nodes:
                if jp in (i, j) or (jp, i) not in topo.arc_index:
                    continue
                if occ[topo.arc_index[(jp, i)], k - 1]:
                    xt += params.p_x
            n_spans = spans(topo.distance[(i, j)], params.span_km)
            row = occ[topo.arc_index[(i, j)]]
            link = sci
            for kp in range(1, state.N + 1):
                if row[kp - 1]:
                    link += _direct_kernel(params, k - kp)
            for kp in slots:
                link += _direct_kernel(params, k - kp)
            nli += n_spans * link
        out[k] = {"ase": ase, "xt": xt, "nli": nli}
    return out


def path_inverse_sinr(
    state: NetworkState,
    path: Sequence[int],
    slots: Iterable[int],
    params: PliParams,
    occupancy: np.ndarray | None = None,
) -> dict[int, float]:
    terms = path_noise_terms(state, path, slots, params, occupancy)
    return {
        k: (t["ase"] + params.lo_gain * (t["xt"] + t["nli"])) / params.p_ch for k, t in terms.items()
    }


def increment_inverse_sinr(
    state: NetworkState,
    record: ConnectionRecord,
    path: Sequence[int],
    slots: Iterable[int],
    params: PliParams,
) -> dict[int, float]:
    """Inverse-SINR increase on ``record`` if a lightpath (path, slots) is added."""
    topo = state.topology
    new_slots = set(slots)
    new_arcs = set(zip(path[:-1], path[1:]))
    out = {}
    for k in record.slots:
        xt = 0.0
        nli = 0.0
        for i, j in record.arcs:
            if k in new_slots:
                for jp in topo.nodes:
                    if jp not in (i, j) and (jp, i) in new_arcs:
                        xt += params.p_x
            if (i, j) in new_arcs:
                n_spans = spans(topo.distance[(i, j)], params.span_km)
                nli += n_spans * sum(_direct_kernel(params, k - kp) for kp in new_slots)
        out[k] = params.lo_gain * (xt + nli) / params.p_ch
    return out


@dataclass
class QotReport:
    record_id: int
    passed: bool
    worst_margin_db: float
    sinr: dict[int, float]


# relative slack for float round-off between incremental and full recomputation
QOT_RTOL = 1e-9


def record_sinr(state: NetworkState, record: ConnectionRecord, params: PliParams) -> dict[int, float]:
    occ = state.occupancy_excluding(record.id) if record.id in state.records else state.occupancy
    inv = path_inverse_sinr(state, record.path, record.slots, params, occ)
    return {k: 1.0 / v if v > 0 else math.inf for k, v in inv.items()}


def verify_qot(state: NetworkState, params: PliParams, records: Iterable[ConnectionRecord] | None = None) -> list[QotReport]:
    """Recompute every slot's SINR from scratch and compare against thresholds."""
    reports = []
    for r in state.records.values() if records is None else records:
        sinr = record_sinr(state, r, params)
        th = state.modulations[r.modulation].sinr_threshold
        worst = min(sinr.values())
        margin = linear_to_db(worst / th) if math.isfinite(worst) else math.inf
        reports.append(QotReport(r.id, worst >= th * (1.0 - QOT_RTOL), margin, sinr))
    return reports


def refresh_snapshots(state: NetworkState, params: PliParams) -> None:
    """Replace every stored per-slot SINR by a full recomputation."""
    for r in state.records.values():
        r.per_slot_sinr = record_sinr(state, r, params)


def apply_increment(state: NetworkState, path: Sequence[int], slots: Iterable[int], params: PliParams) -> None:
    """Update existing snapshots for a lightpath that is about to be committed."""
    slots = list(slots)
    for r in state.records.values():
        inc = increment_inverse_sinr(state, r, path, slots, params)
        for k, d in inc.items():
            if d:
                old = r.per_slot_sinr.get(k, math.inf)
                r.per_slot_sinr[k] = 1.0 / (1.0 / old + d)
