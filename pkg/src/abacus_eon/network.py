"""Network model: topology, per-arc slot occupancy, modulation table and the
registry of established connections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SLOT_CAPACITY_GBPS = 30.0


class SlotConflictError(ValueError):
    """Raised when a commit touches a slot that is already occupied."""


class UnknownConnectionError(KeyError):
    pass


# --------------------------------------------------------------------------
# topology


@dataclass
class Topology:
    nodes: list[int]
    edges: list[tuple[int, int, float]]
    node_degree_io: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node ids")
        known = set(self.nodes)
        seen = set()
        for i, j, dist in self.edges:
            if i not in known or j not in known:
                raise ValueError(f"edge ({i}, {j}) references an unknown node")
            if i == j:
                raise ValueError(f"self loop at node {i}")
            if not dist > 0:
                raise ValueError(f"edge ({i}, {j}) has non-positive distance {dist}")
            key = frozenset((i, j))
            if key in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add(key)
        degree = {n: 0 for n in self.nodes}
        for i, j, _ in self.edges:
            degree[i] += 1
            degree[j] += 1
        for n in self.nodes:
            self.node_degree_io.setdefault(n, degree[n])
        # both directions of every fiber, in a fixed order
        self.arcs: list[tuple[int, int]] = []
        self.distance: dict[tuple[int, int], float] = {}
        for i, j, dist in self.edges:
            for a in ((i, j), (j, i)):
                self.arcs.append(a)
                self.distance[a] = float(dist)
        self.arc_index = {a: n for n, a in enumerate(self.arcs)}
        self.out_arcs: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        self.in_arcs: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for a in self.arcs:
            self.out_arcs[a[0]].append(a)
            self.in_arcs[a[1]].append(a)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    def path_arcs(self, path: Sequence[int]) -> list[tuple[int, int]]:
        return list(zip(path[:-1], path[1:]))

    def path_length(self, path: Sequence[int]) -> float:
        return sum(self.distance[a] for a in self.path_arcs(path))

    def to_networkx(self):
        import networkx as nx

        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for a in self.arcs:
            g.add_edge(*a, weight=self.distance[a])
        return g


def parse_topology(text: str) -> Topology:
    """Parse the edge-list format.

    Lines are ``i j distance_km`` until a ``degrees`` header, after which
    lines are ``node Q``. An optional ``edges`` header and ``#`` comments are
    accepted. Nodes are the union of edge endpoints and degree entries.
    """
    edges: list[tuple[int, int, float]] = []
    degrees: dict[int, int] = {}
    nodes: list[int] = []
    section = "edges"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("edges", "degrees", "nodes"):
            section = low
            continue
        parts = line.split()
        try:
            if section == "edges":
                i, j, d = int(parts[0]), int(parts[1]), float(parts[2])
                edges.append((i, j, d))
                for n in (i, j):
                    if n not in nodes:
                        nodes.append(n)
            elif section == "degrees":
                degrees[int(parts[0])] = int(parts[1])
            else:
                for p in parts:
                    if int(p) not in nodes:
                        nodes.append(int(p))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}") from exc
    for n in degrees:
        if n not in nodes:
            nodes.append(n)
    return Topology(sorted(nodes), edges, degrees)


def format_topology(topology: Topology) -> str:
    lines = ["edges"]
    lines += [f"{i} {j} {float(d)!r}" for i, j, d in topology.edges]
    lines.append("degrees")
    lines += [f"{n} {topology.node_degree_io[n]}" for n in topology.nodes]
    return "\n".join(lines) + "\n"


BUNDLED_TOPOLOGIES = {"nsfnet": "nsfnet.txt", "six_node": "six_node.txt"}


def load_topology(source: str | Path) -> Topology:
    """Load a topology from a file path or a bundled fixture name."""
    name = str(source)
    if name in BUNDLED_TOPOLOGIES:
        text = resources.files("abacus_eon.data").joinpath(BUNDLED_TOPOLOGIES[name]).read_text()
    else:
        text = Path(source).read_text()
    return parse_topology(text)


# --------------------------------------------------------------------------
# modulation formats


@dataclass(frozen=True)
class ModulationLevel:
    m: int
    name: str
    sinr_threshold_db: float
    reach_km: float

    @property
    def bits_per_symbol_level(self) -> int:
        return self.m

    @property
    def slot_capacity_gbps(self) -> float:
        return SLOT_CAPACITY_GBPS * self.m

    @property
    def sinr_threshold(self) -> float:
        return db_to_linear(self.sinr_threshold_db)

    @property
    def inverse_threshold(self) -> float:
        """SIS_m: the largest tolerated noise-to-signal ratio."""
        return 1.0 / self.sinr_threshold


class ModulationTable:
    def __init__(self, levels: Iterable[ModulationLevel]):
        self.levels = sorted(levels, key=lambda lv: lv.m)
        if not self.levels:
            raise ValueError("at least one modulation format is required")
        if [lv.m for lv in self.levels] != list(range(1, len(self.levels) + 1)):
            raise ValueError("modulation indices must be 1..M")
        for a, b in zip(self.levels, self.levels[1:]):
            if not b.sinr_threshold_db > a.sinr_threshold_db:
                raise ValueError("SINR thresholds must increase with m")
            if not b.reach_km < a.reach_km:
                raise ValueError("reach must decrease with m")

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, m: int) -> ModulationLevel:
        if not 1 <= m <= len(self.levels):
            raise KeyError(m)
        return self.levels[m - 1]

    @property
    def M(self) -> int:
        return len(self.levels)

    @classmethod
    def default(cls) -> "ModulationTable":
        return cls(
            [
                ModulationLevel(1, "BPSK", 12.6, 4000.0),
                ModulationLevel(2, "4-QAM", 15.6, 2000.0),
                ModulationLevel(3, "8-QAM", 19.2, 1000.0),
                ModulationLevel(4, "16-QAM", 22.4, 500.0),
            ]
        )

    @classmethod
    def from_lists(cls, names, sinr_db, reach_km) -> "ModulationTable":
        if not len(names) == len(sinr_db) == len(reach_km):
            raise ValueError("modulation lists differ in length")
        return cls(
            ModulationLevel(m, n, float(s), float(r))
            for m, (n, s, r) in enumerate(zip(names, sinr_db, reach_km), 1)
        )


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def slots_required(rate_gbps: float, m: int, num_modulations: int | None = None) -> int:
    """Number of slots needed to carry ``rate_gbps`` with modulation index ``m``."""
    if not rate_gbps > 0:
        raise ValueError(f"rate must be positive, got {rate_gbps}")
    if m < 1 or (num_modulations is not None and m > num_modulations):
        raise ValueError(f"modulation index {m} out of range")
    # tolerate float noise on exact multiples (e.g. 90.00000000000001)
    q = rate_gbps / (m * SLOT_CAPACITY_GBPS)
    return max(1, math.ceil(round(q, 9)))


# --------------------------------------------------------------------------
# spectrum and connections


class SpectrumState:
    """Per-arc occupancy bitmaps, shape (num_arcs, N). Slot k is column k-1."""

    def __init__(self, num_arcs: int, N: int, occupancy: np.ndarray | None = None):
        if N < 1:
            raise ValueError("N must be positive")
        self.N = N
        if occupancy is None:
            occupancy = np.zeros((num_arcs, N), dtype=bool)
        if occupancy.shape != (num_arcs, N):
            raise ValueError(f"occupancy must have shape {(num_arcs, N)}")
        self.occupancy = occupancy.astype(bool)

    def copy(self) -> "SpectrumState":
        return SpectrumState(self.occupancy.shape[0], self.N, self.occupancy.copy())

    def total_used(self) -> int:
        return int(self.occupancy.sum())


@dataclass
class ConnectionRecord:
    id: int
    source: int
    destination: int
    path: tuple[int, ...]
    modulation: int
    first_slot: int
    num_slots: int
    data_rate_gbps: float
    per_slot_sinr: dict[int, float] = field(default_factory=dict)

    @property
    def slots(self) -> range:
        return range(self.first_slot, self.first_slot + self.num_slots)

    @property
    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.path[:-1], self.path[1:]))


class NetworkState:
    """Topology + spectrum + active connection registry (single writer)."""

    def __init__(self, topology: Topology, N: int, modulations: ModulationTable | None = None):
        self.topology = topology
        self.modulations = modulations or ModulationTable.default()
        self.spectrum = SpectrumState(topology.num_arcs, N)
        self.records: dict[int, ConnectionRecord] = {}
        # background occupancy not owned by any record (scenario set-ups)
        self.background = np.zeros_like(self.spectrum.occupancy)

    @property
    def N(self) -> int:
        return self.spectrum.N

    @property
    def occupancy(self) -> np.ndarray:
        return self.spectrum.occupancy

    def copy(self) -> "NetworkState":
        other = NetworkState(self.topology, self.N, self.modulations)
        other.spectrum = self.spectrum.copy()
        other.background = self.background.copy()
        other.records = {
            rid: ConnectionRecord(**{**r.__dict__, "per_slot_sinr": dict(r.per_slot_sinr)})
            for rid, r in self.records.items()
        }
        return other

    def occupy_background(self, arc: tuple[int, int], slots: Iterable[int]) -> None:
        a = self.topology.arc_index[arc]
        for k in slots:
            if not 1 <= k <= self.N:
                raise ValueError(f"slot {k} outside 1..{self.N}")
            self.background[a, k - 1] = True
            self.spectrum.occupancy[a, k - 1] = True

    def validate_record(self, record: ConnectionRecord) -> None:
        path = record.path
        if len(path) < 2 or path[0] != record.source or path[-1] != record.destination:
            raise ValueError("path must run from source to destination")
        if len(set(path)) != len(path):
            raise ValueError("path is not simple")
        for a in record.arcs:
            if a not in self.topology.arc_index:
                raise ValueError(f"path uses missing arc {a}")
        if not 1 <= record.first_slot or record.first_slot + record.num_slots - 1 > self.N:
            raise ValueError("slot block outside the spectrum")
        need = slots_required(record.data_rate_gbps, record.modulation, self.modulations.M)
        if record.num_slots != need:
            raise ValueError(f"record has {record.num_slots} slots, demand needs {need}")

    def commit(self, record: ConnectionRecord) -> None:
        """Register a connection and mark its slots; all-or-nothing."""
        if record.id in self.records:
            raise SlotConflictError(f"connection {record.id} already committed")
        self.validate_record(record)
        rows = [self.topology.arc_index[a] for a in record.arcs]
        cols = slice(record.first_slot - 1, record.first_slot - 1 + record.num_slots)
        if self.spectrum.occupancy[rows, cols].any():
            raise SlotConflictError(f"connection {record.id} overlaps occupied slots")
        self.spectrum.occupancy[rows, cols] = True
        self.records[record.id] = record

    def release(self, record_id: int) -> ConnectionRecord:
        try:
            record = self.records.pop(record_id)
        except KeyError:
            raise UnknownConnectionError(record_id) from None
        rows = [self.topology.arc_index[a] for a in record.arcs]
        cols = slice(record.first_slot - 1, record.first_slot - 1 + record.num_slots)
        self.spectrum.occupancy[rows, cols] = False
        return record

    def occupancy_excluding(self, record_id: int | None) -> np.ndarray:
        """Occupancy as seen by connection ``record_id`` (its own slots removed)."""
        occ = self.spectrum.occupancy
        if record_id is None or record_id not in self.records:
            return occ
        occ = occ.copy()
        r = self.records[record_id]
        rows = [self.topology.arc_index[a] for a in r.arcs]
        occ[rows, r.first_slot - 1 : r.first_slot - 1 + r.num_slots] = False
        return occ

    def check_invariants(self) -> None:
        """Occupancy bit set iff exactly one owner (record or background)."""
        owners = self.background.astype(int)
        for r in self.records.values():
            rows = [self.topology.arc_index[a] for a in r.arcs]
            owners[rows, r.first_slot - 1 : r.first_slot - 1 + r.num_slots] += 1
        if owners.max(initial=0) > 1:
            raise AssertionError("slot claimed by more than one connection")
        if not np.array_equal(owners == 1, self.spectrum.occupancy):
            raise AssertionError("occupancy does not match the registry")


def commit_connection(state: NetworkState, record: ConnectionRecord) -> NetworkState:
    state.commit(record)
    return state


def release_connection(state: NetworkState, record_id: int) -> NetworkState:
    state.release(record_id)
    return state
