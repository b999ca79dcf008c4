"""k-shortest-path baselines: candidate path sets and model restriction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import networkx as nx

from .ilp import EQ, GE, LE, IlpModel
from .network import Topology
from .variables import x_link, y_path

SCHEMES = {
    # name: (objective, k or None for joint routing)
    "abacus": ("abacus", None),
    "jo": ("jo", None),
    "ksp2": ("jo", 2),
    "ksp3": ("jo", 3),
}


@dataclass
class PathSet:
    s: int
    d: int
    k: int
    paths: list[tuple[int, ...]]
    distances: list[float]

    @property
    def complete(self) -> bool:
        """False when fewer than k simple paths exist."""
        return len(self.paths) == self.k

    def __len__(self) -> int:
        return len(self.paths)


def _key(dist: float) -> float:
    return round(dist, 9)


def k_shortest_paths(topology: Topology, s: int, d: int, k: int) -> PathSet:
    """The k shortest loopless paths by distance; ties ordered by node sequence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if s == d:
        raise ValueError("source and destination must differ")
    g = topology.to_networkx()
    found: list[tuple[float, tuple[int, ...]]] = []
    try:
        for path in nx.shortest_simple_paths(g, s, d, weight="weight"):
            dist = topology.path_length(path)
            # keep pulling while the k-th distance could still be tied
            if len(found) >= k and _key(dist) > _key(found[k - 1][0]):
                break
            found.append((dist, tuple(path)))
    except nx.NetworkXNoPath:
        pass
    found.sort(key=lambda t: (_key(t[0]), t[1]))
    found = found[:k]
    return PathSet(s, d, k, [p for _, p in found], [dist for dist, _ in found])


def all_simple_paths_ranked(topology: Topology, s: int, d: int) -> list[tuple[float, tuple[int, ...]]]:
    g = topology.to_networkx()
    out = [(topology.path_length(p), tuple(p)) for p in nx.all_simple_paths(g, s, d)]
    out.sort(key=lambda t: (_key(t[0]), t[1]))
    return out


def restrict_model_to_paths(model: IlpModel, path_set: PathSet | Sequence[Sequence[int]]) -> IlpModel:
    """Only arcs of exactly one candidate path may carry the route."""
    paths = [tuple(p) for p in (path_set.paths if isinstance(path_set, PathSet) else path_set)]
    if not paths:
        raise ValueError("empty path set")
    arcs_of = [set(zip(p[:-1], p[1:])) for p in paths]
    union = set().union(*arcs_of)
    # arcs are read off the declared x_link names
    arcs = [tuple(map(int, n.split("_")[1:])) for n in model.var_names if n.count("_") == 2 and n.startswith("x_")]
    for a in arcs:
        if a not in union:
            model.fix(x_link(*a), 0.0)
    ys = [model.add_binary(y_path(p)) for p in range(len(paths))]
    model.add_constraint({y: 1.0 for y in ys}, EQ, 1.0, "path_choice")
    for p, arc_set in enumerate(arcs_of):
        for a in sorted(arc_set):
            model.add_constraint({x_link(*a): 1.0, ys[p]: -1.0}, GE, 0.0, "path_link")
    for a in sorted(union):
        terms = {x_link(*a): 1.0}
        for p, arc_set in enumerate(arcs_of):
            if a in arc_set:
                terms[ys[p]] = -1.0
        model.add_constraint(terms, LE, 0.0, "path_link")
    inst = getattr(model, "instance", None)
    if inst is not None and hasattr(inst, "path_set"):
        inst.path_set = paths
    return model


def format_path_set(ps: PathSet) -> str:
    lines = [f"# {ps.s} -> {ps.d}, k={ps.k}, found={len(ps)}"]
    for rank, (p, dist) in enumerate(zip(ps.paths, ps.distances), 1):
        lines.append(f"{rank} {dist:g} {'-'.join(map(str, p))}")
    return "\n".join(lines) + "\n"


def dump_path_sets(topology: Topology, k: int) -> str:
    return "".join(
        format_path_set(k_shortest_paths(topology, s, d, k))
        for s, d in itertools.permutations(topology.nodes, 2)
    )
