import numpy as np
import pytest

from abacus_eon.network import ModulationTable, NetworkState, Topology, load_topology


@pytest.fixture
def six_node():
    return load_topology("six_node")


@pytest.fixture
def nsfnet():
    return load_topology("nsfnet")


def two_mod_table(reach_a=1000.0, reach_b=2000.0):
    """m=1 (B) and m=2 (A); thresholds from the BER table."""
    return ModulationTable.from_lists(["B", "A"], [12.6, 15.6], [reach_b, reach_a])


def line_topology(n, dist=100.0):
    edges = [(i, i + 1, dist) for i in range(1, n)]
    deg = {i: 2 for i in range(1, n + 1)}
    return Topology(list(range(1, n + 1)), edges, deg)


def random_small_state(rng: np.random.Generator, max_nodes=6, max_n=10):
    """Connected random graph (<= 6 nodes), N <= 10, M <= 2, random occupancy."""
    n = int(rng.integers(2, max_nodes + 1))
    nodes = list(range(1, n + 1))
    edges = {}
    order = rng.permutation(nodes)
    for a, b in zip(order[:-1], order[1:]):  # spanning path keeps it connected
        edges[tuple(sorted((int(a), int(b))))] = float(rng.integers(1, 8) * 50)
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = rng.choice(nodes, size=2, replace=False)
        edges.setdefault(tuple(sorted((int(a), int(b)))), float(rng.integers(1, 8) * 50))
    deg = {v: max(1, sum(v in e for e in edges)) for v in nodes}
    topo = Topology(nodes, [(a, b, d) for (a, b), d in sorted(edges.items())], deg)
    N = int(rng.integers(2, max_n + 1))
    M = int(rng.integers(1, 3))
    if M == 1:
        mods = ModulationTable.from_lists(["B"], [12.6], [float(rng.integers(2, 12) * 100)])
    else:
        mods = two_mod_table(float(rng.integers(1, 6) * 100), float(rng.integers(6, 12) * 100))
    state = NetworkState(topo, N, mods)
    p = rng.uniform(0.0, 0.6)
    mask = rng.random(state.occupancy.shape) < p
    for a, arc in enumerate(topo.arcs):
        slots = [k + 1 for k in np.flatnonzero(mask[a])]
        if slots:
            state.occupy_background(arc, slots)
    return state
