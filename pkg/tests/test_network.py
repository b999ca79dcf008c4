import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abacus_eon.network import (
    ConnectionRecord,
    ModulationLevel,
    ModulationTable,
    NetworkState,
    SlotConflictError,
    Topology,
    UnknownConnectionError,
    commit_connection,
    db_to_linear,
    format_topology,
    linear_to_db,
    load_topology,
    parse_topology,
    release_connection,
    slots_required,
)

from conftest import line_topology


# -- demand conversion

@pytest.mark.parametrize(
    "rate, m, expected",
    [(70, 1, 3), (30, 1, 1), (700, 4, 6), (90, 3, 1), (91, 3, 2), (700, 1, 24), (385, 2, 7)],
)
def test_slots_required_examples(rate, m, expected):
    assert slots_required(rate, m) == expected


def test_slots_required_rejects_bad_input():
    with pytest.raises(ValueError):
        slots_required(0, 1)
    with pytest.raises(ValueError):
        slots_required(-5, 1)
    with pytest.raises(ValueError):
        slots_required(100, 5, num_modulations=4)


def test_slots_required_tolerates_float_noise_on_exact_multiples():
    assert slots_required(0.1 * 900, 3) == 1  # 90.00000000000001


@given(st.floats(min_value=0.01, max_value=5000, allow_nan=False), st.integers(1, 4))
def test_slots_required_is_smallest_sufficient_count(rate, m):
    n = slots_required(rate, m)
    assert n * 30 * m >= rate * (1 - 1e-9)
    assert n == 1 or (n - 1) * 30 * m < rate


# -- topology

def test_bundled_nsfnet_shape(nsfnet):
    assert len(nsfnet.nodes) == 14
    assert len(nsfnet.edges) == 21
    assert nsfnet.num_arcs == 42
    for a in nsfnet.arcs:
        assert nsfnet.distance[a] == nsfnet.distance[(a[1], a[0])]


def test_bundled_six_node_shape(six_node):
    assert six_node.nodes == [1, 2, 3, 4, 5, 6]
    assert len(six_node.edges) == 9


def test_topology_rejects_bad_edges():
    with pytest.raises(ValueError):
        Topology([1, 2], [(1, 3, 10.0)])
    with pytest.raises(ValueError):
        Topology([1, 2], [(1, 2, 0.0)])
    with pytest.raises(ValueError):
        Topology([1, 1], [])
    with pytest.raises(ValueError):
        Topology([1, 2], [(1, 2, 5.0), (2, 1, 5.0)])


def test_topology_text_round_trip(nsfnet, tmp_path):
    text = format_topology(nsfnet)
    again = parse_topology(text)
    assert again.edges == nsfnet.edges
    assert again.node_degree_io == nsfnet.node_degree_io
    p = tmp_path / "t.txt"
    p.write_text(text)
    assert load_topology(p).arcs == nsfnet.arcs


def test_parse_reports_bad_line():
    with pytest.raises(ValueError, match="line 2"):
        parse_topology("1 2 10\n1 x 3\n")


# -- modulation table

def test_default_modulation_table():
    t = ModulationTable.default()
    assert t.M == 4
    assert [lv.sinr_threshold_db for lv in t] == [12.6, 15.6, 19.2, 22.4]
    assert [lv.slot_capacity_gbps for lv in t] == [30, 60, 90, 120]
    assert t[1].inverse_threshold == pytest.approx(1 / db_to_linear(12.6), rel=1e-15)


def test_modulation_table_monotonicity_enforced():
    with pytest.raises(ValueError):
        ModulationTable([ModulationLevel(1, "a", 10, 100), ModulationLevel(2, "b", 9, 50)])
    with pytest.raises(ValueError):
        ModulationTable([ModulationLevel(1, "a", 10, 100), ModulationLevel(2, "b", 12, 150)])
    with pytest.raises(ValueError):
        ModulationTable([])


@given(st.floats(min_value=-80, max_value=80, allow_nan=False))
def test_db_round_trip(db):
    assert linear_to_db(db_to_linear(db)) == pytest.approx(db, rel=1e-12, abs=1e-12)


# -- connection registry

def _record(rid=1, path=(1, 2, 3), m=1, k=2, rate=60.0):
    return ConnectionRecord(rid, path[0], path[-1], tuple(path), m, k, slots_required(rate, m), rate)


def test_commit_sets_exactly_path_times_slots_bits():
    state = NetworkState(line_topology(3), 8)
    rec = _record()
    commit_connection(state, rec)
    assert state.occupancy.sum() == 2 * 2
    for a in rec.arcs:
        row = state.occupancy[state.topology.arc_index[a]]
        assert row.tolist() == [False, True, True, False, False, False, False, False]
    state.check_invariants()


def test_double_commit_conflicts_and_leaves_state():
    state = NetworkState(line_topology(3), 8)
    commit_connection(state, _record())
    before = state.occupancy.copy()
    with pytest.raises(SlotConflictError):
        commit_connection(state, _record())
    with pytest.raises(SlotConflictError):
        commit_connection(state, _record(rid=2, k=3))
    assert np.array_equal(before, state.occupancy)
    assert list(state.records) == [1]


def test_release_restores_and_unknown_id_raises():
    state = NetworkState(line_topology(3), 8)
    before = state.occupancy.copy()
    commit_connection(state, _record())
    release_connection(state, 1)
    assert np.array_equal(before, state.occupancy)
    with pytest.raises(UnknownConnectionError):
        release_connection(state, 1)


def test_commit_validates_record_shape():
    state = NetworkState(line_topology(3), 8)
    with pytest.raises(ValueError):
        commit_connection(state, ConnectionRecord(1, 1, 3, (1, 2, 3), 1, 1, 5, 60.0))  # wrong slot count
    with pytest.raises(ValueError):
        commit_connection(state, _record(k=8))  # runs past N
    with pytest.raises(ValueError):
        commit_connection(state, ConnectionRecord(1, 1, 3, (1, 3), 1, 1, 2, 60.0))  # no such arc
    assert state.occupancy.sum() == 0


def test_directions_carry_independent_spectrum():
    state = NetworkState(line_topology(2), 4)
    commit_connection(state, _record(path=(1, 2), k=1))
    commit_connection(state, _record(rid=2, path=(2, 1), k=1))
    assert state.occupancy.sum() == 4


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 8), st.integers(30, 150)), max_size=25),
       st.data())
def test_registry_accounting_under_random_commits_and_releases(ops, data):
    topo = Topology([1, 2, 3, 4], [(1, 2, 10.0), (2, 3, 10.0), (3, 4, 10.0), (4, 1, 10.0), (1, 3, 10.0)])
    state = NetworkState(topo, 8)
    import networkx as nx

    g = topo.to_networkx()
    for rid, (s, d, k, rate) in enumerate(ops):
        if s == d:
            continue
        path = tuple(nx.shortest_path(g, s, d))
        n = slots_required(rate, 1)
        if k + n - 1 > 8:
            continue
        rec = ConnectionRecord(rid, s, d, path, 1, k, n, float(rate))
        before = state.occupancy.copy()
        try:
            commit_connection(state, rec)
        except SlotConflictError:
            assert np.array_equal(before, state.occupancy)
        if state.records and data.draw(st.booleans()):
            victim = data.draw(st.sampled_from(sorted(state.records)))
            release_connection(state, victim)
        state.check_invariants()
        used = sum(len(r.arcs) * r.num_slots for r in state.records.values())
        assert used == state.occupancy.sum()
        # free + used = N on every link
        assert np.all((~state.occupancy).sum(axis=1) + state.occupancy.sum(axis=1) == 8)
