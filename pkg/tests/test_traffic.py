import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abacus_eon.network import Topology
from abacus_eon.traffic import (
    Request,
    TrafficTrace,
    format_trace,
    generate_trace,
    load_trace,
    parse_trace,
    save_trace,
)


def test_same_seed_gives_identical_trace(nsfnet):
    a = generate_trace(nsfnet, 7, 6000, 200)
    b = generate_trace(nsfnet, 7, 6000, 200)
    assert a.requests == b.requests
    assert generate_trace(nsfnet, 8, 6000, 200).requests != a.requests


def test_mean_rate_near_uniform_mean(nsfnet):
    tr = generate_trace(nsfnet, 3, 6000, 10_000)
    rates = np.array([r.rate_gbps for r in tr])
    assert 365 <= rates.mean() <= 405
    assert rates.min() >= 70 and rates.max() <= 700


def test_pairs_uniform_over_ordered_distinct_pairs(nsfnet):
    tr = generate_trace(nsfnet, 11, 6000, 10_000)
    counts = {}
    for r in tr:
        assert r.s != r.d
        counts[(r.s, r.d)] = counts.get((r.s, r.d), 0) + 1
    assert len(counts) == 14 * 13
    n, p = 10_000, 1 / 182
    sigma = math.sqrt(n * p * (1 - p))
    for c in counts.values():
        assert abs(c - n * p) <= 3 * sigma


def test_dynamic_arrivals_ordered_and_load_matches(nsfnet):
    tr = generate_trace(nsfnet, 5, 3000, 4000, mode="dynamic", mean_holding=2.0)
    t = [r.arrival_time for r in tr]
    assert t == sorted(t)
    rate = len(t) / t[-1]
    # offered load = arrival rate x mean holding x mean demand
    assert rate * 2.0 * 385 == pytest.approx(3000, rel=0.06)


def test_static_batch_stops_at_target(nsfnet):
    tr = generate_trace(nsfnet, 5, 5000, 1000, mode="static-batch")
    total = sum(r.rate_gbps for r in tr)
    assert total <= 5000
    assert tr.offered_load_gbps == pytest.approx(total)
    assert all(math.isinf(r.holding_time) for r in tr)
    assert total + 700 > 5000


def test_generator_rejects_bad_arguments(nsfnet):
    with pytest.raises(ValueError):
        generate_trace(nsfnet, 1, 100, 0)
    with pytest.raises(ValueError):
        generate_trace(nsfnet, 1, 0, 10)
    with pytest.raises(ValueError):
        generate_trace(Topology([1], []), 1, 100, 10)
    with pytest.raises(ValueError):
        generate_trace(nsfnet, 1, 100, 10, mode="bursty")


def test_request_rejects_self_pair():
    with pytest.raises(ValueError):
        Request(0, 3, 3, 100.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.sampled_from(["dynamic", "static-batch"]))
def test_trace_text_round_trip(seed, count, mode):
    from abacus_eon.network import load_topology

    tr = generate_trace(load_topology("six_node"), seed, 20_000, count, mode)
    again = parse_trace(format_trace(tr))
    assert again.requests == tr.requests
    assert again.seed == tr.seed and again.mode == tr.mode
    assert again.offered_load_gbps == tr.offered_load_gbps


def test_trace_file_io_and_order_check(tmp_path, six_node):
    tr = generate_trace(six_node, 1, 1000, 10)
    p = tmp_path / "tr.txt"
    save_trace(tr, p)
    assert load_trace(p).requests == tr.requests
    with pytest.raises(ValueError):
        parse_trace("0 2.0 1.0 1 2 100\n1 1.0 1.0 2 1 100\n")
    with pytest.raises(ValueError):
        parse_trace("0 2.0 1.0 1 2\n")
