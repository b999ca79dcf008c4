"""Request generation for dynamic and static-batch experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Topology

RATE_MIN_GBPS = 70.0
RATE_MAX_GBPS = 700.0
MEAN_RATE_GBPS = 0.5 * (RATE_MIN_GBPS + RATE_MAX_GBPS)


@dataclass(frozen=True)
class Request:
    id: int
    s: int
    d: int
    rate_gbps: float
    arrival_time: float = 0.0
    holding_time: float = math.inf

    def __post_init__(self):
        if self.s == self.d:
            raise ValueError("source and destination must differ")
        if not self.rate_gbps > 0:
            raise ValueError("rate must be positive")

    @property
    def departure_time(self) -> float:
        return self.arrival_time + self.holding_time


@dataclass
class TrafficTrace:
    seed: int | None
    requests: list[Request] = field(default_factory=list)
    offered_load_gbps: float = 0.0
    mode: str = "dynamic"

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self):
        return iter(self.requests)


def generate_trace(
    topology: Topology,
    seed: int,
    target_load_gbps: float,
    count: int,
    mode: str = "dynamic",
    mean_holding: float = 1.0,
) -> TrafficTrace:
    """Draw ``count`` requests with uniform s-d pairs and uniform 70-700 Gbps rates.

    ``dynamic``: Poisson arrivals, exponential holding times; the arrival rate
    is chosen so that rate x holding x mean demand equals ``target_load_gbps``.
    ``static-batch``: no departures; requests are kept until their cumulative
    rate would exceed ``target_load_gbps`` (or ``count`` is reached).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not target_load_gbps > 0:
        raise ValueError("target load must be positive")
    if len(topology.nodes) < 2:
        raise ValueError("topology needs at least two nodes")
    if mode not in ("dynamic", "static-batch"):
        raise ValueError(f"unknown traffic mode {mode!r}")

    rng = np.random.default_rng(seed)
    nodes = np.asarray(topology.nodes)
    n = len(nodes)
    src = rng.integers(0, n, size=count)
    # uniform over ordered distinct pairs: shift the destination past the source
    dst = rng.integers(0, n - 1, size=count)
    dst = dst + (dst >= src)
    rates = rng.uniform(RATE_MIN_GBPS, RATE_MAX_GBPS, size=count)

    requests: list[Request] = []
    if mode == "dynamic":
        arrival_rate = target_load_gbps / (mean_holding * MEAN_RATE_GBPS)
        gaps = rng.exponential(1.0 / arrival_rate, size=count)
        holds = rng.exponential(mean_holding, size=count)
        t = np.cumsum(gaps)
        for i in range(count):
            requests.append(
                Request(i, int(nodes[src[i]]), int(nodes[dst[i]]), float(rates[i]), float(t[i]), float(holds[i]))
            )
        offered = target_load_gbps
    else:
        total = 0.0
        for i in range(count):
            if total + rates[i] > target_load_gbps:
                break
            total += float(rates[i])
            requests.append(Request(i, int(nodes[src[i]]), int(nodes[dst[i]]), float(rates[i]), float(i), math.inf))
        offered = total
    return TrafficTrace(seed, requests, offered, mode)


def format_trace(trace: TrafficTrace) -> str:
    lines = [
        f"# seed {trace.seed}",
        f"# mode {trace.mode}",
        f"# offered_load_gbps {trace.offered_load_gbps!r}",
        "# id t_arrive t_hold s d rate_gbps",
    ]
    for r in trace.requests:
        lines.append(f"{r.id} {r.arrival_time!r} {r.holding_time!r} {r.s} {r.d} {r.rate_gbps!r}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> TrafficTrace:
    seed = None
    mode = "dynamic"
    offered = 0.0
    requests = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "seed":
                seed = None if parts[1] == "None" else int(parts[1])
            elif len(parts) == 2 and parts[0] == "mode":
                mode = parts[1]
            elif len(parts) == 2 and parts[0] == "offered_load_gbps":
                offered = float(parts[1])
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        rid, ta, th, s, d, rate = parts
        requests.append(Request(int(rid), int(s), int(d), float(rate), float(ta), float(th)))
    times = [r.arrival_time for r in requests]
    if times != sorted(times):
        raise ValueError("trace is not time ordered")
    if not offered:
        offered = sum(r.rate_gbps for r in requests)
    return TrafficTrace(seed, requests, offered, mode)


def save_trace(trace: TrafficTrace, path: str | Path) -> None:
    Path(path).write_text(format_trace(trace))


def load_trace(path: str | Path) -> TrafficTrace:
    return parse_trace(Path(path).read_text())
