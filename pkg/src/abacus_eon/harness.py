"""Experiment configuration and the sequential admission loop."""

from __future__ import annotations

import configparser
import heapq
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from . import pli as pli_mod
from .baselines import SCHEMES, k_shortest_paths
from .metrics import (
    SEED_MEAN_COLUMNS,
    LedgerRow,
    MetricsLedger,
    average_fragmentation,
    format_summary,
    fsus_in_use,
    summarize,
    summarize_over_seeds,
)
from .model import Allocation, InfeasibleDemandError, build_model, decode
from .network import ConnectionRecord, ModulationTable, NetworkState, load_topology, slots_required
from .solver import OPTIMAL, SolverUnavailableError, solve
from .traffic import RATE_MAX_GBPS, Request, TrafficTrace, generate_trace, load_trace

log = logging.getLogger(__name__)

SECTIONS = ("topology", "traffic", "modulations", "pli", "solver", "mode", "output", "occupancy")

DEFAULTS = {
    "topology": {"name": "nsfnet", "slots": "40"},
    "traffic": {"seed": "1", "load_gbps": "6000", "count": "50", "mode": "static-batch", "mean_holding": "1.0"},
    "solver": {"backend": "highs", "time_limit": "60", "presolve": "off", "tighten": "true"},
    "mode": {"scheme": "abacus", "pli": "false", "audit_qot": "false", "reach": "true", "directed_fragmentation": "true"},
    "output": {"dir": "", "prefix": "", "series": "false", "timing": "true", "lp_dir": ""},
}

EXIT_OK = 0
EXIT_SOLVER_UNAVAILABLE = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def bundled_scenarios() -> list[str]:
    root = resources.files("abacus_eon.data.scenarios")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def read_config(source: str | Path, overrides: Mapping[str, str] | None = None) -> configparser.ConfigParser:
    """Parse an INI file (or a bundled scenario name) and apply ``section.key`` overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case
    for section, values in DEFAULTS.items():
        cp[section] = dict(values)
    path = Path(source)
    if path.exists():
        text = path.read_text()
        base_dir = path.parent
    elif str(source) in bundled_scenarios():
        text = resources.files("abacus_eon.data.scenarios").joinpath(f"{source}.ini").read_text()
        base_dir = None
    else:
        raise ConfigError(f"no config file or bundled scenario named {source!r}")
    cp.read_string(text)
    cp["__meta__"] = {"base_dir": str(base_dir) if base_dir else ""}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = str(value)
    for section in cp.sections():
        if section not in SECTIONS and section != "__meta__":
            raise ConfigError(f"unknown config section [{section}]")
    return cp


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _list(v: str) -> list[str]:
    return [p.strip() for p in v.split(",") if p.strip()]


def parse_slot_ranges(text: str) -> list[int]:
    """'1-3,6' -> [1, 2, 3, 6]."""
    out: list[int] = []
    for part in _list(text):
        a, _, b = part.partition("-")
        lo, hi = int(a), int(b) if b else int(a)
        if hi < lo:
            raise ConfigError(f"bad slot range {part!r}")
        out.extend(range(lo, hi + 1))
    return out


@dataclass
class ExperimentConfig:
    topology: str
    N: int
    modulations: ModulationTable
    schemes: list[str]
    seeds: list[int]
    load_gbps: float
    count: int
    traffic_mode: str
    mean_holding: float
    trace_file: str | None
    inline_requests: list[Request]
    pli_enabled: bool
    pli: pli_mod.PliParams
    audit_qot: bool
    reach: bool
    directed_fragmentation: bool
    objective: str | None
    backend: str
    time_limit: float | None
    solver_options: dict
    tighten: bool
    background: dict[tuple[int, int], list[int]]
    out_dir: Path | None
    prefix: str
    series: bool
    timing: bool
    lp_dir: Path | None
    jobs: int = 1

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        base = cp["__meta__"].get("base_dir", "") if cp.has_section("__meta__") else ""

        def resolve(p: str) -> str:
            return str(Path(base) / p) if base and not Path(p).is_absolute() else p

        topo_sec = cp["topology"]
        topology = resolve(topo_sec["file"]) if topo_sec.get("file") else topo_sec.get("name", "nsfnet")
        N = int(topo_sec.get("slots", "40"))

        mods = ModulationTable.default()
        if cp.has_section("modulations") and cp["modulations"].get("names"):
            ms = cp["modulations"]
            mods = ModulationTable.from_lists(
                _list(ms["names"]), [float(x) for x in _list(ms["sinr_db"])], [float(x) for x in _list(ms["reach_km"])]
            )

        tr = cp["traffic"]
        inline = []
        if tr.get("requests"):
            for rid, item in enumerate(p for p in tr["requests"].split(";") if p.strip()):
                s, d, rate = item.split()
                inline.append(Request(rid, int(s), int(d), float(rate), float(rid), math.inf))

        mode = cp["mode"]
        schemes = _list(mode.get("scheme", "abacus"))
        for sc in schemes:
            if sc not in SCHEMES:
                raise ConfigError(f"unknown scheme {sc!r}; choose from {sorted(SCHEMES)}")
        objective = mode.get("objective") or None

        pli_values = dict(cp["pli"]) if cp.has_section("pli") else {}
        try:
            params = pli_mod.PliParams.from_mapping(pli_values)
        except ValueError as e:
            raise ConfigError(str(e)) from None

        sv = cp["solver"]
        tl = sv.get("time_limit", "")
        options = {"presolve": sv.get("presolve", "off")}
        if sv.get("command"):
            options["command"] = sv["command"]

        background: dict[tuple[int, int], list[int]] = {}
        if cp.has_section("occupancy"):
            for key, value in cp["occupancy"].items():
                directed = ">" in key
                a, b = (int(x) for x in key.replace(">", "-").split("-"))
                slots = parse_slot_ranges(value)
                background.setdefault((a, b), []).extend(slots)
                if not directed:
                    background.setdefault((b, a), []).extend(slots)

        out = cp["output"]
        cfg = cls(
            topology=topology,
            N=N,
            modulations=mods,
            schemes=schemes,
            seeds=[int(x) for x in _list(tr.get("seed", "1"))],
            load_gbps=float(tr.get("load_gbps", "6000")),
            count=int(tr.get("count", "50")),
            traffic_mode=tr.get("mode", "static-batch"),
            mean_holding=float(tr.get("mean_holding", "1.0")),
            trace_file=resolve(tr["trace"]) if tr.get("trace") else None,
            inline_requests=inline,
            pli_enabled=_bool(mode.get("pli", "false")),
            pli=params,
            audit_qot=_bool(mode.get("audit_qot", "false")),
            reach=_bool(mode.get("reach", "true")),
            directed_fragmentation=_bool(mode.get("directed_fragmentation", "true")),
            objective=objective,
            backend=sv.get("backend", "highs"),
            time_limit=float(tl) if tl else None,
            solver_options=options,
            tighten=_bool(sv.get("tighten", "true")),
            background=background,
            out_dir=Path(out["dir"]) if out.get("dir") else None,
            prefix=out.get("prefix", ""),
            series=_bool(out.get("series", "false")),
            timing=_bool(out.get("timing", "true")),
            lp_dir=Path(out["lp_dir"]) if out.get("lp_dir") else None,
            jobs=int(sv.get("jobs", "1")),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.N < 1:
            raise ConfigError("slots must be positive")
        if self.traffic_mode not in ("dynamic", "static-batch"):
            raise ConfigError(f"unknown traffic mode {self.traffic_mode!r}")
        if self.objective is not None and self.objective not in ("abacus", "jo", "jo-slot-sum"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.backend not in ("highs", "lp-file", "reference"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        rates = [r.rate_gbps for r in self.inline_requests] or [RATE_MAX_GBPS]
        need = max(slots_required(max(rates), lv.m) for lv in self.modulations)
        if need > self.N:
            raise ConfigError(f"N={self.N} is below the largest block size {need}")

    def mode_tag(self) -> str:
        return "pli" if self.pli_enabled else "nopli"


def load_config(source: str | Path, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    return ExperimentConfig.from_parser(read_config(source, overrides))


# --------------------------------------------------------------------------
# admission loop


@dataclass
class Decision:
    request: Request
    allocation: Allocation | None
    status: str
    objective_value: float | None
    solve_ms: float


@dataclass
class RunResult:
    scheme: str
    seed: int | None
    ledger: MetricsLedger
    decisions: list[Decision] = field(default_factory=list)
    state: NetworkState | None = None
    exit_status: int = EXIT_OK
    files: list[Path] = field(default_factory=list)

    @property
    def admitted(self) -> list[Decision]:
        return [d for d in self.decisions if d.allocation is not None]


def initial_state(cfg: ExperimentConfig) -> NetworkState:
    topo = load_topology(cfg.topology)
    state = NetworkState(topo, cfg.N, cfg.modulations)
    for arc, slots in sorted(cfg.background.items()):
        if arc not in topo.arc_index:
            raise ConfigError(f"occupancy names missing arc {arc}")
        state.occupy_background(arc, sorted(set(slots)))
    return state


def make_trace(cfg: ExperimentConfig, seed: int, topology) -> TrafficTrace:
    if cfg.inline_requests:
        return TrafficTrace(seed, list(cfg.inline_requests), sum(r.rate_gbps for r in cfg.inline_requests), "static-batch")
    if cfg.trace_file:
        return load_trace(cfg.trace_file)
    return generate_trace(topology, seed, cfg.load_gbps, cfg.count, cfg.traffic_mode, cfg.mean_holding)


def _qot_failures(state: NetworkState, params: pli_mod.PliParams) -> int:
    return sum(not r.passed for r in pli_mod.verify_qot(state, params))


def admit_one(
    state: NetworkState,
    request: Request,
    scheme: str,
    cfg: ExperimentConfig,
    path_cache: dict | None = None,
) -> Decision:
    """Build, solve, verify and commit one request (or record it as blocked)."""
    objective, k = SCHEMES[scheme]
    if cfg.objective:
        objective = cfg.objective
    path_set = None
    if k is not None:
        key = (request.s, request.d, k)
        cache = path_cache if path_cache is not None else {}
        if key not in cache:
            cache[key] = k_shortest_paths(state.topology, request.s, request.d, k).paths
        path_set = cache[key]
        if not path_set:
            return Decision(request, None, "no-path", None, 0.0)
    pli = cfg.pli if cfg.pli_enabled else None
    t0 = time.perf_counter()
    try:
        model = build_model(state, request, objective, pli=pli, reach=cfg.reach, path_set=path_set, tighten=cfg.tighten)
    except InfeasibleDemandError:
        return Decision(request, None, "infeasible", None, 0.0)
    if cfg.lp_dir is not None:
        from .ilp import write_lp

        cfg.lp_dir.mkdir(parents=True, exist_ok=True)
        (cfg.lp_dir / f"{scheme}_req{request.id}.lp").write_text(write_lp(model))
    result = solve(model, cfg.backend, cfg.time_limit, **cfg.solver_options)
    ms = 1000.0 * (time.perf_counter() - t0)
    if result.status != OPTIMAL:
        # infeasible and timed-out requests are blocked, no retry
        return Decision(request, None, result.status, None, ms)
    alloc = decode(model, result.assignment)
    record = ConnectionRecord(
        request.id, request.s, request.d, alloc.path, alloc.modulation, alloc.first_slot, alloc.num_slots, request.rate_gbps
    )
    state.validate_record(record)
    if pli is None and cfg.reach and state.topology.path_length(alloc.path) > state.modulations[alloc.modulation].reach_km:
        raise AssertionError(f"request {request.id}: route exceeds the reach of modulation {alloc.modulation}")
    if pli is not None or cfg.audit_qot:
        params = cfg.pli
        record.per_slot_sinr = {
            kk: (1.0 / v if v > 0 else math.inf)
            for kk, v in pli_mod.path_inverse_sinr(state, alloc.path, alloc.slots, params).items()
        }
        pli_mod.apply_increment(state, alloc.path, alloc.slots, params)
    state.commit(record)
    return Decision(request, alloc, OPTIMAL, result.objective_value, ms)


def run_single(cfg: ExperimentConfig, scheme: str, seed: int | None) -> RunResult:
    """One replica of one scheme: strictly sequential admission."""
    state = initial_state(cfg)
    trace = make_trace(cfg, seed, state.topology)
    ledger = MetricsLedger()
    result = RunResult(scheme, seed, ledger, state=state)
    audit = cfg.pli_enabled or cfg.audit_qot
    departures: list[tuple[float, int]] = []
    offered = blocked = 0.0
    event = 0
    path_cache: dict = {}

    def row(kind, t, rid, admitted, ms=0.0):
        nonlocal event
        ledger.append(
            LedgerRow(
                event,
                float(t),
                kind,
                rid,
                int(admitted),
                fsus_in_use(state),
                average_fragmentation(state, cfg.directed_fragmentation),
                offered,
                blocked,
                _qot_failures(state, cfg.pli) if audit else 0,
                len(state.records),
                ms,
            )
        )
        event += 1

    try:
        for req in trace.requests:
            while departures and departures[0][0] <= req.arrival_time:
                t, rid = heapq.heappop(departures)
                state.release(rid)
                if audit:
                    pli_mod.refresh_snapshots(state, cfg.pli)
                row("departure", t, rid, 0)
            offered += req.rate_gbps
            decision = admit_one(state, req, scheme, cfg, path_cache)
            result.decisions.append(decision)
            if decision.allocation is None:
                blocked += req.rate_gbps
            elif math.isfinite(req.departure_time):
                heapq.heappush(departures, (req.departure_time, req.id))
            state.check_invariants()
            row("arrival", req.arrival_time, req.id, decision.allocation is not None, decision.solve_ms)
    except SolverUnavailableError as e:
        log.error("solver unavailable, stopping early: %s", e)
        result.exit_status = EXIT_SOLVER_UNAVAILABLE
    if cfg.out_dir is not None:
        result.files = write_outputs(cfg, result)
    return result


def output_stem(cfg: ExperimentConfig, scheme: str, seed: int | None) -> str:
    return f"{cfg.prefix}{scheme}_{cfg.mode_tag()}_seed{seed}"


def write_outputs(cfg: ExperimentConfig, result: RunResult) -> list[Path]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stem = output_stem(cfg, result.scheme, result.seed)
    files = [out / f"{stem}.csv"]
    result.ledger.write_csv(files[0])
    if cfg.timing:
        files.append(out / f"{stem}.timing.csv")
        result.ledger.write_timing(files[-1])
    if cfg.series:
        files.extend(result.ledger.write_series(out / "series", stem))
    return files


def _run_job(args) -> RunResult:
    cfg, scheme, seed = args
    res = run_single(cfg, scheme, seed)
    res.state = None  # keep results picklable and light
    return res


def run_experiment(cfg: ExperimentConfig) -> tuple[int, list[RunResult]]:
    """Every scheme on every seed. Replicas run in parallel when ``jobs > 1``."""
    jobs = [(cfg, sc, seed) for seed in cfg.seeds for sc in cfg.schemes]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [run_single(*j) for j in jobs]
    if cfg.out_dir is not None and results:
        text = summary_text(results)
        (cfg.out_dir / f"{cfg.prefix}summary.txt").write_text(text)
    status = max((r.exit_status for r in results), default=EXIT_OK)
    return status, results


def summary_text(results: Iterable[RunResult]) -> str:
    """Per-seed tables with the first scheme as reference, then seed means when there are several seeds."""
    by_seed: dict = {}
    for r in results:
        by_seed.setdefault(r.seed, {})[r.scheme] = r.ledger
    parts = []
    for seed, ledgers in by_seed.items():
        parts.append(f"# seed {seed}\n")
        parts.append(format_summary(summarize(ledgers)))
    if len(by_seed) > 1:
        parts.append(f"# mean over {len(by_seed)} seeds; reductions are those of the first scheme\n")
        parts.append(format_summary(summarize_over_seeds(by_seed), SEED_MEAN_COLUMNS))
    return "".join(parts)


def compare_runs(paths: Iterable[str | Path], reference: str | None = None) -> str:
    """Summary table over ledger CSV files; names are the file stems."""
    ledgers = {}
    for p in paths:
        p = Path(p)
        ledgers[p.stem] = MetricsLedger.read_csv(p)
    return format_summary(summarize(ledgers, reference))
