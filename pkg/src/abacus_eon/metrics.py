"""Spectrum fragmentation, utilization and blocking statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .network import NetworkState


def link_fragmentation(row: Sequence[bool] | np.ndarray) -> float:
    """1 - largest free run / total free slots; 0 when nothing is free."""
    occ = np.asarray(row, dtype=bool)
    free = int((~occ).sum())
    if free == 0:
        return 0.0
    best = run = 0
    for used in occ:
        run = 0 if used else run + 1
        best = max(best, run)
    return 1.0 - best / free


def average_fragmentation(state: NetworkState, directed: bool = True) -> float:
    """Mean link fragmentation over all directed arcs.

    With ``directed=False`` each undirected edge contributes once, using the
    union of the two directions' occupancy.
    """
    occ = state.occupancy
    topo = state.topology
    if directed:
        values = [link_fragmentation(r) for r in occ]
    else:
        values = []
        for i, j, _ in topo.edges:
            both = occ[topo.arc_index[(i, j)]] | occ[topo.arc_index[(j, i)]]
            values.append(link_fragmentation(both))
    return float(np.mean(values)) if values else 0.0


def fsus_in_use(state: NetworkState) -> int:
    return int(state.occupancy.sum())


@dataclass
class LedgerRow:
    event: int
    time: float
    kind: str  # arrival / departure
    request_id: int
    admitted: int
    fsus_in_use: int
    avg_fragmentation: float
    offered_gbps: float
    blocked_gbps: float
    qot_failures: int
    active: int
    solve_ms: float = 0.0


# timing is excluded from the CSV so identical runs give identical files
CSV_COLUMNS = [f.name for f in fields(LedgerRow) if f.name != "solve_ms"]


@dataclass
class MetricsLedger:
    """Per-event rows; ``offered_gbps`` and ``blocked_gbps`` are cumulative."""

    rows: list[LedgerRow] = field(default_factory=list)

    def append(self, row: LedgerRow) -> None:
        if row.blocked_gbps > row.offered_gbps + 1e-9:
            raise ValueError("blocked bandwidth exceeds offered bandwidth")
        if not 0.0 <= row.avg_fragmentation <= 1.0:
            raise ValueError("fragmentation outside [0, 1]")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def arrivals(self) -> list[LedgerRow]:
        return [r for r in self.rows if r.kind == "arrival"]

    def series(self, column: str, arrivals_only: bool = True) -> np.ndarray:
        rows = self.arrivals() if arrivals_only else self.rows
        return np.asarray([getattr(r, column) for r in rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            d = asdict(r)
            w.writerow([_cell(d[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def write_timing(self, path: str | Path) -> None:
        lines = ["event,request_id,solve_ms"]
        lines += [f"{r.event},{r.request_id},{r.solve_ms:.3f}" for r in self.rows if r.kind == "arrival"]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_series(self, directory: str | Path, stem: str) -> list[Path]:
        """One two-column file per metric, x = cumulative offered load (Gbps)."""
        out_dir = Path(directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        x = self.series("offered_gbps")
        written = []
        for column in ("fsus_in_use", "avg_fragmentation", "blocked_gbps", "qot_failures"):
            path = out_dir / f"{stem}.{column}.dat"
            y = self.series(column)
            path.write_text("".join(f"{_cell(a)} {_cell(b)}\n" for a, b in zip(x, y)))
            written.append(path)
        bbp = out_dir / f"{stem}.blocking.dat"
        bbp.write_text("".join(f"{_cell(a)} {_cell(b / a if a else 0.0)}\n" for a, b in zip(x, self.series("blocked_gbps"))))
        written.append(bbp)
        return written

    @classmethod
    def from_csv(cls, text: str) -> "MetricsLedger":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ValueError(f"ledger columns {header} do not match {CSV_COLUMNS}")
        types = {f.name: f.type for f in fields(LedgerRow)}
        rows = []
        for rec in reader:
            vals = {}
            for c, v in zip(CSV_COLUMNS, rec):
                t = types[c]
                vals[c] = int(v) if t == "int" else float(v) if t == "float" else v
            rows.append(LedgerRow(**vals))
        return cls(rows)

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetricsLedger":
        return cls.from_csv(Path(path).read_text())


def _cell(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def bandwidth_blocking(ledger: MetricsLedger, window: tuple[int, int] | None = None) -> float:
    """Blocked over offered bandwidth across the arrivals in ``window`` (slice of arrival indices)."""
    arrivals = ledger.arrivals()
    start, stop = (0, len(arrivals)) if window is None else slice(*window).indices(len(arrivals))[:2]
    if stop <= start:
        return 0.0
    # cumulative columns: difference across the window
    before = arrivals[start - 1] if start else None
    offered = arrivals[stop - 1].offered_gbps - (before.offered_gbps if before else 0.0)
    blocked = arrivals[stop - 1].blocked_gbps - (before.blocked_gbps if before else 0.0)
    return blocked / offered if offered > 0 else 0.0


def fsus_saved_percent(ledger_a: MetricsLedger, ledger_b: MetricsLedger) -> float:
    """Percent fewer FSUs used by ``a`` than ``b``, summed over matched arrivals."""
    fa = ledger_a.series("fsus_in_use")
    fb = ledger_b.series("fsus_in_use")
    if len(fa) != len(fb):
        raise ValueError(f"ledgers have {len(fa)} and {len(fb)} arrival events")
    total_b = fb.sum()
    if total_b == 0:
        return 0.0
    return float(100.0 * (total_b - fa.sum()) / total_b)


def qot_failure_percent(ledger: MetricsLedger) -> float:
    """Share of active connections failing the audit at the last event."""
    if not ledger.rows:
        return 0.0
    last = ledger.rows[-1]
    return 100.0 * last.qot_failures / last.active if last.active else 0.0


def final_value(ledger: MetricsLedger, column: str) -> float:
    s = ledger.series(column)
    return float(s[-1]) if len(s) else 0.0


def summarize(ledgers: dict[str, MetricsLedger], reference: str | None = None) -> list[dict]:
    """Per-scheme totals plus deltas against ``reference`` (first scheme by default)."""
    names = list(ledgers)
    if not names:
        return []
    ref = reference if reference is not None else names[0]
    out = []
    for name in names:
        led = ledgers[name]
        row = {
            "scheme": name,
            "arrivals": len(led.arrivals()),
            "total_fsus": float(led.series("fsus_in_use").sum()),
            "final_fsus": final_value(led, "fsus_in_use"),
            "mean_fragmentation": float(led.series("avg_fragmentation").mean()) if len(led.arrivals()) else 0.0,
            "blocking": bandwidth_blocking(led),
            "qot_fail_percent": qot_failure_percent(led),
        }
        if name != ref:
            try:
                # positive = reference uses fewer FSUs than this scheme
                row["fsus_saved_by_ref_percent"] = fsus_saved_percent(ledgers[ref], led)
            except ValueError:
                row["fsus_saved_by_ref_percent"] = float("nan")
        else:
            row["fsus_saved_by_ref_percent"] = 0.0
        out.append(row)
    return out


def _reduction(ref: float, other: float) -> float:
    """Percent by which ``ref`` is below ``other``; 0 when both are 0."""
    if other == 0:
        return 0.0 if ref == 0 else float("-inf")
    return 100.0 * (other - ref) / other


def summarize_over_seeds(by_seed: dict[object, dict[str, MetricsLedger]], reference: str | None = None) -> list[dict]:
    """Seed-averaged totals per scheme plus the reference's percent reductions against each."""
    per_scheme: dict[str, list[dict]] = {}
    for ledgers in by_seed.values():
        for row in summarize(ledgers, reference):
            per_scheme.setdefault(row["scheme"], []).append(row)
    if not per_scheme:
        return []
    ref = reference if reference is not None else next(iter(per_scheme))
    means = {
        name: {c: float(np.mean([r[c] for r in rows])) for c in ("total_fsus", "mean_fragmentation", "blocking")}
        for name, rows in per_scheme.items()
    }
    out = []
    for name, m in means.items():
        out.append({
            "scheme": name,
            "seeds": len(per_scheme[name]),
            **m,
            "fsu_saving_percent": _reduction(means[ref]["total_fsus"], m["total_fsus"]),
            "frag_reduction_percent": _reduction(means[ref]["mean_fragmentation"], m["mean_fragmentation"]),
            "blocking_reduction_percent": _reduction(means[ref]["blocking"], m["blocking"]),
        })
    return out


SUMMARY_COLUMNS = ["scheme", "arrivals", "total_fsus", "final_fsus", "mean_fragmentation", "blocking",
                   "qot_fail_percent", "fsus_saved_by_ref_percent"]
SEED_MEAN_COLUMNS = ["scheme", "seeds", "total_fsus", "mean_fragmentation", "blocking", "fsu_saving_percent",
                     "frag_reduction_percent", "blocking_reduction_percent"]


def format_summary(rows: Iterable[dict], cols: Sequence[str] = SUMMARY_COLUMNS) -> str:
    rows = list(rows)
    first = max([len(cols[0])] + [len(str(r.get("scheme", ""))) for r in rows])

    def line(cells):
        return " ".join(f"{c:<{first}}" if i == 0 else f"{c:>{max(len(cols[i]), 12)}}" for i, c in enumerate(cells))

    out = [line(cols)]
    for r in rows:
        out.append(line([f"{r[c]:.6g}" if isinstance(r.get(c), float) else str(r.get(c, "")) for c in cols]))
    return "\n".join(out) + "\n"
