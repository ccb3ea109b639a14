"""KPIs from an event log: service rate, time measures, load, distance, per-epoch series, histograms."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from sddroute.model import ScenarioConfig, cost_ideal_time
from sddroute.network import Network

KPI_COLUMNS = (
    ("Service rate [%]", "service_rate"),
    ("Delivery time [s]", "mean_delivery_time"),
    ("Delay [s]", "mean_delay"),
    ("Time on vehicle [s]", "mean_time_on_vehicle"),
    ("Waiting time [s]", "mean_waiting_time"),
    ("Mean loaded parcels", "mean_loaded_parcels"),
    ("Total distance [km]", "total_distance"),
)
EXTRA_COLUMNS = ("delivered", "ignored", "reinserted_orders", "max_delay", "relocation_distance", "total_cost")
UNDEFINED = "NA"


class LogAuditError(ValueError):
    """The event log is not a legal trace; the message names the first bad event."""


@dataclass
class KpiReport:
    service_rate: float
    mean_delivery_time: float | None
    mean_delay: float | None
    mean_time_on_vehicle: float | None
    mean_waiting_time: float | None
    mean_loaded_parcels: float | None
    total_distance: float  # km
    vehicle_distances: list = field(default_factory=list)  # km, by vehicle id
    relocation_distance: float = 0.0  # km driven on idle returns
    delivered: int = 0
    ignored: int = 0
    orders: int = 0
    max_delay: float | None = None
    total_cost: float = 0.0
    epoch_series: list = field(default_factory=list)  # (start_s, open, pickups, dropoffs, ignored)
    delay_histogram: list = field(default_factory=list)  # (bin_start_s, count)
    depot_rank_usage: dict = field(default_factory=dict)  # 1-based rank -> deliveries
    reinsertion_counts: dict = field(default_factory=dict)  # reinsertions -> orders
    delays: dict = field(default_factory=dict)  # order id -> delay s (delivered only)

    @property
    def reinserted_orders(self) -> int:
        return sum(n for k, n in self.reinsertion_counts.items() if k > 0)

    def row(self) -> dict:
        out = {}
        for name, attr in KPI_COLUMNS:
            out[name] = getattr(self, attr)
        for attr in EXTRA_COLUMNS:
            out[attr] = getattr(self, attr)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depot_rank_usage"] = {str(k): v for k, v in self.depot_rank_usage.items()}
        d["reinsertion_counts"] = {str(k): v for k, v in self.reinsertion_counts.items()}
        d["delays"] = {str(k): v for k, v in self.delays.items()}
        return d


def _fmt(value) -> str:
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def kpi_csv(reports: list, labels: list | None = None, label_name: str = "run") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = [name for name, _ in KPI_COLUMNS] + list(EXTRA_COLUMNS)
    w.writerow(([label_name] if labels is not None else []) + head)
    for i, r in enumerate(reports):
        row = r.row()
        w.writerow(([labels[i]] if labels is not None else []) + [_fmt(row[h]) for h in head])
    return buf.getvalue()


def write_kpis(report: KpiReport, out_dir) -> None:
    """kpis.csv (one flat row), kpis.json, and histogram/series CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "kpis.csv").write_text(kpi_csv([report]))
    (out / "kpis.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    _write_pairs(out / "delay_histogram.csv", ("bin_start", "count"), report.delay_histogram)
    _write_pairs(out / "depot_rank_usage.csv", ("bin_start", "count"), sorted(report.depot_rank_usage.items()))
    _write_pairs(out / "reinsertions.csv", ("bin_start", "count"), sorted(report.reinsertion_counts.items()))
    _write_pairs(out / "vehicle_distances.csv", ("vehicle", "km"), list(enumerate(report.vehicle_distances)))
    _write_pairs(out / "epoch_series.csv", ("time", "open", "pickups", "dropoffs", "ignored"), report.epoch_series)


def _write_pairs(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    Path(path).write_text(buf.getvalue())


def _mean(values) -> float | None:
    return math.fsum(values) / len(values) if values else None


def audit_log(log) -> None:
    """Raise LogAuditError on the first event that breaks time order or an order lifecycle."""
    last_t = -math.inf
    state: dict = {}
    for i, e in enumerate(log):
        if e.time < last_t:
            raise LogAuditError(f"event {i} ({e.kind} at {e.time / 1000:g} s) goes back in time")
        last_t = e.time
        if e.order is None:
            continue
        prev = state.get(e.order)
        legal = {
            "placed": prev is None,
            "reinserted": prev in ("placed", "reinserted"),
            "ignored": prev in ("placed", "reinserted"),
            "pickup": prev in ("placed", "reinserted"),
            "dropoff": prev == "pickup",
        }.get(e.kind)
        if legal is None:
            raise LogAuditError(f"event {i}: unknown order event kind {e.kind!r}")
        if not legal:
            raise LogAuditError(f"event {i}: order {e.order} {e.kind} after {prev or 'nothing'}")
        state[e.order] = e.kind


def compute_kpis(log, demand, cfg: ScenarioConfig, net: Network, hist_bin: float = 20.0) -> KpiReport:
    """KPIs recomputed purely from the event log and the original demand."""
    audit_log(log)
    orders = {o.id: o for o in demand}
    n = len(orders)
    pick_end, drop_end, pick_node, pick_vehicle = {}, {}, {}, {}
    ignored, reinserts = set(), {o: 0 for o in orders}
    position: dict = {}
    meters: dict = {}
    relocation = 0.0
    driven_ms = 0
    for e in log:
        if e.kind == "start":
            position[e.vehicle] = e.node
            meters.setdefault(e.vehicle, 0.0)
        elif e.kind in ("move", "idle-move"):
            w = net.arc_time(position[e.vehicle], e.node)
            driven_ms += w
            d = w / 1000 * cfg.speed
            meters[e.vehicle] += d
            if e.kind == "idle-move":
                relocation += d
            position[e.vehicle] = e.node
        elif e.kind == "pickup":
            pick_end[e.order], pick_node[e.order], pick_vehicle[e.order] = e.time, e.node, e.vehicle
        elif e.kind == "dropoff":
            if pick_vehicle.get(e.order) != e.vehicle:
                raise LogAuditError(f"order {e.order} dropped off by vehicle {e.vehicle}, "
                                    f"loaded on {pick_vehicle.get(e.order)}")
            drop_end[e.order] = e.time
        elif e.kind == "ignored":
            ignored.add(e.order)
        elif e.kind == "reinserted":
            reinserts[e.order] += 1
    load_ms, service_ms = cfg.load_ms, cfg.service_ms
    delivery, delay, on_vehicle, waiting = [], [], [], []
    delays = {}
    rank_usage: dict = {}
    for oid in sorted(drop_end):
        o = orders[oid]
        delivery.append((drop_end[oid] - o.release) / 1000)
        dl = (drop_end[oid] - cost_ideal_time(o, net, cfg)) / 1000
        delay.append(dl)
        delays[oid] = dl
        on_vehicle.append((drop_end[oid] - service_ms - pick_end[oid]) / 1000)
        waiting.append((pick_end[oid] - load_ms - o.release) / 1000)
        ranked = sorted(net.depots, key=lambda d: (net.tt(d, o.destination), d))
        rank = ranked.index(pick_node[oid]) + 1
        rank_usage[rank] = rank_usage.get(rank, 0) + 1
    fleet = sorted(meters)
    mean_loaded = None
    if drop_end and fleet:
        window = (max(drop_end.values()) - min(o.release for o in orders.values())) / 1000
        if window > 0:
            mean_loaded = math.fsum(on_vehicle) / (len(fleet) * window)
    km = [meters[v] / 1000 for v in fleet]
    dist_total = math.fsum(km)
    travel_total = driven_ms / 1000
    delay_total = math.fsum(delay)
    cost = (1 - cfg.cost_weight) * delay_total + cfg.cost_weight * travel_total + cfg.reject_penalty * len(ignored)
    return KpiReport(
        service_rate=100.0 * len(drop_end) / n if n else 0.0,
        mean_delivery_time=_mean(delivery),
        mean_delay=_mean(delay),
        mean_time_on_vehicle=_mean(on_vehicle),
        mean_waiting_time=_mean(waiting),
        mean_loaded_parcels=mean_loaded,
        total_distance=dist_total,
        vehicle_distances=km,
        relocation_distance=relocation / 1000,
        delivered=len(drop_end),
        ignored=len(ignored),
        orders=n,
        max_delay=max(delay) if delay else None,
        total_cost=cost,
        epoch_series=_epoch_series(log, cfg),
        delay_histogram=_histogram(delay, hist_bin, cfg.max_delay_real),
        depot_rank_usage=dict(sorted(rank_usage.items())),
        reinsertion_counts=_count(reinserts.values()),
        delays=delays,
    )


def _count(values) -> dict:
    out: dict = {}
    for v in values:
        out[v] = out.get(v, 0) + 1
    return dict(sorted(out.items()))


def _histogram(values, width: float, upper: float) -> list:
    """Bins of ``width`` seconds covering [0, upper]; the last bin is closed on the right."""
    nbins = max(1, math.ceil(upper / width))
    counts = [0] * nbins
    for v in values:
        counts[min(nbins - 1, max(0, int(v // width)))] += 1
    return [(i * width, c) for i, c in enumerate(counts)]


def _epoch_series(log, cfg: ScenarioConfig) -> list:
    """Per epoch: orders open at its start, then pickups, drop-offs and ignores during it."""
    dt = cfg.epoch_ms
    if not log:
        return []
    last = max(e.time for e in log)
    k_max = last // dt + 1
    open_delta = [0] * (k_max + 2)
    pick, drop, ign = [0] * (k_max + 1), [0] * (k_max + 1), [0] * (k_max + 1)
    for e in log:
        k = e.time // dt
        if e.kind == "placed":
            # visible from the first epoch at or after its release
            open_delta[-(-e.time // dt)] += 1
        elif e.kind in ("dropoff", "ignored"):
            open_delta[k + 1] -= 1
            (drop if e.kind == "dropoff" else ign)[k] += 1
        elif e.kind == "pickup":
            pick[k] += 1
    series, running = [], 0
    for k in range(k_max + 1):
        running += open_delta[k]
        series.append((k * dt / 1000, running, pick[k], drop[k], ign[k]))
    return series


def audit_capacity(log, capacity: int) -> list[str]:
    """Load per vehicle after every event never exceeds ``capacity``."""
    load: dict = {}
    out = []
    for e in log:
        if e.kind == "pickup":
            load[e.vehicle] = load.get(e.vehicle, 0) + 1
            if load[e.vehicle] > capacity:
                out.append(f"vehicle {e.vehicle} carries {load[e.vehicle]} > {capacity} at {e.time / 1000:g} s")
        elif e.kind == "dropoff":
            load[e.vehicle] -= 1
    return out


def audit_pre_empty(log) -> list[str]:
    """Depot visits (runs of pickups by one vehicle at one node) that start with cargo on board."""
    load: dict = {}
    at_depot: dict = {}
    out = []
    for e in log:
        if e.vehicle is None:
            continue
        if e.kind == "pickup":
            if at_depot.get(e.vehicle) != e.node and load.get(e.vehicle, 0) > 0:
                out.append(f"vehicle {e.vehicle} loads order {e.order} at {e.time / 1000:g} s "
                           f"while carrying {load[e.vehicle]}")
            at_depot[e.vehicle] = e.node
            load[e.vehicle] = load.get(e.vehicle, 0) + 1
        else:
            at_depot.pop(e.vehicle, None)
            if e.kind == "dropoff":
                load[e.vehicle] -= 1
    return out


def audit_nearest_pickup(log, demand, net: Network) -> list[str]:
    """Pickups at a depot other than the one closest to the order's destination."""
    dest = {o.id: o.destination for o in demand}
    out = []
    for e in log:
        if e.kind == "pickup":
            best = min(net.depots, key=lambda d: (net.tt(d, dest[e.order]), d))
            if e.node != best:
                out.append(f"order {e.order} picked up at depot {e.node}, nearest is {best}")
    return out


def audit_deadlines(log, demand, cfg: ScenarioConfig, net: Network) -> list[str]:
    """Every drop-off within the heuristic slack of its last release and the real bound of the first."""
    orders = {o.id: o for o in demand}
    effective = {o.id: o.release for o in demand}
    out = []
    for e in log:
        if e.kind == "reinserted":
            effective[e.order] = e.time
        elif e.kind == "dropoff":
            o = orders[e.order]
            ideal = cost_ideal_time(o, net, cfg)
            if e.time < ideal:
                out.append(f"order {o.id} delivered before its ideal time")
            if e.time > ideal + cfg.delay_real_ms:
                out.append(f"order {o.id} delay {(e.time - ideal) / 1000:g} s exceeds the real bound")
            if e.time > effective[o.id] - o.release + ideal + cfg.delay_heuristic_ms:
                out.append(f"order {o.id} misses its planning deadline")
    return out


def replay_cost(log, demand, cfg: ScenarioConfig, net: Network) -> float:
    """Full-day objective rebuilt from the log alone."""
    return compute_kpis(log, demand, cfg, net).total_cost


__all__ = ["KPI_COLUMNS", "KpiReport", "LogAuditError", "audit_capacity", "audit_deadlines", "audit_log",
           "audit_nearest_pickup", "audit_pre_empty", "compute_kpis", "kpi_csv",
           "replay_cost", "write_kpis"]
