"""Rolling-horizon simulator: decision epochs, plan execution, reinsertion and idle returns."""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from sddroute.assign import OPTIMAL, Assignment, build_model, greedy_warm_start, solve, write_lp
from sddroute.model import (
    DELIVER,
    PICKUP,
    RELOCATE,
    Order,
    RoutePlan,
    ScenarioConfig,
    SimState,
    Status,
    Stop,
    Vehicle,
    latest_dropoff,
)
from sddroute.network import Network
from sddroute.tripgen import Planner, candidates_for_order, generate_trips

KINDS = ("start", "placed", "pickup", "dropoff", "ignored", "reinserted", "epoch", "idle-return", "move", "idle-move")


class SimulationError(RuntimeError):
    """Internal inconsistency; indicates an engine bug rather than bad input."""


@dataclass
class Event:
    time: int  # ms
    kind: str
    order: int | None = None
    vehicle: int | None = None
    node: int | None = None

    def to_json(self) -> str:
        return json.dumps({"time": self.time / 1000, "kind": self.kind, "order": self.order,
                           "vehicle": self.vehicle, "node": self.node})


class EventLog(list):
    def write(self, path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self))

    @classmethod
    def read(cls, path) -> "EventLog":
        out = cls()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                out.append(Event(round(d["time"] * 1000), d["kind"], d["order"], d["vehicle"], d["node"]))
        return out


def reinsert_limit(real: float, heuristic: float) -> int:
    """Number of times an order may be found infeasible before it is dropped."""
    if heuristic <= 0:
        raise ValueError("heuristic delay must be > 0")
    if real < heuristic:
        raise ValueError("real delay must be >= heuristic delay")
    return int((real - (real % heuristic)) // heuristic)


@dataclass
class EpochStats:
    time: int
    placed: int
    trips: int
    proof: str
    truncated: int
    objective: float
    tripgen_seconds: float
    ilp_seconds: float


@dataclass
class RunResult:
    log: EventLog
    state: SimState
    epochs: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    report: object = None


def initial_fleet(cfg: ScenarioConfig, net: Network) -> list[Vehicle]:
    if not net.depots:
        raise SimulationError("network has no depots")
    return [Vehicle(id=i, node=net.depots[i % len(net.depots)]) for i in range(cfg.fleet_size)]


class Simulator:
    def __init__(self, cfg: ScenarioConfig, net: Network, demand, audit: bool = False,
                 workers: int = 1, lp_dir=None):
        self.cfg, self.net = cfg, net
        self.workers = workers
        self.lp_dir = Path(lp_dir) if lp_dir else None
        orders = {o.id: copy.deepcopy(o) for o in demand}
        for o in orders.values():
            o.status = Status.UNKNOWN
        pending = sorted(orders, key=lambda i: (orders[i].release, i))
        self.state = SimState(0, initial_fleet(cfg, net), orders, pending)
        self.log = EventLog()
        self.reinsert_cap = 1
        if cfg.max_delay_heuristic > 0:
            self.reinsert_cap = reinsert_limit(cfg.max_delay_real, cfg.max_delay_heuristic)
        self.audit = audit
        self.violations: list[str] = []
        self.epochs: list[EpochStats] = []
        self._relocating: dict[int, int] = {}
        for v in self.state.fleet:
            self.log.append(Event(0, "start", None, v.id, v.node))
        self.release(0)

    # -- releases and failures --------------------------------------------
    def release(self, until: int) -> list[Event]:
        st = self.state
        events = []
        while st.pending_future and st.orders[st.pending_future[0]].release <= until:
            o = st.orders[st.pending_future.pop(0)]
            o.status = Status.PLACED
            events.append(Event(o.release, "placed", o.id, None, o.destination))
        if until == 0:
            self.log.extend(events)
        return events

    def fail_order(self, oid: int) -> bool:
        """Order can no longer meet its deadline: reinsert with a fresh release, or drop it.

        Returns True on reinsertion.
        """
        o = self.state.orders[oid]
        if o.reinsert_count + 1 < self.reinsert_cap:
            o.reinsert_count += 1
            o.effective_release = self.state.clock
            self.log.append(Event(self.state.clock, "reinserted", oid, None, o.destination))
            return True
        o.status = Status.IGNORED
        self.log.append(Event(self.state.clock, "ignored", oid, None, o.destination))
        return False

    # -- decision epoch ------------------------------------------------------
    def decision_epoch(self) -> Assignment | None:
        st, cfg, net = self.state, self.cfg, self.net
        self.log.append(Event(st.clock, "epoch"))
        placed = st.placed
        if not placed:
            planner = Planner(st, net, cfg)
            self._install({}, planner)
            self.epochs.append(EpochStats(st.clock, 0, 0, OPTIMAL, 0, 0.0, 0.0, 0.0))
            return None
        planner = Planner(st, net, cfg)
        cands = {oid: candidates_for_order(st.orders[oid], net, cfg.depots_per_order) for oid in placed}
        t0 = time.perf_counter()
        trips = generate_trips(planner, [c for cs in cands.values() for c in cs], workers=self.workers)
        t1 = time.perf_counter()
        covered = {o for t in trips.all() for o in t.orders}
        reinserted = False
        for oid in placed:
            if oid in covered:
                continue
            lb = planner.lower_bound_dropoff(oid, [c.depot for c in cands[oid]])
            if lb > planner.info(oid).deadline:
                reinserted |= self.fail_order(oid)
        if reinserted:
            # reinserted orders count as released now, so they join this epoch's plan
            planner = Planner(st, net, cfg)
            trips = generate_trips(planner, [c for oid in st.placed for c in cands[oid]], workers=self.workers)
            t1 = time.perf_counter()
        model = build_model(trips, st.placed, cfg.reject_penalty)
        if self.lp_dir is not None:
            self.lp_dir.mkdir(parents=True, exist_ok=True)
            write_lp(model, self.lp_dir / f"epoch_{st.clock // cfg.epoch_ms:05d}.lp")
        result = solve(model, greedy_warm_start(model), cfg.ilp_budget)
        t2 = time.perf_counter()
        self._install(result.chosen, planner)
        self.epochs.append(EpochStats(st.clock, len(placed), len(trips), result.proof,
                                      sum(trips.truncated.values()), result.objective_value, t1 - t0, t2 - t1))
        return result

    def _install(self, chosen: dict, planner: Planner) -> None:
        for v in self.state.fleet:
            trip = chosen.get(v.id)
            if trip is not None:
                v.plan = trip.route
                self._relocating.pop(v.id, None)
            elif v.loaded:
                v.plan = planner.loaded_route(v.id)[1]
            elif any(s.kind != RELOCATE for s in v.plan):
                v.plan = RoutePlan()

    def idle_return(self) -> None:
        """Send vehicles with nothing to do towards their nearest depot."""
        st, net = self.state, self.net
        for v in st.fleet:
            if not v.idle:
                continue
            node, t, _ = v.anchor(st.clock)
            depot = min(net.depots, key=lambda d: (net.tt(node, d), d))
            if v.arc_to is None and node == depot:
                v.plan = RoutePlan()
                self._relocating.pop(v.id, None)
                continue
            arrive = t + net.tt(node, depot)
            v.plan = RoutePlan((Stop(depot, RELOCATE, (), arrive, arrive),))
            if self._relocating.get(v.id) != depot:
                self._relocating[v.id] = depot
                self.log.append(Event(st.clock, "idle-return", None, v.id, depot))

    # -- time propagation ------------------------------------------------------
    def propagate(self, until: int) -> None:
        st = self.state
        if until < st.clock:
            raise SimulationError(f"cannot propagate backwards from {st.clock} to {until}")
        events: list[Event] = []
        for v in st.fleet:
            self._advance(v, until, events)
        events.extend(self.release(until))
        events.sort(key=lambda e: e.time)
        self.log.extend(events)
        st.clock = until

    def _advance(self, v: Vehicle, until: int, events: list) -> None:
        st, net, cfg = self.state, self.net, self.cfg
        t = st.clock
        while True:
            if v.actions:
                while v.actions and v.actions[0][0] <= until:
                    ft, kind, oid = v.actions.pop(0)
                    o = st.orders[oid]
                    if kind == PICKUP:
                        o.pickup_time = ft
                        events.append(Event(ft, "pickup", oid, v.id, v.node))
                    else:
                        if ft > latest_dropoff(o, net, cfg):
                            raise SimulationError(f"order {oid} delivered at {ft} ms after its deadline")
                        o.status = Status.DELIVERED
                        o.dropoff_time = ft
                        events.append(Event(ft, "dropoff", oid, v.id, v.node))
                if v.actions:
                    return
                t = max(t, v.busy_until)
                continue
            if v.arc_to is not None:
                if v.arc_arrive > until:
                    return
                w = net.arc_time(v.node, v.arc_to)
                v.driven += w
                if v.arc_relocating:
                    v.relocated += w
                v.node, t = v.arc_to, v.arc_arrive
                v.arc_to = None
                events.append(Event(t, "idle-move" if v.arc_relocating else "move", None, v.id, v.node))
                continue
            if not v.plan.stops or t >= until:
                return
            stop = v.plan.stops[0]
            if v.node != stop.node:
                nxt = net.next_hop(v.node, stop.node)
                v.arc_to, v.arc_arrive = nxt, t + net.arc_time(v.node, nxt)
                v.arc_relocating = stop.kind == RELOCATE
                continue
            if stop.kind != RELOCATE and stop.arrival != t:
                raise SimulationError(
                    f"vehicle {v.id} reached stop at node {stop.node} at {t} ms, planned {stop.arrival} ms")
            v.plan = RoutePlan(v.plan.stops[1:])
            if stop.kind == PICKUP:
                for i, oid in enumerate(stop.orders):
                    o = st.orders[oid]
                    if o.status is not Status.PLACED:
                        raise SimulationError(f"order {oid} picked up while {o.status.value}")
                    o.status, o.vehicle, o.depot = Status.LOADED, v.id, stop.node
                    v.loaded.append(oid)
                    v.actions.append((t + (i + 1) * cfg.load_ms, PICKUP, oid))
                if len(v.loaded) > cfg.capacity:
                    raise SimulationError(f"vehicle {v.id} exceeds capacity at {t} ms")
                v.busy_until = t + len(stop.orders) * cfg.load_ms
            elif stop.kind == DELIVER:
                oid = stop.orders[0]
                if oid not in v.loaded:
                    raise SimulationError(f"vehicle {v.id} delivers order {oid} it does not carry")
                v.loaded.remove(oid)
                v.actions.append((t + cfg.service_ms, DELIVER, oid))
                v.busy_until = t + cfg.service_ms
            else:
                self._relocating.pop(v.id, None)

    # -- auditing ----------------------------------------------------------------
    def audit_state(self) -> list[str]:
        st = self.state
        problems = []
        carried: dict[int, int] = {}
        for v in st.fleet:
            if len(v.loaded) > self.cfg.capacity:
                problems.append(f"vehicle {v.id} over capacity")
            for oid in list(v.loaded) + [a[2] for a in v.actions if a[1] == DELIVER]:
                if oid in carried:
                    problems.append(f"order {oid} carried twice")
                carried[oid] = v.id
        pending = set(st.pending_future)
        for o in st.orders.values():
            in_pending = o.id in pending
            if (o.status is Status.UNKNOWN) != in_pending:
                problems.append(f"order {o.id} status {o.status.value} disagrees with the unknown set")
            if (o.status is Status.LOADED) != (o.id in carried):
                problems.append(f"order {o.id} status {o.status.value} disagrees with vehicle loads")
            if o.status is Status.LOADED and carried.get(o.id) != o.vehicle:
                problems.append(f"order {o.id} carried by the wrong vehicle")
            if o.reinsert_count >= self.reinsert_cap:
                problems.append(f"order {o.id} reinserted beyond the limit")
        return problems

    def terminal_audit(self) -> list[str]:
        st = self.state
        problems = []
        for name in ("placed", "loaded"):
            if getattr(st, name):
                problems.append(f"{name} orders remain at end of day: {getattr(st, name)[:10]}")
        if st.pending_future:
            problems.append("unreleased orders remain at end of day")
        if len(st.delivered) + len(st.ignored) != len(st.orders):
            problems.append("delivered and ignored orders do not cover the demand")
        return problems

    def busy(self) -> bool:
        st = self.state
        return bool(st.pending_future or st.placed or st.loaded or any(v.actions for v in st.fleet))

    # -- day loop ------------------------------------------------------------------
    def run(self, max_extra_epochs: int = 10000) -> RunResult:
        """Decision epochs every epoch length until day end, then until all work is done."""
        cfg, st = self.cfg, self.state
        dt = cfg.epoch_ms
        k, n_epochs = 0, -(-cfg.day_end_ms // dt)
        while k < n_epochs or self.busy():
            if k >= n_epochs + max_extra_epochs:
                raise SimulationError("simulation failed to drain after the end of the day")
            st.clock = k * dt
            self.decision_epoch()
            self.idle_return()
            self.propagate((k + 1) * dt)
            if self.audit:
                self.violations.extend(f"t={st.clock}: {p}" for p in self.audit_state())
            k += 1
        problems = self.terminal_audit()
        if problems:
            raise SimulationError("terminal audit failed: " + "; ".join(problems))
        return RunResult(self.log, st, self.epochs, self.violations)


def run_day(cfg: ScenarioConfig, net: Network, demand) -> tuple:
    """Full method over one day; returns (EventLog, KpiReport)."""
    from sddroute.report import compute_kpis

    result = Simulator(cfg, net, demand).run()
    return result.log, compute_kpis(result.log, demand, cfg, net)


def cost_total(cfg: ScenarioConfig, net: Network, state: SimState) -> float:
    """Full-day objective from the final state: weighted delay + weighted travel + penalties."""
    from sddroute.model import cost_ideal_time

    delay = sum(o.dropoff_time - cost_ideal_time(o, net, cfg) for o in state.orders.values()
                if o.status is Status.DELIVERED)
    travel = sum(v.driven for v in state.fleet)
    ignored = sum(1 for o in state.orders.values() if o.status is Status.IGNORED)
    return ((1 - cfg.cost_weight) * delay + cfg.cost_weight * travel) / 1000 + cfg.reject_penalty * ignored


__all__ = ["Event", "EventLog", "KINDS", "RunResult", "SimulationError", "Simulator", "Order",
           "cost_total", "reinsert_limit", "run_day"]
