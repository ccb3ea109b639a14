"""Event-based greedy insertion baseline.

Each order is inserted, at its release, into the plan of the vehicle where it
adds the least cost. Committed stops keep their relative order forever; an
order that fits nowhere is rejected on the spot.
"""

from __future__ import annotations

from sddroute.engine import Event, RunResult, Simulator
from sddroute.model import (
    DELIVER,
    PICKUP,
    RELOCATE,
    Order,
    ScenarioConfig,
    SimState,
    Status,
    Stop,
    time_stops,
)
from sddroute.network import Network
from sddroute.tripgen import Planner, candidates_for_order, evaluate_sequence


def _plan_cost(planner: Planner, v, stops):
    view = planner.views[v.id]
    ids = [o for _, _, oids in stops for o in oids] + list(view.loaded)
    info = {o: planner.info(o) for o in ids}
    return evaluate_sequence(planner.net, planner.cfg, view.node, view.time, view.travel0,
                             stops, info, len(view.loaded))


def insertion_options(planner: Planner, v, order: Order, depot: int):
    """Yield (added_cost, i, j, stops) for every feasible pickup position i < delivery position j."""
    base = [(s.node, s.kind, tuple(s.orders)) for s in v.plan if s.kind != RELOCATE]
    before = _plan_cost(planner, v, base)
    if before is None:
        # an inherited plan that no longer evaluates means a bookkeeping bug
        raise RuntimeError(f"vehicle {v.id} holds an infeasible plan")
    pick = (depot, PICKUP, (order.id,))
    drop = (order.destination, DELIVER, (order.id,))
    for i in range(len(base) + 1):
        with_pick = base[:i] + [pick] + base[i:]
        for j in range(i + 1, len(with_pick) + 1):
            stops = with_pick[:j] + [drop] + with_pick[j:]
            res = _plan_cost(planner, v, stops)
            if res is not None:
                yield res.cost - before.cost, i, j, stops


def find_best_vehicle(order: Order, state: SimState, cfg: ScenarioConfig, net: Network,
                      planner: Planner | None = None):
    """(vehicle id, RoutePlan) with the least added cost, or None if no insertion is feasible.

    Ties go to the lower vehicle id, then the nearer depot, then earlier positions.
    """
    planner = planner or Planner(state, net, cfg)
    best = None
    for v in state.fleet:
        for rank, cand in enumerate(candidates_for_order(order, net, cfg.depots_per_order)):
            for added, i, j, stops in insertion_options(planner, v, order, cand.depot):
                key = (added, v.id, rank, i, j)
                if best is None or key < best[0]:
                    best = (key, v, stops)
    if best is None:
        return None
    _, v, stops = best
    view = planner.views[v.id]
    plan = time_stops([Stop(n, k, o) for n, k, o in stops], net, cfg, view.node, view.time)
    return v.id, plan


def run_greedy(cfg: ScenarioConfig, net: Network, demand, audit: bool = False) -> RunResult:
    sim = Simulator(cfg, net, demand, audit=audit)
    st = sim.state
    handled: set[int] = set()

    def assign_new() -> None:
        fresh = [oid for oid in st.placed if oid not in handled]
        for oid in sorted(fresh, key=lambda i: (st.orders[i].release, i)):
            handled.add(oid)
            # views are rebuilt per order because plans change
            found = find_best_vehicle(st.orders[oid], st, cfg, net)
            if found is None:
                st.orders[oid].status = Status.IGNORED
                sim.log.append(Event(st.clock, "ignored", oid, None, st.orders[oid].destination))
            else:
                vid, plan = found
                st.fleet[vid].plan = plan
                sim._relocating.pop(vid, None)
        sim.idle_return()

    assign_new()
    releases = sorted({o.release for o in st.orders.values() if o.release > 0})
    for t in releases:
        sim.propagate(t)
        assign_new()
        if audit:
            sim.violations.extend(f"t={t}: {p}" for p in sim.audit_state())
    dt = cfg.epoch_ms
    # same horizon as the full method: the whole day, then until the work drains
    while st.clock < cfg.day_end_ms or sim.busy():
        sim.propagate((st.clock // dt + 1) * dt)
        sim.idle_return()
    problems = sim.terminal_audit()
    if problems:
        raise RuntimeError("terminal audit failed: " + "; ".join(problems))
    return RunResult(sim.log, st, [], sim.violations)


def run_greedy_day(cfg: ScenarioConfig, net: Network, demand) -> tuple:
    """Greedy baseline over one day; returns (EventLog, KpiReport)."""
    from sddroute.report import compute_kpis

    result = run_greedy(cfg, net, demand)
    return result.log, compute_kpis(result.log, demand, cfg, net)


__all__ = ["find_best_vehicle", "insertion_options", "run_greedy", "run_greedy_day"]
