"""Candidate construction, exact trip sequencing and anytime trip generation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

from sddroute.model import (
    DELIVER,
    PICKUP,
    Candidate,
    Order,
    RoutePlan,
    ScenarioConfig,
    SimState,
    Stop,
    Trip,
    cost_ideal_time,
    latest_dropoff,
    route_cost,
    time_stops,
)
from sddroute.network import Network


def candidates_for_order(order: Order, net: Network, x: int) -> list[Candidate]:
    """The ``x`` depots closest to the destination, nearest first (ties: lower depot id)."""
    ranked = sorted(net.depots, key=lambda d: (net.tt(d, order.destination), d))
    return [Candidate(order.id, d) for d in ranked[:x]]


@dataclass(frozen=True)
class OrderInfo:
    id: int
    dest: int
    deadline: int  # latest drop-off, ms
    ideal: int  # ideal drop-off from the original release, ms


@dataclass(frozen=True)
class VehicleView:
    id: int
    node: int
    time: int
    travel0: int  # travel already committed (remaining arc)
    loaded: tuple  # order ids still to deliver, in current plan order


@dataclass
class SequenceResult:
    stops: tuple  # (node, kind, orders) triples
    cost: float
    delay: int
    travel: int
    leaves: int = 0


def search_sequence(net: Network, cfg: ScenarioConfig, start: int, t0: int, travel0: int,
                    loaded: list[OrderInfo], new: list[OrderInfo], depot: int | None,
                    prune: bool = True) -> SequenceResult | None:
    """Depth-first search over every delivery order with one depot stop for ``new``.

    Moves are tried in stop-key order (deliveries by order id, then the depot),
    so among equal-cost sequences the lexicographically smallest is kept.
    """
    tt = net.tt
    weight = cfg.cost_weight
    service, cap = cfg.service_ms, cfg.capacity
    n_new = len(new)
    k_load = n_new * cfg.load_ms
    pre_empty = cfg.pre_empty_allowed
    new_ids = tuple(sorted(o.id for o in new))
    best_cost = [math.inf]
    best: list = [None]
    leaves = [0]
    path: list = []

    def rec(node, t, travel, delay, rem_loaded, picked, rem_new):
        if not rem_loaded and not rem_new and (picked or not n_new):
            leaves[0] += 1
            c = route_cost(delay, travel, weight)
            if c < best_cost[0]:
                best_cost[0] = c
                best[0] = (tuple(path), delay, travel)
            return
        if prune:
            lb = delay
            for o in rem_loaded:
                arr = t + tt(node, o.dest) + service
                if arr > o.deadline:
                    return
                lb += arr - o.ideal
            if rem_new:
                if picked:
                    for o in rem_new:
                        arr = t + tt(node, o.dest) + service
                        if arr > o.deadline:
                            return
                        lb += arr - o.ideal
                else:
                    tp = t + tt(node, depot) + k_load
                    for o in rem_new:
                        arr = tp + tt(depot, o.dest) + service
                        if arr > o.deadline:
                            return
                        lb += arr - o.ideal
            if route_cost(lb, travel, weight) >= best_cost[0]:
                return
        moves = [(o.id, True, o) for o in rem_loaded]
        if picked:
            moves.extend((o.id, False, o) for o in rem_new)
        moves.sort(key=lambda m: m[0])
        for _, is_loaded, o in moves:
            dt = tt(node, o.dest)
            arr = t + dt + service
            if arr > o.deadline:
                continue
            path.append((o.dest, DELIVER, (o.id,)))
            if is_loaded:
                rec(o.dest, arr, travel + dt, delay + arr - o.ideal,
                    tuple(x for x in rem_loaded if x is not o), picked, rem_new)
            else:
                rec(o.dest, arr, travel + dt, delay + arr - o.ideal,
                    rem_loaded, picked, tuple(x for x in rem_new if x is not o))
            path.pop()
        if n_new and not picked and len(rem_loaded) + n_new <= cap and (pre_empty or not rem_loaded):
            dt = tt(node, depot)
            path.append((depot, PICKUP, new_ids))
            rec(depot, t + dt + k_load, travel + dt, delay, rem_loaded, True, rem_new)
            path.pop()

    if len(loaded) > cap:
        return None
    rec(start, t0, travel0, 0, tuple(loaded), False, tuple(new))
    if best[0] is None:
        return None
    stops, delay, travel = best[0]
    return SequenceResult(stops, best_cost[0], delay, travel, leaves[0])


def evaluate_sequence(net: Network, cfg: ScenarioConfig, start: int, t0: int, travel0: int,
                      stops, info: dict, load0: int) -> SequenceResult | None:
    """Cost of one explicit stop sequence, or None if it breaks a deadline or capacity."""
    node, t, travel, delay, load = start, t0, travel0, 0, load0
    for s_node, kind, oids in stops:
        dt = net.tt(node, s_node)
        t += dt
        travel += dt
        node = s_node
        if kind == PICKUP:
            if not cfg.pre_empty_allowed and load > 0:
                return None
            load += len(oids)
            if load > cfg.capacity:
                return None
            t += len(oids) * cfg.load_ms
        else:
            o = info[oids[0]]
            t += cfg.service_ms
            if t > o.deadline:
                return None
            delay += t - o.ideal
            load -= 1
    return SequenceResult(tuple(stops), route_cost(delay, travel, cfg.cost_weight), delay, travel)


def insertion_sequence(net: Network, cfg: ScenarioConfig, start: int, t0: int, travel0: int,
                       loaded: list[OrderInfo], new: list[OrderInfo], depot: int | None) -> SequenceResult | None:
    """Cheapest-insertion fallback for routes too long to enumerate."""
    info = {o.id: o for o in list(loaded) + list(new)}
    base = [(o.dest, DELIVER, (o.id,)) for o in loaded]
    load0 = len(loaded)
    if not new:
        return evaluate_sequence(net, cfg, start, t0, travel0, base, info, load0)
    pick = (depot, PICKUP, tuple(sorted(o.id for o in new)))
    positions = range(len(base) + 1) if cfg.pre_empty_allowed else [len(base)]
    best = None
    for i in positions:
        seq = base[:i] + [pick] + base[i:]
        ok = True
        for o in sorted(new, key=lambda o: o.id):
            stop = (o.dest, DELIVER, (o.id,))
            options = []
            for j in range(i + 1, len(seq) + 1):
                trial = seq[:j] + [stop] + seq[j:]
                # deadlines of not-yet-inserted orders are checked once complete
                res = evaluate_sequence(net, cfg, start, t0, travel0, trial, info, load0)
                if res is not None:
                    options.append((res.cost, j, trial))
            if not options:
                ok = False
                break
            seq = min(options, key=lambda x: (x[0], x[1]))[2]
        if ok:
            res = evaluate_sequence(net, cfg, start, t0, travel0, seq, info, load0)
            if res is not None and (best is None or res.cost < best.cost):
                best = res
    return best


@dataclass
class TripSet:
    trips: dict = field(default_factory=dict)  # vehicle id -> {size: [Trip]}
    elapsed: dict = field(default_factory=dict)
    truncated: dict = field(default_factory=dict)

    def for_vehicle(self, vid: int) -> list[Trip]:
        by_size = self.trips.get(vid, {})
        return [t for size in sorted(by_size) for t in by_size[size]]

    def all(self) -> list[Trip]:
        return [t for vid in sorted(self.trips) for t in self.for_vehicle(vid)]

    def families(self) -> dict:
        return {vid: {t.candidates for t in self.for_vehicle(vid)} for vid in self.trips}

    def __len__(self) -> int:
        return sum(len(v) for by in self.trips.values() for v in by.values())


class Planner:
    """Per-epoch read-only view of the state with sequencing and feasibility caches."""

    def __init__(self, state: SimState, net: Network, cfg: ScenarioConfig):
        self.state, self.net, self.cfg = state, net, cfg
        self.clock = state.clock
        self._info: dict[int, OrderInfo] = {}
        self._seq: dict = {}
        self._pairs: dict = {}
        self._loaded_cost: dict = {}
        self.views = {v.id: self._view(v) for v in state.fleet}

    def _view(self, v) -> VehicleView:
        node, t, travel0 = v.anchor(self.clock)
        rank = {o: i for i, o in enumerate(v.plan.orders)}
        loaded = tuple(sorted(v.loaded, key=lambda o: (rank.get(o, len(rank)), o)))
        return VehicleView(v.id, node, t, travel0, loaded)

    def info(self, oid: int) -> OrderInfo:
        hit = self._info.get(oid)
        if hit is None:
            o = self.state.orders[oid]
            hit = OrderInfo(oid, o.destination, latest_dropoff(o, self.net, self.cfg),
                            cost_ideal_time(o, self.net, self.cfg))
            self._info[oid] = hit
        return hit

    def _route(self, view: VehicleView, cands) -> SequenceResult | None:
        loaded = [self.info(o) for o in view.loaded]
        new = [self.info(c.order) for c in cands]
        depot = cands[0].depot if cands else None
        if len(loaded) + len(new) > self.cfg.sequence_cap:
            return insertion_sequence(self.net, self.cfg, view.node, view.time, view.travel0, loaded, new, depot)
        return search_sequence(self.net, self.cfg, view.node, view.time, view.travel0, loaded, new, depot)

    def loaded_route(self, vid: int) -> tuple[float, RoutePlan]:
        """Cheapest plan delivering only what the vehicle already carries."""
        hit = self._loaded_cost.get(vid)
        if hit is None:
            view = self.views[vid]
            if not view.loaded:
                hit = (0.0, RoutePlan())
            else:
                res = self._route(view, ())
                if res is None:
                    # keep the current delivery order; it was feasible when planned
                    info = {o: self.info(o) for o in view.loaded}
                    stops = [(info[o].dest, DELIVER, (o,)) for o in view.loaded]
                    res = _force_evaluate(self.net, self.cfg, view, stops, info)
                hit = (res.cost, self._plan(view, res.stops))
            self._loaded_cost[vid] = hit
        return hit

    def _plan(self, view: VehicleView, stops) -> RoutePlan:
        raw = [Stop(n, k, tuple(o)) for n, k, o in stops]
        return time_stops(raw, self.net, self.cfg, view.node, view.time)

    def best_trip_sequence(self, vid: int, cands) -> Trip | None:
        cands = tuple(sorted(cands))
        key = (vid, cands)
        if key in self._seq:
            return self._seq[key]
        trip = None
        if cands and len({c.depot for c in cands}) == 1 and len({c.order for c in cands}) == len(cands):
            view = self.views[vid]
            res = self._route(view, cands)
            if res is not None:
                base, _ = self.loaded_route(vid)
                trip = Trip(vid, cands, self._plan(view, res.stops), res.cost, res.cost - base)
        self._seq[key] = trip
        return trip

    def candidate_vehicle_feasible(self, vid: int, cand: Candidate) -> bool:
        return self.best_trip_sequence(vid, (cand,)) is not None

    def two_candidates_feasible(self, ci: Candidate, cj: Candidate) -> bool:
        if ci.depot != cj.depot or ci.order == cj.order:
            return False
        key = (ci, cj) if ci < cj else (cj, ci)
        hit = self._pairs.get(key)
        if hit is None:
            a, b = self.info(ci.order), self.info(cj.order)
            tt, s = self.net.tt, self.cfg.service_ms
            t = self.clock + 2 * self.cfg.load_ms
            hit = False
            for x, y in ((a, b), (b, a)):
                tx = t + tt(ci.depot, x.dest) + s
                ty = tx + tt(x.dest, y.dest) + s
                if tx <= x.deadline and ty <= y.deadline:
                    hit = True
                    break
            self._pairs[key] = hit
        return hit

    def lower_bound_dropoff(self, oid: int, depots) -> int:
        """Earliest conceivable drop-off ignoring load and existing plans."""
        o = self.info(oid)
        tt = self.net.tt
        best = math.inf
        for v in self.views.values():
            for d in depots:
                best = min(best, v.time + tt(v.node, d) + self.cfg.load_ms + tt(d, o.dest) + self.cfg.service_ms)
        return best


def _force_evaluate(net, cfg, view, stops, info) -> SequenceResult:
    node, t, travel, delay = view.node, view.time, view.travel0, 0
    for s_node, _, oids in stops:
        dt = net.tt(node, s_node)
        t += dt + cfg.service_ms
        travel += dt
        delay += t - info[oids[0]].ideal
        node = s_node
    return SequenceResult(tuple(stops), route_cost(delay, travel, cfg.cost_weight), delay, travel)


def _vehicle_trips(planner: Planner, vid: int, cands: list[Candidate], budget: float, timer) -> tuple:
    eta = planner.cfg.max_trip_size
    start = timer()
    by_size: dict[int, list[Trip]] = {}

    def expired() -> bool:
        return timer() - start > budget

    singles = []
    for c in cands:
        trip = planner.best_trip_sequence(vid, (c,))
        if trip is not None:
            singles.append(c)
            by_size.setdefault(1, []).append(trip)
        if expired():
            return by_size, timer() - start, True
    if eta < 2:
        return by_size, timer() - start, False
    level = {}
    for ci, cj in combinations(singles, 2):
        if planner.two_candidates_feasible(ci, cj):
            trip = planner.best_trip_sequence(vid, (ci, cj))
            if trip is not None:
                level[trip.candidates] = trip
            if expired():
                by_size[2] = list(level.values())
                return by_size, timer() - start, True
    if level:
        by_size[2] = list(level.values())
    by_depot: dict[int, list[Candidate]] = {}
    for c in singles:
        by_depot.setdefault(c.depot, []).append(c)
    for size in range(3, eta + 1):
        prev, level = level, {}
        for key in prev:
            orders = {c.order for c in key}
            for c in by_depot[key[0].depot]:
                if c <= key[-1] or c.order in orders:
                    continue
                new = key + (c,)
                if not all(new[:h] + new[h + 1:] in prev for h in range(size - 1)):
                    continue
                trip = planner.best_trip_sequence(vid, new)
                if trip is not None:
                    level[new] = trip
                if expired():
                    if level:
                        by_size[size] = list(level.values())
                    return by_size, timer() - start, True
        if not level:
            break
        by_size[size] = list(level.values())
    return by_size, timer() - start, False


def generate_trips(planner: Planner, cands: list[Candidate], budget: float | None = None,
                   timer=time.perf_counter, workers: int = 1) -> TripSet:
    """Feasible trips per vehicle, grown size by size from feasible subsets.

    ``budget`` (seconds, default ``tripgen_timeout``) limits each vehicle; on
    expiry the trips found so far are kept and the vehicle is flagged truncated.
    """
    budget = planner.cfg.tripgen_timeout if budget is None else budget
    cands = sorted(set(cands))
    vids = sorted(planner.views)
    out = TripSet()
    if workers > 1 and len(vids) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda v: _vehicle_trips(planner, v, cands, budget, timer), vids))
    else:
        results = [_vehicle_trips(planner, v, cands, budget, timer) for v in vids]
    for vid, (by_size, elapsed, truncated) in zip(vids, results):
        out.trips[vid] = {s: sorted(ts, key=lambda t: t.candidates) for s, ts in by_size.items()}
        out.elapsed[vid] = elapsed
        out.truncated[vid] = truncated
    return out


# -- thin functional wrappers ------------------------------------------------

def candidate_vehicle_feasible(vid: int, cand: Candidate, state: SimState, net: Network, cfg: ScenarioConfig) -> bool:
    return Planner(state, net, cfg).candidate_vehicle_feasible(vid, cand)


def two_candidates_feasible(ci: Candidate, cj: Candidate, state: SimState, net: Network, cfg: ScenarioConfig) -> bool:
    return Planner(state, net, cfg).two_candidates_feasible(ci, cj)


def best_trip_sequence(vid: int, cands, state: SimState, net: Network, cfg: ScenarioConfig):
    """(RoutePlan, cost) of the cheapest feasible route, or None."""
    trip = Planner(state, net, cfg).best_trip_sequence(vid, cands)
    return None if trip is None else (trip.route, trip.cost)


def placed_candidates(state: SimState, net: Network, x: int) -> list[Candidate]:
    out = []
    for oid in state.placed:
        out.extend(candidates_for_order(state.orders[oid], net, x))
    return out


__all__ = [
    "Candidate", "OrderInfo", "Planner", "TripSet", "VehicleView", "best_trip_sequence",
    "candidate_vehicle_feasible", "candidates_for_order", "evaluate_sequence", "generate_trips",
    "insertion_sequence", "placed_candidates", "search_sequence", "two_candidates_feasible",
]
