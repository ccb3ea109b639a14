"""Trip-to-vehicle assignment: binary program, greedy warm start, branch-and-bound solve."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from sddroute.tripgen import TripSet

OPTIMAL = "optimal"
INCUMBENT = "incumbent-at-budget"


class ModelError(ValueError):
    pass


@dataclass
class AssignmentModel:
    trips: list  # one column per (trip, vehicle) pair
    orders: list  # placed order ids, one rejection column each
    penalty: float
    costs: list = field(default_factory=list)
    vehicle_rows: dict = field(default_factory=dict)  # vehicle -> trip columns
    order_rows: dict = field(default_factory=dict)  # order -> trip columns (rejection column implied)
    candidate_index: dict = field(default_factory=dict)  # candidate -> trip columns
    order_pos: dict = field(default_factory=dict)

    @property
    def n_trips(self) -> int:
        return len(self.trips)

    @property
    def n_vars(self) -> int:
        return len(self.trips) + len(self.orders)

    def reject_col(self, oid: int) -> int:
        return self.n_trips + self.order_pos[oid]

    def objective(self, x) -> float:
        terms = [self.costs[j] for j in range(self.n_vars) if x[j] > 0.5]
        return math.fsum(terms)

    def is_feasible(self, x) -> bool:
        for cols in self.vehicle_rows.values():
            if sum(x[j] for j in cols) > 1:
                return False
        for oid, cols in self.order_rows.items():
            if sum(x[j] for j in cols) + x[self.reject_col(oid)] != 1:
                return False
        return True


@dataclass
class Assignment:
    chosen: dict  # vehicle -> Trip or None
    rejected_now: list
    objective_value: float
    proof: str = OPTIMAL
    nodes: int = 0

    def vector(self, model: AssignmentModel) -> list[int]:
        x = [0] * model.n_vars
        picked = {(t.vehicle, t.candidates) for t in self.chosen.values() if t is not None}
        for j, t in enumerate(model.trips):
            if (t.vehicle, t.candidates) in picked:
                x[j] = 1
        for oid in self.rejected_now:
            x[model.reject_col(oid)] = 1
        return x


def build_model(trips, placed, penalty: float) -> AssignmentModel:
    """Columns for every (trip, vehicle) and every rejection; rows per vehicle and per order."""
    trip_list = trips.all() if isinstance(trips, TripSet) else list(trips)
    orders = sorted(placed)
    model = AssignmentModel(trip_list, orders, float(penalty))
    model.order_pos = {o: i for i, o in enumerate(orders)}
    model.costs = [t.relative_cost for t in trip_list] + [float(penalty)] * len(orders)
    model.order_rows = {o: [] for o in orders}
    for j, t in enumerate(trip_list):
        model.vehicle_rows.setdefault(t.vehicle, []).append(j)
        for c in t.candidates:
            if c.order not in model.order_rows:
                raise ModelError(f"trip for vehicle {t.vehicle} references order {c.order} that is not placed")
            model.order_rows[c.order].append(j)
            model.candidate_index.setdefault(c, []).append(j)
    return model


def _assignment(model: AssignmentModel, x, proof: str, nodes: int = 0) -> Assignment:
    chosen = {v: None for v in model.vehicle_rows}
    for j, t in enumerate(model.trips):
        if x[j] > 0.5:
            chosen[t.vehicle] = t
    rejected = [o for o in model.orders if x[model.reject_col(o)] > 0.5]
    return Assignment(chosen, rejected, model.objective(x), proof, nodes)


def greedy_warm_start(model: AssignmentModel) -> Assignment:
    """Largest trips first, cheaper first among equal size; skip used vehicles and orders."""
    order = sorted(range(model.n_trips),
                   key=lambda j: (-model.trips[j].size, model.trips[j].cost, model.trips[j].vehicle,
                                  model.trips[j].candidates))
    x = [0] * model.n_vars
    used_v, used_o = set(), set()
    for j in order:
        t = model.trips[j]
        if t.vehicle in used_v or any(o in used_o for o in t.orders):
            continue
        x[j] = 1
        used_v.add(t.vehicle)
        used_o.update(t.orders)
    for o in model.orders:
        if o not in used_o:
            x[model.reject_col(o)] = 1
    return _assignment(model, x, INCUMBENT)


def _matrices(model: AssignmentModel):
    n = model.n_vars
    rows, cols = [], []
    for r, v in enumerate(sorted(model.vehicle_rows)):
        for j in model.vehicle_rows[v]:
            rows.append(r)
            cols.append(j)
    a_ub = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(model.vehicle_rows), n))
    rows, cols = [], []
    for r, o in enumerate(model.orders):
        for j in model.order_rows[o] + [model.reject_col(o)]:
            rows.append(r)
            cols.append(j)
    a_eq = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(model.orders), n))
    return a_ub, a_eq


def solve(model: AssignmentModel, warm: Assignment | None = None, budget: float = 50.0,
          timer=time.perf_counter) -> Assignment:
    """Exact branch-and-bound over the binaries with LP-relaxation bounds.

    Starts from ``warm`` as incumbent. Branches on the most fractional variable
    (ties: lowest index), exploring the 1-branch first. If ``budget`` seconds
    run out, the incumbent is returned with proof ``incumbent-at-budget``.
    """
    warm = warm if warm is not None else greedy_warm_start(model)
    best_x = warm.vector(model)
    if not model.is_feasible(best_x):
        raise ModelError("warm start violates the assignment constraints")
    best = model.objective(best_x)
    if model.n_trips == 0:
        return _assignment(model, best_x, OPTIMAL)
    start = timer()
    c = np.array(model.costs)
    a_ub, a_eq = _matrices(model)
    b_ub = np.ones(a_ub.shape[0])
    b_eq = np.ones(a_eq.shape[0])
    scale = max(1.0, float(np.abs(c).max()))
    tol = 1e-9 * scale
    stack: list[dict] = [{}]
    nodes = 0
    proof = OPTIMAL
    while stack:
        if timer() - start > budget:
            proof = INCUMBENT
            break
        fixed = stack.pop()
        nodes += 1
        bounds = [(fixed[j], fixed[j]) if j in fixed else (0, 1) for j in range(model.n_vars)]
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status != 0 or res.fun >= best - tol:
            continue
        x = res.x
        frac = [(abs(x[j] - 0.5), j) for j in range(model.n_vars) if 1e-6 < x[j] < 1 - 1e-6]
        if not frac:
            xi = [1 if v > 0.5 else 0 for v in x]
            obj = model.objective(xi)
            if model.is_feasible(xi) and obj < best:
                best, best_x = obj, xi
            continue
        _, j = min(frac)
        stack.append({**fixed, j: 0})
        stack.append({**fixed, j: 1})
    return _assignment(model, best_x, proof, nodes)


def audit(model: AssignmentModel, assignment: Assignment) -> list[str]:
    """Violations of the per-vehicle and per-order rows, if any."""
    x = assignment.vector(model)
    problems = []
    for v, cols in model.vehicle_rows.items():
        if sum(x[j] for j in cols) > 1:
            problems.append(f"vehicle {v} holds more than one trip")
    for o, cols in model.order_rows.items():
        if sum(x[j] for j in cols) + x[model.reject_col(o)] != 1:
            problems.append(f"order {o} not covered exactly once")
    return problems


def write_lp(model: AssignmentModel, path) -> None:
    """Dump the model in CPLEX LP text format."""
    def term(coef, name):
        return f"{'+' if coef >= 0 else '-'} {abs(coef)!r} {name}"

    names = [f"e{j}_v{t.vehicle}" for j, t in enumerate(model.trips)] + [f"x_o{o}" for o in model.orders]
    objective = " ".join(term(c, n) for c, n in zip(model.costs, names))
    lines = ["\\ trip-vehicle assignment", "Minimize", " obj: " + objective]
    lines.append("Subject To")
    for v in sorted(model.vehicle_rows):
        lines.append(f" veh_{v}: " + " + ".join(names[j] for j in model.vehicle_rows[v]) + " <= 1")
    for o in model.orders:
        cols = model.order_rows[o] + [model.reject_col(o)]
        lines.append(f" ord_{o}: " + " + ".join(names[j] for j in cols) + " = 1")
    lines.append("Binary")
    lines.extend(f" {n}" for n in names)
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
