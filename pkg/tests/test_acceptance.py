"""Acceptance suite: oracle equivalence, invariants, and directional checks on the desk scenario.

Each test prints one PASS/FAIL line (also collected in the terminal summary).
Desk runs are cached for the session so criteria share them.
"""

import random
import time
from itertools import combinations

import numpy as np
import pytest
from instances import exact_points, family_case, oracle_value, random_instance, sequencing_case

from sddroute.assign import OPTIMAL, build_model, greedy_warm_start, solve
from sddroute.baselines import run_greedy
from sddroute.cli import main
from sddroute.engine import Simulator, reinsert_limit
from sddroute.model import save_config
from sddroute.network import grid_network, k_center_depots, k_center_objective
from sddroute.report import audit_capacity, audit_deadlines, audit_nearest_pickup, audit_pre_empty, compute_kpis
from sddroute.scenario import build_scenario, desk_config
from sddroute.tripgen import Planner, generate_trips

SEEDS = range(10)
RUN_LIMIT_S = 180

VARIANTS = {
    "full": {},
    "x1": {"depots_per_order": 1},
    "no-pre-empty": {"pre_empty_allowed": False},
    "fleet6": {"fleet_size": 6},
    "fleet10": {"fleet_size": 10},
    "real1440": {"max_delay_real": 1440.0},
}


class DeskRuns:
    def __init__(self):
        self.cache = {}

    def get(self, seed, variant):
        key = (seed, variant)
        if key not in self.cache:
            greedy = variant == "greedy"
            cfg = desk_config(seed=seed, **({} if greedy else VARIANTS[variant]))
            net, demand = build_scenario(cfg)
            t0 = time.perf_counter()
            if greedy:
                result = run_greedy(cfg, net, demand, audit=True)
            else:
                result = Simulator(cfg, net, demand, audit=True).run()
            wall = time.perf_counter() - t0
            kpis = compute_kpis(result.log, demand, cfg, net)
            self.cache[key] = dict(cfg=cfg, net=net, demand=demand, result=result, kpis=kpis, wall=wall)
        return self.cache[key]


@pytest.fixture(scope="session")
def desk():
    return DeskRuns()


def test_assignment_oracle(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(200):
        rng = random.Random(10_000 + seed)
        trips, orders, penalty = random_instance(rng, max_vehicles=4, max_orders=6, max_trips=40)
        model = build_model(trips, orders, penalty)
        res = solve(model, greedy_warm_start(model))
        mismatches += res.objective_value != oracle_value(trips, orders, penalty)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    assert verdict("assignment oracle: 200 instances, exact objective", ok,
                   f"{mismatches} mismatches, {elapsed:.1f} s")


def test_sequencing_oracle(verdict):
    from instances import MicroOracle

    t0 = time.perf_counter()
    checked = mismatches = feasible = 0
    seed = 0
    while checked < 200:
        net, cfg, st, cands = sequencing_case(20_000 + seed)
        seed += 1
        if not cands:
            continue
        checked += 1
        ref, _ = MicroOracle(net, cfg, st).best(0, cands)
        got = Planner(st, net, cfg).best_trip_sequence(0, cands)
        if ref is None:
            mismatches += got is not None
        else:
            feasible += 1
            mismatches += got is None or exact_points(got.cost) != ref * 3000
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    assert verdict("sequencing oracle: 200 trips, exact cost", ok,
                   f"{mismatches} mismatches, {feasible} feasible, {elapsed:.1f} s")


def test_trip_generation_oracle(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(50):
        net, cfg, st, oracle, cands = family_case(30_000 + seed)
        trips = generate_trips(Planner(st, net, cfg), cands)
        mismatches += trips.families() != oracle.families(cands, cfg.max_trip_size)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    assert verdict("trip generation oracle: 50 micro-states, equal families", ok,
                   f"{mismatches} mismatches, {elapsed:.1f} s")


def test_reinsertion_limit_formula(verdict):
    got = (reinsert_limit(480, 480), reinsert_limit(1440, 480))
    assert verdict("reinsertion limit: (480,480)->1, (1440,480)->3", got == (1, 3), f"got {got}")


def test_invariant_suite(desk, verdict):
    problems, slowest = [], 0.0
    for seed in SEEDS:
        for variant in ("full", "x1", "no-pre-empty"):
            run = desk.get(seed, variant)
            cfg, net, demand, res = run["cfg"], run["net"], run["demand"], run["result"]
            slowest = max(slowest, run["wall"])
            found = list(res.violations)  # partition and load consistency after every epoch
            found += audit_capacity(res.log, cfg.capacity)
            found += audit_deadlines(res.log, demand, cfg, net)
            if variant == "no-pre-empty":
                found += audit_pre_empty(res.log)
            if variant == "x1":
                found += audit_nearest_pickup(res.log, demand, net)
            st = res.state
            if sorted(st.delivered + st.ignored) != sorted(st.orders):
                found.append("delivered and ignored do not partition the demand")
            problems += [f"seed {seed} {variant}: {p}" for p in found]
    ok = not problems and slowest < RUN_LIMIT_S
    assert verdict("invariant suite on 10 desk seeds", ok,
                   f"{len(problems)} violations, slowest run {slowest:.1f} s"), problems[:5]


def test_full_beats_greedy(desk, verdict):
    gaps = [desk.get(s, "full")["kpis"].service_rate - desk.get(s, "greedy")["kpis"].service_rate for s in SEEDS]
    wins = sum(g >= 0 for g in gaps)
    mean_gap = sum(gaps) / len(gaps)
    assert verdict("full method vs greedy: >= 8/10 seeds, mean gap >= 5 points", wins >= 8 and mean_gap >= 5,
                   f"{wins}/10, mean gap {mean_gap:.2f}")


def test_three_depots_beat_one(desk, verdict):
    wins = sum(desk.get(s, "full")["kpis"].service_rate >= desk.get(s, "x1")["kpis"].service_rate for s in SEEDS)
    assert verdict("x=3 vs x=1 service rate: >= 7/10 seeds", wins >= 7, f"{wins}/10")


def test_fleet_size_monotone(desk, verdict):
    counts = []
    for small, large in (("fleet6", "full"), ("full", "fleet10")):
        n = 0
        for s in SEEDS:
            a, b = desk.get(s, small)["kpis"], desk.get(s, large)["kpis"]
            n += a.service_rate <= b.service_rate and a.mean_delay >= b.mean_delay
        counts.append(n)
    assert verdict("fleet {6,8,10}: service up and delay down, >= 8/10 per pair", min(counts) >= 8,
                   f"6->8 {counts[0]}/10, 8->10 {counts[1]}/10")


def test_delay_cutoff(desk, verdict):
    worst = max(desk.get(s, "full")["kpis"].max_delay for s in SEEDS)
    sharp = worst <= 480
    lo, hi, bookkeeping = float("inf"), 0.0, []
    for s in SEEDS:
        run = desk.get(s, "real1440")
        reinsert_cap = reinsert_limit(run["cfg"].max_delay_real, run["cfg"].max_delay_heuristic)
        delays = run["kpis"].delays.values()
        lo, hi = min(lo, min(delays)), max(hi, max(delays))
        counts = {o: 0 for o in run["result"].state.orders}
        for e in run["result"].log:
            if e.kind == "reinserted":
                counts[e.order] += 1
        st = run["result"].state
        for oid, o in st.orders.items():
            if counts[oid] != o.reinsert_count or counts[oid] > reinsert_cap - 1:
                bookkeeping.append(oid)
            if oid in st.ignored and counts[oid] != reinsert_cap - 1:
                bookkeeping.append(oid)
    wide = 0 <= lo and hi <= 1440
    ok = sharp and wide and not bookkeeping
    assert verdict("delay cut-off: max 480 s at limit 1, support [0,1440] with reinsertion", ok,
                   f"max {worst:.1f} s; support [{lo:.1f}, {hi:.1f}] s; {len(bookkeeping)} bookkeeping errors")


def test_cli_determinism(tmp_path, verdict):
    config = tmp_path / "desk.yaml"
    save_config(desk_config(seed=3), config)
    for name in ("a", "b"):
        assert main(["run", str(config), "--out", str(tmp_path / name)]) == 0
    same = (tmp_path / "a" / "kpis.csv").read_bytes() == (tmp_path / "b" / "kpis.csv").read_bytes()
    proofs = {line.split(",")[3] for line in (tmp_path / "a" / "epochs.csv").read_text().splitlines()[1:]}
    assert verdict("determinism: byte-identical KPI CSVs from two CLI runs", same and proofs == {OPTIMAL},
                   f"epoch proofs {sorted(proofs)}")


def exhaustive_two_center(dist):
    best = np.inf
    for a in range(len(dist)):
        best = min(best, np.minimum(dist[a][None, :], dist[a + 1:]).max(axis=1).min(initial=np.inf))
    return best


def farthest_point_witness(dist, k):
    """k+1 points from farthest-first traversal; pairwise at least r apart, so the optimum is >= r/2."""
    chosen = [0]
    near = dist[0].copy()
    for _ in range(k):
        nxt = int(np.argmax(near))
        chosen.append(nxt)
        near = np.minimum(near, dist[nxt])
    pairwise = min(dist[a, b] for a, b in combinations(chosen, 2))
    return pairwise / 2


def test_k_center_sanity(verdict):
    net = grid_network(20, 20, 250.0, 10.0)
    ids = net.node_ids
    dist = np.array([[net.tt(a, b) for b in ids] for a in ids], dtype=float)
    two = k_center_objective(net, k_center_depots(net, 2, restarts=20))
    opt_two = exhaustive_two_center(dist)
    five = k_center_objective(net, k_center_depots(net, 5, restarts=20))
    lower_five = farthest_point_witness(dist, 5)
    objs = [k_center_objective(net, k_center_depots(net, k, restarts=20)) for k in (1, 2, 3, 5, 8)]
    ok = two <= 2 * opt_two and five <= 2 * lower_five and objs == sorted(objs, reverse=True)
    assert verdict("k-center: within 2x of the optimum, non-increasing in k", ok,
                   f"k=2 {two / 1000:g} s vs optimum {opt_two / 1000:g} s; k=5 {five / 1000:g} s vs lower bound "
                   f"{lower_five / 1000:g} s; k=1,2,3,5,8 -> {[o / 1000 for o in objs]}")

