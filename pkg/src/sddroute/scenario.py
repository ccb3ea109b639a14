"""Assemble (network, demand) for a config: explicit files where given, seeded generators otherwise."""

from __future__ import annotations

from sddroute.demand import DemandProfile, generate_demand, load_demand
from sddroute.model import ScenarioConfig
from sddroute.network import Network, grid_network, k_center_depots, load_depots, load_network


def build_network(cfg: ScenarioConfig) -> Network:
    if cfg.network_file:
        net = load_network(cfg.network_file, speed=cfg.speed)
    else:
        net = grid_network(cfg.grid_rows, cfg.grid_cols, cfg.grid_spacing, cfg.speed)
    if cfg.depot_file:
        depots = load_depots(cfg.depot_file, net)
    else:
        depots = k_center_depots(net, cfg.depot_count, cfg.depot_restarts, cfg.seed)
    return net.with_depots(depots)


def demand_profile(cfg: ScenarioConfig) -> DemandProfile:
    return DemandProfile(cfg.order_count, cfg.day_end, cfg.quiet_tail, cfg.base_rate, list(cfg.peaks))


def build_demand(cfg: ScenarioConfig, net: Network) -> list:
    if cfg.demand_file:
        return load_demand(cfg.demand_file, net, cfg.day_end - cfg.quiet_tail)
    return generate_demand(demand_profile(cfg), net, cfg.seed)


def build_scenario(cfg: ScenarioConfig) -> tuple[Network, list]:
    net = build_network(cfg)
    return net, build_demand(cfg, net)


DESK = dict(
    grid_rows=20, grid_cols=20, grid_spacing=250.0, speed=10.0, depot_count=5, order_count=500,
    day_end=14400.0, quiet_tail=600.0, base_rate=1.0, peaks=[[4500.0, 1200.0, 1.5], [10500.0, 1200.0, 2.5]],
    fleet_size=8, capacity=6, max_trip_size=6, depots_per_order=3, epoch_length=100.0,
    max_delay_heuristic=480.0, max_delay_real=480.0, cost_weight=1 / 3,
)


def desk_config(**overrides) -> ScenarioConfig:
    """The 20x20 grid desk scenario: 5 depots, 500 orders over four hours with two peaks, 8 vehicles."""
    params = dict(DESK)
    params.update(overrides)
    return ScenarioConfig(**params)
