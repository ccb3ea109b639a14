"""Core domain types: scenario configuration, orders, candidates, vehicles, routes, trips, state.

Times are integer milliseconds. Costs are in seconds-equivalent units, matching
the rejection penalty ``reject_penalty``.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import yaml

from sddroute.network import Network, NetworkError, seconds_to_ms


class ConfigError(ValueError):
    pass


def _number(value):
    if isinstance(value, str) and "/" in value:
        return float(Fraction(value.replace(" ", "")))
    return value


@dataclass
class ScenarioConfig:
    # algorithm parameters (defaults: the base scenario)
    max_delay_real: float = 480.0
    max_delay_heuristic: float = 480.0
    fleet_size: int = 30
    capacity: int = 6
    depot_count: int = 20
    cost_weight: float = 1 / 3
    max_trip_size: int = 10
    service_time: float = 30.0
    load_time: float = 15.0
    epoch_length: float = 100.0
    quiet_tail: float = 600.0
    depots_per_order: int = 3
    speed: float = 10.0
    tripgen_timeout: float = 50.0
    ilp_budget: float = 50.0
    reject_penalty: float = 1e4
    day_end: float = 48000.0
    pre_empty_allowed: bool = True
    seed: int = 0
    # routing limits
    sequence_cap: int = 10
    # scenario sources: explicit files, or a synthetic grid + demand profile
    network_file: str | None = None
    depot_file: str | None = None
    demand_file: str | None = None
    grid_rows: int = 20
    grid_cols: int = 20
    grid_spacing: float = 100.0
    depot_restarts: int = 20
    order_count: int = 500
    base_rate: float = 0.02
    peaks: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.cost_weight = float(_number(self.cost_weight))
        self.validate()

    def validate(self) -> None:
        durations = ("max_delay_real", "max_delay_heuristic", "service_time", "load_time",
                     "epoch_length", "quiet_tail", "tripgen_timeout", "ilp_budget", "day_end")
        for name in durations:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 <= self.cost_weight <= 1:
            raise ConfigError("cost_weight must lie in [0, 1]")
        for name in ("max_trip_size", "depots_per_order", "capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.reject_penalty <= 0:
            raise ConfigError("reject_penalty must be > 0")
        if self.epoch_length <= 0:
            raise ConfigError("epoch_length must be > 0")
        if self.fleet_size < 0:
            raise ConfigError("fleet_size must be >= 0")

    # integer-millisecond views
    @property
    def load_ms(self) -> int:
        return seconds_to_ms(self.load_time)

    @property
    def service_ms(self) -> int:
        return seconds_to_ms(self.service_time)

    @property
    def epoch_ms(self) -> int:
        return seconds_to_ms(self.epoch_length)

    @property
    def delay_heuristic_ms(self) -> int:
        return seconds_to_ms(self.max_delay_heuristic)

    @property
    def delay_real_ms(self) -> int:
        return seconds_to_ms(self.max_delay_real)

    @property
    def day_end_ms(self) -> int:
        return seconds_to_ms(self.day_end)

    @property
    def last_release_ms(self) -> int:
        return seconds_to_ms(self.day_end - self.quiet_tail)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


CONFIG_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def config_from_dict(data: dict, overrides: dict | None = None) -> ScenarioConfig:
    merged = dict(data or {})
    merged.update(overrides or {})
    unknown = sorted(set(merged) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    types = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    clean = {}
    for key, value in merged.items():
        t = str(types[key])
        try:
            if t == "int":
                clean[key] = int(_number(value))
            elif t == "float":
                clean[key] = float(_number(value))
            elif t == "bool":
                clean[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
            else:
                clean[key] = value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return ScenarioConfig(**clean)


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    base = Path(path).resolve().parent
    for key in ("network_file", "depot_file", "demand_file"):
        if data.get(key) and not Path(data[key]).is_absolute():
            data[key] = str(base / data[key])
    return config_from_dict(data, overrides)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


# -- orders -------------------------------------------------------------------

class Status(str, enum.Enum):
    UNKNOWN = "unknown"
    PLACED = "placed"
    LOADED = "loaded"
    DELIVERED = "delivered"
    IGNORED = "ignored"


@dataclass
class Order:
    id: int
    release: int  # ms
    destination: int
    status: Status = Status.UNKNOWN
    reinsert_count: int = 0
    effective_release: int | None = None
    vehicle: int | None = None
    depot: int | None = None
    pickup_time: int | None = None  # end of loading
    dropoff_time: int | None = None  # end of service

    def __post_init__(self) -> None:
        if self.effective_release is None:
            self.effective_release = self.release


class Candidate(NamedTuple):
    order: int
    depot: int


def ideal_offset(destination: int, net: Network, cfg: ScenarioConfig) -> int:
    """Load time + travel from the best depot to the destination + service time, in ms."""
    try:
        _, travel = net.nearest_depot(destination)
    except NetworkError as exc:
        raise NetworkError(f"no depot reaches destination {destination}: {exc}") from exc
    return cfg.load_ms + travel + cfg.service_ms


def ideal_time(order: Order, net: Network, cfg: ScenarioConfig) -> int:
    """Earliest possible drop-off, anchored at the effective release (feasibility clock)."""
    return order.effective_release + ideal_offset(order.destination, net, cfg)


def cost_ideal_time(order: Order, net: Network, cfg: ScenarioConfig) -> int:
    """Earliest possible drop-off from the original release; delays are measured against this."""
    return order.release + ideal_offset(order.destination, net, cfg)


def latest_dropoff(order: Order, net: Network, cfg: ScenarioConfig) -> int:
    """Planning deadline: heuristic slack from the effective release, never past the real bound."""
    return min(ideal_time(order, net, cfg) + cfg.delay_heuristic_ms,
               cost_ideal_time(order, net, cfg) + cfg.delay_real_ms)


def route_cost(delay_ms: int, travel_ms: int, weight: float) -> float:
    """Weighted trip cost (1-weight)*sum(delay) + weight*travel, in seconds."""
    return ((1 - weight) * delay_ms + weight * travel_ms) / 1000


# -- routes ---------------------------------------------------------------

PICKUP, DELIVER, RELOCATE = "pickup", "deliver", "relocate"


@dataclass(frozen=True)
class Stop:
    node: int
    kind: str
    orders: tuple = ()
    arrival: int = 0
    departure: int = 0

    @property
    def key(self) -> tuple:
        return (0, self.orders[0]) if self.kind == DELIVER else (1, self.node)


@dataclass(frozen=True)
class RoutePlan:
    stops: tuple = ()

    def __len__(self) -> int:
        return len(self.stops)

    def __iter__(self):
        return iter(self.stops)

    @property
    def orders(self) -> list[int]:
        return [o for s in self.stops if s.kind == DELIVER for o in s.orders]


def time_stops(stops, net: Network, cfg: ScenarioConfig, node: int, t: int) -> RoutePlan:
    """Recompute planned arrival/departure for ``stops`` starting at (node, t)."""
    timed = []
    for s in stops:
        t += net.tt(node, s.node)
        dwell = len(s.orders) * (cfg.load_ms if s.kind == PICKUP else cfg.service_ms)
        if s.kind == RELOCATE:
            dwell = 0
        timed.append(Stop(s.node, s.kind, tuple(s.orders), t, t + dwell))
        t += dwell
        node = s.node
    return RoutePlan(tuple(timed))


@dataclass
class Trip:
    vehicle: int
    candidates: tuple  # sorted Candidates, one shared depot
    route: RoutePlan
    cost: float
    relative_cost: float

    @property
    def size(self) -> int:
        return len(self.candidates)

    @property
    def orders(self) -> tuple:
        return tuple(c.order for c in self.candidates)

    @property
    def depot(self) -> int:
        return self.candidates[0].depot


# -- vehicles ------------------------------------------------------------

@dataclass
class Vehicle:
    id: int
    node: int
    arc_to: int | None = None
    arc_arrive: int = 0
    busy_until: int = 0
    loaded: list = field(default_factory=list)
    plan: RoutePlan = field(default_factory=RoutePlan)
    actions: list = field(default_factory=list)  # pending (finish_time, kind, order) in current stop
    driven: int = 0  # ms of travel completed
    relocated: int = 0  # ms of travel completed on idle relocation
    arc_relocating: bool = False

    def position(self, clock: int):
        """("at", node) or ("arc", from, to, remaining_ms)."""
        if self.arc_to is not None:
            return ("arc", self.node, self.arc_to, self.arc_arrive - clock)
        return ("at", self.node)

    def anchor(self, clock: int) -> tuple[int, int, int]:
        """(node, time, travel already committed) where replanning may start.

        An in-progress stop and an arc being traversed are never interrupted.
        """
        if self.actions:
            return self.node, max(self.busy_until, clock), 0
        if self.arc_to is not None:
            return self.arc_to, self.arc_arrive, self.arc_arrive - clock
        return self.node, clock, 0

    @property
    def idle(self) -> bool:
        return not self.loaded and not self.actions and not any(s.kind != RELOCATE for s in self.plan)


# -- state ---------------------------------------------------------------

@dataclass
class SimState:
    clock: int
    fleet: list
    orders: dict  # id -> Order
    pending_future: list  # order ids not yet released, by release time

    def ids_with(self, status: Status) -> list[int]:
        return sorted(o.id for o in self.orders.values() if o.status is status)

    @property
    def placed(self) -> list[int]:
        return self.ids_with(Status.PLACED)

    @property
    def loaded(self) -> list[int]:
        return self.ids_with(Status.LOADED)

    @property
    def delivered(self) -> list[int]:
        return self.ids_with(Status.DELIVERED)

    @property
    def ignored(self) -> list[int]:
        return self.ids_with(Status.IGNORED)

    def vehicle(self, vid: int) -> Vehicle:
        return self.fleet[vid]
