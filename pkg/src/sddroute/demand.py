"""Demand instances: file ingestion and seeded synthetic generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sddroute.model import Order
from sddroute.network import Network, seconds_to_ms


class DemandError(ValueError):
    pass


@dataclass
class Peak:
    center: float  # s
    width: float  # s, standard deviation
    amplitude: float  # orders/s added at the center


@dataclass
class DemandProfile:
    total_orders: int
    horizon: float  # s (end of day)
    quiet_tail: float = 600.0
    base_rate: float = 1.0
    peaks: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.peaks = [p if isinstance(p, Peak) else Peak(**p) if isinstance(p, dict) else Peak(*p)
                      for p in self.peaks]
        if self.total_orders < 0:
            raise DemandError("total_orders must be >= 0")
        if self.last_release < 0:
            raise DemandError("quiet_tail exceeds horizon")
        for p in self.peaks:
            if not 0 <= p.center <= self.last_release:
                raise DemandError(f"peak center {p.center} outside [0, {self.last_release}]")
            if p.width <= 0 or p.amplitude < 0:
                raise DemandError("peak width must be > 0 and amplitude >= 0")

    @property
    def last_release(self) -> float:
        return self.horizon - self.quiet_tail

    def density(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.base_rate)
        for p in self.peaks:
            out = out + p.amplitude * np.exp(-0.5 * ((t - p.center) / p.width) ** 2)
        return out


def generate_demand(profile: DemandProfile, net: Network, seed: int) -> list[Order]:
    """Sample release times from the base + truncated-Gaussian-peaks mixture, destinations uniformly."""
    nodes = [n for n in net.node_ids if n not in set(net.depots)] or list(net.node_ids)
    if not nodes:
        raise DemandError("network has no nodes")
    n = profile.total_orders
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    top = profile.base_rate + sum(p.amplitude for p in profile.peaks)
    if top <= 0:
        raise DemandError("demand density is zero everywhere")
    span = profile.last_release
    times: list[float] = []
    while len(times) < n:
        t = rng.uniform(0.0, span, size=2 * (n - len(times)) + 16)
        keep = rng.uniform(0.0, top, size=t.size) < profile.density(t)
        times.extend(t[keep].tolist())
    releases = sorted(min(int(math.floor(t)), int(span)) for t in times[:n])
    dests = rng.choice(len(nodes), size=n)
    return [Order(id=i, release=seconds_to_ms(r), destination=nodes[int(d)])
            for i, (r, d) in enumerate(zip(releases, dests))]


def save_demand(orders, path) -> None:
    lines = []
    for o in orders:
        r = o.release / 1000
        lines.append(f"O {o.id} {r:g} {o.destination}")
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_demand(path, net: Network | None = None, last_release: float | None = None) -> list[Order]:
    """Read ``O <id> <release_seconds> <destination_node>`` rows, sorted by release."""
    orders, seen = [], set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] != "O" or len(parts) != 4:
            raise DemandError(f"line {lineno}: malformed demand row: {line.strip()!r}")
        try:
            oid, release, dest = int(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise DemandError(f"line {lineno}: malformed demand row: {line.strip()!r}") from exc
        if oid in seen:
            raise DemandError(f"line {lineno}: duplicate order id {oid}")
        if net is not None and dest not in net.index:
            raise DemandError(f"line {lineno}: unknown destination node {dest} for order {oid}")
        if release < 0:
            raise DemandError(f"line {lineno}: negative release time for order {oid}")
        if last_release is not None and release > last_release:
            raise DemandError(
                f"line {lineno}: order {oid} released at {release:g} s, "
                f"after the last allowed release {last_release:g} s"
            )
        seen.add(oid)
        orders.append(Order(id=oid, release=seconds_to_ms(release), destination=dest))
    orders.sort(key=lambda o: (o.release, o.id))
    return orders
