"""Road network, shortest travel times and k-center depot placement.

All travel times are held as integer milliseconds. ``tt`` is the hot-path
accessor used by the planners; ``travel_time`` returns seconds.
"""

from __future__ import annotations

import heapq
import math
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path

UNREACHABLE = -1


class NetworkError(ValueError):
    """Raised for malformed graph or depot files and invalid queries."""


def seconds_to_ms(value: float) -> int:
    return int(round(float(value) * 1000))


@dataclass
class Network:
    coords: dict[int, tuple[float, float]]
    arcs: dict[tuple[int, int], int]  # (from, to) -> travel time [ms]
    depots: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.node_ids = sorted(self.coords)
        self.index = {n: i for i, n in enumerate(self.node_ids)}
        self._out: list[list[tuple[int, int]]] = [[] for _ in self.node_ids]
        for (a, b), w in sorted(self.arcs.items()):
            self._out[self.index[a]].append((self.index[b], w))
        self._rows: dict[int, tuple[list[int], list[int]]] = {}
        self._lock = threading.Lock()
        self._nearest: dict[int, tuple[int, int]] = {}

    # -- shortest paths -------------------------------------------------
    def _row(self, source: int) -> tuple[list[int], list[int]]:
        row = self._rows.get(source)
        if row is None:
            row = self._dijkstra(self.index[source])
            with self._lock:
                row = self._rows.setdefault(source, row)
        return row

    def _dijkstra(self, s: int) -> tuple[list[int], list[int]]:
        n = len(self.node_ids)
        dist = [UNREACHABLE] * n
        pred = [-1] * n
        best = [math.inf] * n
        best[s] = 0
        heap = [(0, s)]
        out = self._out
        while heap:
            d, u = heapq.heappop(heap)
            if dist[u] != UNREACHABLE:
                continue
            dist[u] = d
            for v, w in out[u]:
                nd = d + w
                # ties keep the lower predecessor index for determinism
                if nd < best[v] or (nd == best[v] and dist[v] == UNREACHABLE and u < pred[v]):
                    best[v] = nd
                    pred[v] = u
                    heapq.heappush(heap, (nd, v))
        return dist, pred

    def tt(self, a: int, b: int) -> int:
        """Shortest travel time from ``a`` to ``b`` in milliseconds."""
        d = self._row(a)[0][self.index[b]]
        if d == UNREACHABLE:
            raise NetworkError(f"unreachable: node {b} from node {a}")
        return d

    def travel_time(self, a: int, b: int) -> float:
        if a not in self.index or b not in self.index:
            raise NetworkError(f"unknown node in query ({a}, {b})")
        return self.tt(a, b) / 1000

    def path(self, a: int, b: int) -> list[int]:
        """Node sequence of the shortest path from ``a`` to ``b`` (inclusive)."""
        self.tt(a, b)
        _, pred = self._row(a)
        ids = self.node_ids
        i, s = self.index[b], self.index[a]
        rev = [i]
        while i != s:
            i = pred[i]
            rev.append(i)
        return [ids[j] for j in reversed(rev)]

    def next_hop(self, a: int, b: int) -> int:
        return self.path(a, b)[1]

    def arc_time(self, a: int, b: int) -> int:
        return self.arcs[(a, b)]

    def nearest_depot(self, node: int) -> tuple[int, int]:
        """(depot, time [ms]) of the depot closest to ``node`` by travel(depot, node)."""
        hit = self._nearest.get(node)
        if hit is None:
            if not self.depots:
                raise NetworkError("network has no depots")
            hit = min((self.tt(d, node), d) for d in self.depots)[::-1]
            self._nearest[node] = hit
        return hit

    def with_depots(self, depots: list[int]) -> "Network":
        for d in depots:
            if d not in self.index:
                raise NetworkError(f"depot {d} is not a node of the graph")
        net = Network(self.coords, self.arcs, list(depots))
        net._rows = self._rows  # depot set does not change shortest paths
        return net

    def warm(self, sources=None) -> None:
        for s in self.node_ids if sources is None else sources:
            self._row(s)

    # -- validation -----------------------------------------------------
    def validate(self) -> None:
        for (a, b), w in self.arcs.items():
            if a not in self.index or b not in self.index:
                missing = a if a not in self.index else b
                raise NetworkError(f"dangling endpoint: arc {a}->{b} references unknown node {missing}")
            if not (w > 0 and math.isfinite(w)):
                raise NetworkError(f"non-positive weight on arc {a}->{b}: {w / 1000} s")
        for d in self.depots:
            if d not in self.index:
                raise NetworkError(f"depot {d} is not a node of the graph")
        if not self.node_ids:
            raise NetworkError("graph has no nodes")
        fwd = _reach(self.node_ids[0], self.arcs, reverse=False)
        bwd = _reach(self.node_ids[0], self.arcs, reverse=True)
        for n in self.node_ids:
            if n not in fwd or n not in bwd:
                raise NetworkError(f"disconnected graph: node {n} is not strongly connected to node {self.node_ids[0]}")


def _reach(start: int, arcs, reverse: bool) -> set[int]:
    adj: dict[int, list[int]] = {}
    for a, b in arcs:
        if reverse:
            a, b = b, a
        adj.setdefault(a, []).append(b)
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


# -- file formats ---------------------------------------------------------

def load_network(path, speed: float = 10.0, depots=None) -> Network:
    """Read a line-oriented graph file.

    Arcs without an explicit weight get euclidean length / ``speed``.
    """
    coords: dict[int, tuple[float, float]] = {}
    raw_arcs: list[tuple[int, int, float | None, int]] = []
    header = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "nodes":
                header = (int(parts[1]), int(parts[3]))
            elif parts[0] == "N":
                nid = int(parts[1])
                if nid in coords:
                    raise NetworkError(f"line {lineno}: duplicate node {nid}")
                coords[nid] = (float(parts[2]), float(parts[3]))
            elif parts[0] == "A":
                w = float(parts[3]) if len(parts) > 3 else None
                raw_arcs.append((int(parts[1]), int(parts[2]), w, lineno))
            else:
                raise NetworkError(f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, NetworkError):
                raise
            raise NetworkError(f"line {lineno}: parse failure: {line.strip()!r}") from exc
    if header is not None and (header[0] != len(coords) or header[1] != len(raw_arcs)):
        raise NetworkError(
            f"header declares {header[0]} nodes/{header[1]} arcs, file has {len(coords)}/{len(raw_arcs)}"
        )
    arcs: dict[tuple[int, int], int] = {}
    for a, b, w, lineno in raw_arcs:
        if a not in coords or b not in coords:
            missing = a if a not in coords else b
            raise NetworkError(f"line {lineno}: dangling endpoint: arc {a}->{b} references unknown node {missing}")
        if w is None:
            (xa, ya), (xb, yb) = coords[a], coords[b]
            w = math.hypot(xb - xa, yb - ya) / speed
        if not (w > 0 and math.isfinite(w)):
            raise NetworkError(f"line {lineno}: non-positive weight on arc {a}->{b}: {w}")
        ms = seconds_to_ms(w)
        arcs[(a, b)] = min(ms, arcs.get((a, b), ms))
    net = Network(coords, arcs, list(depots or []))
    net.validate()
    return net


def save_network(net: Network, path, explicit_weights: bool = True) -> None:
    lines = [f"nodes {len(net.coords)} arcs {len(net.arcs)}"]
    for n in net.node_ids:
        x, y = net.coords[n]
        lines.append(f"N {n} {x:g} {y:g}")
    for (a, b), w in sorted(net.arcs.items()):
        lines.append(f"A {a} {b} {w / 1000:g}" if explicit_weights else f"A {a} {b}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_depots(path, net: Network | None = None) -> list[int]:
    depots = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            d = int(line)
        except ValueError as exc:
            raise NetworkError(f"line {lineno}: parse failure in depot file: {line!r}") from exc
        if net is not None and d not in net.index:
            raise NetworkError(f"line {lineno}: depot {d} is not a node of the graph")
        depots.append(d)
    return depots


def save_depots(depots, path) -> None:
    Path(path).write_text("".join(f"{d}\n" for d in depots))


def grid_network(rows: int, cols: int, spacing: float = 100.0, speed: float = 10.0) -> Network:
    """Bidirectional 4-neighbour grid; node id = r * cols + c."""
    coords = {r * cols + c: (c * spacing, r * spacing) for r in range(rows) for c in range(cols)}
    w = seconds_to_ms(spacing / speed)
    arcs = {}
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                arcs[(u, u + 1)] = arcs[(u + 1, u)] = w
            if r + 1 < rows:
                arcs[(u, u + cols)] = arcs[(u + cols, u)] = w
    net = Network(coords, arcs)
    net.validate()
    return net


# -- depot placement --------------------------------------------------------

def k_center_objective(net: Network, depots) -> int:
    """max over nodes of travel(nearest depot, node), in ms."""
    rows = [net._row(d)[0] for d in depots]
    return max(min(r[i] for r in rows) for i in range(len(net.node_ids)))


def k_center_depots(net: Network, k: int, restarts: int = 20, seed: int = 0) -> list[int]:
    """Greedy farthest-point k-center, best of ``restarts`` random starts."""
    n = len(net.node_ids)
    if not 1 <= k <= n:
        raise NetworkError(f"k={k} must lie in [1, {n}] (number of nodes)")
    if restarts < 1:
        raise NetworkError("restarts must be >= 1")
    rng = random.Random(seed)
    starts = [rng.randrange(n) for _ in range(restarts)]
    ids = net.node_ids
    best, best_obj = None, None
    for s in starts:
        chosen = [ids[s]]
        near = list(net._row(ids[s])[0])
        while len(chosen) < k:
            far = max(range(n), key=lambda i: (near[i], -i))
            chosen.append(ids[far])
            row = net._row(ids[far])[0]
            near = [min(a, b) for a, b in zip(near, row)]
        obj = max(near)
        if best_obj is None or obj < best_obj:
            best, best_obj = chosen, obj
    return best
