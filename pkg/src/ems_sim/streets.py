"""Street graph, shortest paths, and the unified travel-time oracle.

The graph file is line oriented: ``N <id> <lat> <lon>`` declares a node,
``E <id1> <id2> <length_km> [speed_kmh]`` an edge (stored in both
directions), ``#`` starts a comment. With no graph loaded the oracle falls
back to great-circle travel at the fleet speed.
"""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ems_sim import geo
from ems_sim.errors import EmptyGraph, ParseError, Unreachable, ValidationError

_LENGTH_SLACK = 1.0 - 1e-6


@dataclass
class StreetGraph:
    nodes: dict[int, geo.GeoPoint] = field(default_factory=dict)
    # adjacency: node -> list of (neighbor, length_km, speed_kmh or None)
    adj: dict[int, list[tuple[int, float, Optional[float]]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, node_id: int, p: geo.GeoPoint) -> None:
        self.nodes[node_id] = p
        self.adj.setdefault(node_id, [])

    def add_edge(self, a: int, b: int, length_km: float, speed_kmh: Optional[float] = None) -> None:
        if a not in self.nodes or b not in self.nodes:
            raise ValidationError(f"edge ({a}, {b}) references an unknown node")
        if length_km <= 0:
            raise ValidationError(f"edge ({a}, {b}) has nonpositive length {length_km}")
        floor = geo.gc_distance(self.nodes[a], self.nodes[b]) * _LENGTH_SLACK
        if length_km < floor:
            raise ValidationError(
                f"edge ({a}, {b}) length {length_km} km is below the great-circle distance"
            )
        self.adj[a].append((b, length_km, speed_kmh))

    def nearest_node(self, p: geo.GeoPoint) -> int:
        if not self.nodes:
            raise EmptyGraph("graph has no nodes")
        best_id, best_d = None, None
        for node_id in sorted(self.nodes):
            d = geo.gc_distance(p, self.nodes[node_id])
            if best_d is None or d < best_d:
                best_id, best_d = node_id, d
        return best_id


@dataclass
class RoutePlan:
    node_sequence: list[int]
    arrival_times: list[float]
    total_time: float


def load_graph(source) -> StreetGraph:
    """Parse a graph file; undirected edge records become two directed arcs."""
    g = StreetGraph()
    path = Path(source)
    edges: list[tuple[int, int, float, Optional[float], int]] = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].upper()
        try:
            if kind == "N":
                node_id = int(parts[1])
                g.add_node(node_id, geo.GeoPoint(float(parts[2]), float(parts[3])))
            elif kind == "E":
                speed = float(parts[4]) if len(parts) > 4 else None
                edges.append((int(parts[1]), int(parts[2]), float(parts[3]), speed, line_no))
            else:
                raise ParseError(f"unknown record type {parts[0]!r}", line_no)
        except (IndexError, ValueError) as exc:
            raise ParseError(str(exc), line_no) from exc
    for a, b, length, speed, _line_no in edges:
        g.add_edge(a, b, length, speed)
        g.add_edge(b, a, length, speed)
    return g


def _edge_seconds(length_km: float, edge_speed: Optional[float], v: float) -> float:
    return length_km / (edge_speed if edge_speed else v) * 3600.0


def shortest_path(g: StreetGraph, origin: geo.GeoPoint, dest: geo.GeoPoint,
                  t0: float, v: float) -> RoutePlan:
    """Time-minimal route between the nearest graph nodes to origin and dest."""
    if len(g) == 0:
        raise EmptyGraph("graph has no nodes")
    src = g.nearest_node(origin)
    dst = g.nearest_node(dest)
    if src == dst:
        return RoutePlan([src], [t0], 0.0)

    dist: dict[int, float] = {src: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, src)]
    visited: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in visited:
            continue
        visited.add(node)
        if node == dst:
            break
        for nbr, length, speed in g.adj.get(node, []):
            nd = d + _edge_seconds(length, speed, v)
            if nbr not in dist or nd < dist[nbr]:
                dist[nbr] = nd
                prev[nbr] = node
                heapq.heappush(heap, (nd, nbr))
    if dst not in dist:
        raise Unreachable(f"no path between nodes {src} and {dst}")

    seq = [dst]
    while seq[-1] != src:
        seq.append(prev[seq[-1]])
    seq.reverse()
    times = [t0 + dist[n] for n in seq]
    return RoutePlan(seq, times, dist[dst])


def travel_time(g: Optional[StreetGraph], a: geo.GeoPoint, b: geo.GeoPoint,
                t0: float, v: float) -> float:
    """Seconds from a to b: along the graph when one is loaded, else along
    the great circle. Disconnected endpoints propagate Unreachable."""
    if g is None or len(g) == 0:
        return geo.travel_time_gc(a, b, t0, v)
    return shortest_path(g, a, b, t0, v).total_time


class Router:
    """Travel-time/route oracle bound to an optional graph and a fleet speed.

    Route queries are cached by endpoint pair; speeds are time invariant so
    cached results never go stale. The cache is lock-protected for use from
    concurrent readers.
    """

    def __init__(self, graph: Optional[StreetGraph] = None, v: float = geo.DEFAULT_SPEED_KMH):
        if v <= 0:
            raise ValueError(f"speed must be positive, got {v}")
        self.graph = graph if (graph is not None and len(graph) > 0) else None
        self.v = v
        self._cache: dict[tuple[float, float, float, float], RoutePlan] = {}
        self._lock = threading.Lock()

    def _route(self, a: geo.GeoPoint, b: geo.GeoPoint, t0: float) -> Optional[RoutePlan]:
        if self.graph is None:
            return None
        key = (a.lat, a.lon, b.lat, b.lon)
        with self._lock:
            plan = self._cache.get(key)
        if plan is None:
            plan = shortest_path(self.graph, a, b, 0.0, self.v)
            with self._lock:
                self._cache[key] = plan
        return RoutePlan(plan.node_sequence, [t0 + (t - 0.0) for t in plan.arrival_times],
                         plan.total_time)

    def travel_time(self, a: geo.GeoPoint, b: geo.GeoPoint, t0: float) -> float:
        if self.graph is None:
            return geo.travel_time_gc(a, b, t0, self.v)
        return self._route(a, b, t0).total_time

    def route_points(self, a: geo.GeoPoint, b: geo.GeoPoint, t0: float) -> list[geo.GeoPoint]:
        """Waypoints of the route, endpoints included (used for the
        future-trajectory polylines)."""
        plan = self._route(a, b, t0)
        if plan is None:
            return [a, b]
        pts = [self.graph.nodes[n] for n in plan.node_sequence]
        return [a] + pts + [b]
