"""Primal road network: synthetic grid cities, validation and JSON persistence.

The network is a directed street graph. Intersections carry projected planar
coordinates in meters; road segments carry the physical attributes the
assignment oracle and the feature builder consume (length, hourly capacity,
free-flow speed, functional class, district).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParameterError, ParseError, ValidationError

ROAD_CLASSES = ("Trunk", "Primary", "Secondary", "Tertiary", "Residential")

# vehicles per analysis hour, per directed segment
CLASS_CAPACITY = {
    "Trunk": 2000.0,
    "Primary": 1500.0,
    "Secondary": 1000.0,
    "Tertiary": 600.0,
    "Residential": 300.0,
}

# free-flow speed in m/s
CLASS_SPEED = {
    "Trunk": 25.0,
    "Primary": 16.7,
    "Secondary": 13.9,
    "Tertiary": 11.1,
    "Residential": 8.3,
}

GRID_SPACING_M = 250.0


@dataclass(frozen=True)
class Intersection:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class RoadSegment:
    id: str
    from_node: str
    to_node: str
    length: float  # meters
    capacity: float  # vehicles/hour
    speed_limit: float  # m/s
    road_class: str
    district: Optional[int]


@dataclass
class RoadNetwork:
    """Immutable-by-convention container for one street network.

    Construction builds id lookup tables; mutate only via ``dataclasses.replace``.
    """

    intersections: list[Intersection]
    segments: list[RoadSegment]
    district_count: int

    def __post_init__(self) -> None:
        self._nodes_by_id = {n.id: n for n in self.intersections}
        self._segments_by_id = {s.id: s for s in self.segments}

    def node(self, node_id: str) -> Intersection:
        return self._nodes_by_id[node_id]

    def segment(self, segment_id: str) -> RoadSegment:
        return self._segments_by_id[segment_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes_by_id

    def sorted_segments(self) -> list[RoadSegment]:
        """Segments in canonical order (sorted by id)."""
        return sorted(self.segments, key=lambda s: s.id)

    def sorted_segment_ids(self) -> list[str]:
        return sorted(self._segments_by_id)


def validate_network(net: RoadNetwork, require_strongly_connected: bool = False) -> None:
    """Raise ValidationError if any network invariant is broken."""
    if net.district_count < 1:
        raise ValidationError("district_count must be >= 1")
    seen_nodes: set[str] = set()
    for n in net.intersections:
        if n.id in seen_nodes:
            raise ValidationError(f"duplicate intersection id {n.id!r}")
        seen_nodes.add(n.id)
        if not (math.isfinite(n.x) and math.isfinite(n.y)):
            raise ValidationError(f"intersection {n.id!r}: non-finite coordinates")
    seen_segments: set[str] = set()
    for s in net.segments:
        if s.id in seen_segments:
            raise ValidationError(f"duplicate segment id {s.id!r}")
        seen_segments.add(s.id)
        if s.from_node not in seen_nodes:
            raise ValidationError(f"segment {s.id!r}: unknown from-node {s.from_node!r}")
        if s.to_node not in seen_nodes:
            raise ValidationError(f"segment {s.id!r}: unknown to-node {s.to_node!r}")
        if s.from_node == s.to_node:
            raise ValidationError(f"segment {s.id!r}: loop edges are not allowed")
        for field_name in ("length", "capacity", "speed_limit"):
            value = getattr(s, field_name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"segment {s.id!r}: {field_name} must be finite and > 0")
        if s.road_class not in ROAD_CLASSES:
            raise ValidationError(f"segment {s.id!r}: unknown road class {s.road_class!r}")
        if s.district is not None and not (0 <= s.district < net.district_count):
            raise ValidationError(
                f"segment {s.id!r}: district {s.district} outside [0, {net.district_count})"
            )
    if require_strongly_connected and not _strongly_connected(net):
        raise ValidationError("network is not strongly connected")


def _strongly_connected(net: RoadNetwork) -> bool:
    if not net.intersections:
        return False
    forward: dict[str, list[str]] = {n.id: [] for n in net.intersections}
    backward: dict[str, list[str]] = {n.id: [] for n in net.intersections}
    for s in net.segments:
        forward[s.from_node].append(s.to_node)
        backward[s.to_node].append(s.from_node)
    start = net.intersections[0].id

    def reach(adj: dict[str, list[str]]) -> int:
        seen = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen)

    n = len(net.intersections)
    return reach(forward) == n and reach(backward) == n


def _kmeans_labels(coords: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Plain Lloyd iteration with seeded init; ties resolve to the lowest center index."""
    centers = coords[rng.choice(len(coords), size=k, replace=False)].astype(float)
    labels = np.zeros(len(coords), dtype=int)
    for _ in range(25):
        d2 = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for j in range(k):
            members = coords[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return labels


def generate_synthetic_city(grid_size: int, district_count: int, seed: int) -> RoadNetwork:
    """Build a grid city with class-dependent capacities and k-means districts.

    Intersections form a ``grid_size x grid_size`` lattice spaced 250 m apart;
    every adjacent pair is connected by two directed segments. One seed-chosen
    row is a Trunk corridor, one row and one column are Primary arterials,
    every third row/column is Secondary/Tertiary, the remainder Residential.
    A segment inherits the district of its from-node.
    """
    if not isinstance(grid_size, int) or grid_size < 3:
        raise ParameterError(f"grid_size must be an integer >= 3, got {grid_size!r}")
    if not isinstance(district_count, int) or not (1 <= district_count <= grid_size**2):
        raise ParameterError(
            f"district_count must be in [1, {grid_size**2}], got {district_count!r}"
        )
    rng = np.random.default_rng(seed)

    node_id = lambda r, c: f"n{r:03d}-{c:03d}"
    intersections = [
        Intersection(id=node_id(r, c), x=c * GRID_SPACING_M, y=r * GRID_SPACING_M)
        for r in range(grid_size)
        for c in range(grid_size)
    ]

    trunk_row = int(rng.integers(grid_size))
    primary_row = (trunk_row + grid_size // 2) % grid_size
    primary_col = int(rng.integers(grid_size))
    secondary_offset = int(rng.integers(3))
    tertiary_offset = int(rng.integers(3))

    def row_class(r: int) -> str:
        if r == trunk_row:
            return "Trunk"
        if r == primary_row:
            return "Primary"
        if r % 3 == secondary_offset:
            return "Secondary"
        return "Residential"

    def col_class(c: int) -> str:
        if c == primary_col:
            return "Primary"
        if c % 3 == tertiary_offset:
            return "Tertiary"
        return "Residential"

    coords = np.array([[n.x, n.y] for n in intersections])
    labels = _kmeans_labels(coords, district_count, rng)
    district_of = {n.id: int(labels[i]) for i, n in enumerate(intersections)}

    segments: list[RoadSegment] = []

    def add_pair(a: str, b: str, road_class: str) -> None:
        for u, v in ((a, b), (b, a)):
            segments.append(
                RoadSegment(
                    id=f"{u}>{v}",
                    from_node=u,
                    to_node=v,
                    length=GRID_SPACING_M,
                    capacity=CLASS_CAPACITY[road_class],
                    speed_limit=CLASS_SPEED[road_class],
                    road_class=road_class,
                    district=district_of[u],
                )
            )

    for r in range(grid_size):
        for c in range(grid_size - 1):
            add_pair(node_id(r, c), node_id(r, c + 1), row_class(r))
    for c in range(grid_size):
        for r in range(grid_size - 1):
            add_pair(node_id(r, c), node_id(r + 1, c), col_class(c))

    segments.sort(key=lambda s: s.id)
    net = RoadNetwork(
        intersections=intersections, segments=segments, district_count=district_count
    )
    validate_network(net, require_strongly_connected=True)
    return net


def segments_in_districts(net: RoadNetwork, districts: Iterable[int]) -> set[str]:
    """Segment ids whose district lies in the given set."""
    wanted = set(districts)
    for d in wanted:
        if not (isinstance(d, int) and 0 <= d < net.district_count):
            raise ParameterError(f"district {d!r} outside [0, {net.district_count})")
    return {s.id for s in net.segments if s.district in wanted}


def save_network(net: RoadNetwork, path) -> None:
    doc = {
        "district_count": net.district_count,
        "intersections": [{"id": n.id, "x": n.x, "y": n.y} for n in net.intersections],
        "segments": [
            {
                "id": s.id,
                "from": s.from_node,
                "to": s.to_node,
                "length_m": s.length,
                "capacity": s.capacity,
                "speed_ms": s.speed_limit,
                "class": s.road_class,
                "district": s.district,
            }
            for s in net.segments
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_network(path) -> RoadNetwork:
    """Read a network JSON file; parse errors name the offending record."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    try:
        district_count = int(doc["district_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: missing or invalid 'district_count'") from exc

    intersections = []
    for i, rec in enumerate(doc.get("intersections", [])):
        try:
            intersections.append(
                Intersection(id=str(rec["id"]), x=float(rec["x"]), y=float(rec["y"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"intersection record {i} ({rec!r}): {exc}") from exc

    segments = []
    for i, rec in enumerate(doc.get("segments", [])):
        try:
            district = rec["district"]
            segments.append(
                RoadSegment(
                    id=str(rec["id"]),
                    from_node=str(rec["from"]),
                    to_node=str(rec["to"]),
                    length=float(rec["length_m"]),
                    capacity=float(rec["capacity"]),
                    speed_limit=float(rec["speed_ms"]),
                    road_class=str(rec["class"]),
                    district=None if district is None else int(district),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            rec_name = rec.get("id", i) if isinstance(rec, dict) else i
            raise ParseError(f"segment record {rec_name!r}: {exc}") from exc

    net = RoadNetwork(
        intersections=intersections, segments=segments, district_count=district_count
    )
    validate_network(net)
    return net


def with_segments(net: RoadNetwork, segments: Sequence[RoadSegment]) -> RoadNetwork:
    """Copy of the network with a replaced segment list (intersections shared)."""
    return replace(net, segments=list(segments))
