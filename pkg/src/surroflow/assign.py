"""Equilibrium traffic oracle: demand synthesis, BPR congestion, MSA assignment.

Stands in for a full agent-based simulator. Link volumes come from the method
of successive averages (MSA) around all-or-nothing loadings on time-shortest
paths; congestion follows the standard BPR volume-delay curve. Stochastic
replications are emulated by perturbing free-flow times with seeded
multiplicative noise before each run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _dijkstra

from .errors import AssignmentError, DataError, ParameterError, ParseError
from .network import RoadNetwork
from .scenario import Scenario, apply_policy

BPR_ALPHA = 0.15
BPR_BETA = 4.0
SEED_NOISE_LO = 0.95
SEED_NOISE_HI = 1.05
ATTRACTOR_COUNT = 3
ATTRACTOR_SCALE_M = 2000.0

DEFAULT_MAX_ITERATIONS = 100
DEFAULT_GAP_TOLERANCE = 0.01

# The demand generator produces a sampled population, far smaller than the
# vehicle flows the class capacities were written for. Assignment therefore
# evaluates congestion against capacity * DEFAULT_CAPACITY_SCALE, mirroring
# the flow-capacity scaling that downsampled agent-based models apply.
DEFAULT_CAPACITY_SCALE = 0.10


@dataclass(frozen=True)
class DemandTable:
    """Aggregated origin-destination trips: (origin id, destination id, count)."""

    trips: tuple[tuple[str, str, float], ...]

    def total(self) -> float:
        return float(sum(t[2] for t in self.trips))


@dataclass
class AssignmentResult:
    volumes: dict[str, float]  # segment id -> vehicles/hour
    relative_gap: float
    iterations: int
    gap_history: list[float] = field(default_factory=list)
    # per-iteration volume snapshots in canonical segment order, when recorded
    segment_order: tuple[str, ...] = ()
    volume_history: Optional[list[np.ndarray]] = None


@dataclass(frozen=True)
class TargetVector:
    """Per-segment change in car volume caused by a policy (vehicles/hour, signed)."""

    values: dict[str, float]


def generate_demand(net: RoadNetwork, agent_count: int, seed: int) -> DemandTable:
    """Sample agent trips: uniform origins, destinations pulled toward attractors.

    Three seed-chosen attractor intersections define destination weights
    exp(-d / 2000 m) with d the distance to the nearest attractor. Trips whose
    destination equals their origin are resampled.
    """
    if agent_count < 1:
        raise ParameterError(f"agent_count must be >= 1, got {agent_count}")
    nodes = sorted(net.intersections, key=lambda n: n.id)
    n = len(nodes)
    if n < 2:
        raise ParameterError("need at least two intersections to generate demand")
    rng = np.random.default_rng(seed)
    coords = np.array([[node.x, node.y] for node in nodes])
    k = min(ATTRACTOR_COUNT, n)
    attractors = coords[rng.choice(n, size=k, replace=False)]
    d_nearest = np.sqrt(((coords[:, None, :] - attractors[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    weights = np.exp(-d_nearest / ATTRACTOR_SCALE_M)
    p = weights / weights.sum()

    origins = rng.integers(0, n, size=agent_count)
    dests = rng.choice(n, size=agent_count, p=p)
    clash = dests == origins
    while clash.any():
        dests[clash] = rng.choice(n, size=int(clash.sum()), p=p)
        clash = dests == origins

    counts: dict[tuple[int, int], float] = {}
    for o, d in zip(origins, dests):
        key = (int(o), int(d))
        counts[key] = counts.get(key, 0.0) + 1.0
    trips = tuple(
        (nodes[o].id, nodes[d].id, c) for (o, d), c in sorted(counts.items())
    )
    return DemandTable(trips=trips)


def bpr_travel_time(free_flow_time, volume, capacity):
    """BPR volume-delay curve t = t0 * (1 + 0.15 * (v/c)^4). Accepts scalars or arrays."""
    free_flow_time = np.asarray(free_flow_time, dtype=float)
    volume = np.asarray(volume, dtype=float)
    capacity = np.asarray(capacity, dtype=float)
    if np.any(capacity <= 0):
        raise ParameterError("capacity must be > 0")
    if np.any(volume < 0):
        raise ParameterError("volume must be >= 0")
    if np.any(free_flow_time <= 0):
        raise ParameterError("free_flow_time must be > 0")
    t = free_flow_time * (1.0 + BPR_ALPHA * (volume / capacity) ** BPR_BETA)
    return float(t) if t.ndim == 0 else t


class _CompiledNetwork:
    """Array form of a network for fast repeated shortest-path assignment."""

    def __init__(self, net: RoadNetwork):
        self.node_ids = sorted(n.id for n in net.intersections)
        self.node_index = {nid: i for i, nid in enumerate(self.node_ids)}
        segs = net.sorted_segments()
        self.seg_ids = [s.id for s in segs]
        self.n_nodes = len(self.node_ids)
        self.n_edges = len(segs)
        self.from_idx = np.array([self.node_index[s.from_node] for s in segs], dtype=np.int64)
        self.to_idx = np.array([self.node_index[s.to_node] for s in segs], dtype=np.int64)
        self.length = np.array([s.length for s in segs])
        self.capacity = np.array([s.capacity for s in segs])
        self.free_flow_time = self.length / np.array([s.speed_limit for s in segs])
        # one-hot edge -> head-node matrix for counting tight parents per node
        self._head_onehot = csr_matrix(
            (np.ones(self.n_edges), (np.arange(self.n_edges), self.to_idx)),
            shape=(self.n_edges, self.n_nodes),
        )
        # incoming edge lists, used only by the lexicographic fallback
        self.in_edges: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, v in enumerate(self.to_idx):
            self.in_edges[v].append(e)

    def graph_matrix(self, times: np.ndarray) -> csr_matrix:
        # scipy sums duplicate entries, so parallel edges are reduced to their minimum first
        key = self.from_idx * self.n_nodes + self.to_idx
        uniq, inverse = np.unique(key, return_inverse=True)
        slot_time = np.full(len(uniq), np.inf)
        np.minimum.at(slot_time, inverse, times)
        return csr_matrix(
            (slot_time, (uniq // self.n_nodes, uniq % self.n_nodes)),
            shape=(self.n_nodes, self.n_nodes),
        )


class _CompiledDemand:
    def __init__(self, compiled: _CompiledNetwork, demand: DemandTable):
        if not demand.trips:
            raise ParameterError("demand table is empty")
        for o, d, c in demand.trips:
            if o not in compiled.node_index:
                raise DataError(f"demand origin {o!r} not in network")
            if d not in compiled.node_index:
                raise DataError(f"demand destination {d!r} not in network")
            if c <= 0:
                raise DataError(f"trip count for ({o!r}, {d!r}) must be > 0")
        origin_nodes = np.array([compiled.node_index[o] for o, _, _ in demand.trips])
        self.dest = np.array([compiled.node_index[d] for _, d, _ in demand.trips])
        self.count = np.array([c for _, _, c in demand.trips])
        self.origins = np.unique(origin_nodes)
        lookup = {o: i for i, o in enumerate(self.origins)}
        self.origin_row = np.array([lookup[o] for o in origin_nodes])
        self.total = float(self.count.sum())


def _lex_tree(compiled: _CompiledNetwork, tight: np.ndarray, dist: np.ndarray, origin: int) -> np.ndarray:
    """Parent edges forming the lexicographically smallest shortest-path tree.

    Nodes are settled in increasing distance order; among tight incoming edges
    the one extending the lexicographically smallest segment-id sequence wins.
    """
    parent = np.full(compiled.n_nodes, -1, dtype=np.int64)
    paths: dict[int, tuple[str, ...]] = {origin: ()}
    order = np.argsort(dist, kind="stable")
    for v in order:
        v = int(v)
        if v == origin or not np.isfinite(dist[v]):
            continue
        best_path = None
        best_edge = -1
        for e in compiled.in_edges[v]:
            if not tight[e]:
                continue
            u = int(compiled.from_idx[e])
            prefix = paths.get(u)
            if prefix is None:
                continue
            candidate = prefix + (compiled.seg_ids[e],)
            if best_path is None or candidate < best_path:
                best_path = candidate
                best_edge = e
        if best_path is not None:
            paths[v] = best_path
            parent[v] = best_edge
    return parent


def _shortest_parents(
    compiled: _CompiledNetwork, times: np.ndarray, dist: np.ndarray, origins: np.ndarray
) -> np.ndarray:
    """Per-origin parent edge for every node, honoring the lexicographic tie-break.

    ``dist`` is (n_origins, n_nodes) from Dijkstra. An edge (u, v) is tight when
    dist[u] + t == dist[v] up to a relative tolerance. Nodes with a single tight
    parent are resolved vectorized; origins with any ambiguity fall back to an
    explicit lexicographic tree.
    """
    d_from = dist[:, compiled.from_idx]
    d_to = dist[:, compiled.to_idx]
    with np.errstate(invalid="ignore"):
        slack = d_from + times[None, :] - d_to
        tol = 1e-9 * np.maximum(1.0, np.abs(d_to))
        tight = (slack <= tol) & np.isfinite(slack)

    counts = tight.astype(np.float64) @ compiled._head_onehot
    weighted = (tight * (np.arange(compiled.n_edges) + 1.0)) @ compiled._head_onehot
    parent = np.where(counts == 1.0, weighted - 1.0, -1.0).astype(np.int64)

    ambiguous_rows = np.nonzero((counts > 1.0).any(axis=1))[0]
    for row in ambiguous_rows:
        parent[row] = _lex_tree(compiled, tight[row], dist[row], int(origins[row]))
    return parent


def _aon_volumes(
    compiled: _CompiledNetwork, times: np.ndarray, od: _CompiledDemand
) -> np.ndarray:
    dist = _dijkstra(compiled.graph_matrix(times), directed=True, indices=od.origins)
    dist = np.atleast_2d(dist)

    unreachable = ~np.isfinite(dist[od.origin_row, od.dest])
    if unreachable.any():
        i = int(np.nonzero(unreachable)[0][0])
        o_id = compiled.node_ids[int(od.origins[od.origin_row[i]])]
        d_id = compiled.node_ids[int(od.dest[i])]
        raise AssignmentError(f"no route from {o_id!r} to {d_id!r}")

    parent = _shortest_parents(compiled, times, dist, od.origins)

    volumes = np.zeros(compiled.n_edges)
    cur = od.dest.copy()
    origin_node = od.origins[od.origin_row]
    active = np.nonzero(cur != origin_node)[0]
    guard = 0
    while active.size:
        edges = parent[od.origin_row[active], cur[active]]
        if (edges < 0).any():
            bad = active[edges < 0][0]
            raise AssignmentError(
                f"no route from {compiled.node_ids[int(origin_node[bad])]!r} "
                f"to {compiled.node_ids[int(od.dest[bad])]!r}"
            )
        np.add.at(volumes, edges, od.count[active])
        cur[active] = compiled.from_idx[edges]
        active = active[cur[active] != origin_node[active]]
        guard += 1
        if guard > compiled.n_nodes + 1:
            raise AssignmentError("path walk exceeded node count; inconsistent parents")
    return volumes


def all_or_nothing(
    net: RoadNetwork, times: Mapping[str, float], demand: DemandTable
) -> dict[str, float]:
    """Load every OD's trips onto its shortest-time path.

    Ties between equal-time routes break toward the lexicographically smallest
    segment-id sequence.
    """
    compiled = _CompiledNetwork(net)
    missing = [sid for sid in compiled.seg_ids if sid not in times]
    if missing:
        raise ParameterError(f"times missing for segments: {missing[:3]}")
    t = np.array([float(times[sid]) for sid in compiled.seg_ids])
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise ParameterError("all segment times must be finite and > 0")
    od = _CompiledDemand(compiled, demand)
    volumes = _aon_volumes(compiled, t, od)
    return dict(zip(compiled.seg_ids, volumes.tolist()))


def msa_assignment(
    net: RoadNetwork,
    demand: DemandTable,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    gap_tolerance: float = DEFAULT_GAP_TOLERANCE,
    seed: int = 0,
    record_history: bool = False,
) -> AssignmentResult:
    """Successive-averages equilibrium: v <- (1 - 1/k) v + (1/k) AON(bpr(v)).

    Free-flow times are first perturbed by seeded multiplicative noise in
    [0.95, 1.05], which emulates the run-to-run variability of a stochastic
    simulator. The relative gap at iteration k measures the volumes entering
    that iteration; the first recorded gap is infinite because iteration 1
    starts from an empty network.
    """
    if max_iterations < 1:
        raise ParameterError("max_iterations must be >= 1")
    if gap_tolerance <= 0:
        raise ParameterError("gap_tolerance must be > 0")
    compiled = _CompiledNetwork(net)
    od = _CompiledDemand(compiled, demand)
    rng = np.random.default_rng(seed)
    fft = compiled.free_flow_time * rng.uniform(SEED_NOISE_LO, SEED_NOISE_HI, compiled.n_edges)

    volumes = np.zeros(compiled.n_edges)
    gaps: list[float] = []
    history: list[np.ndarray] = []
    iterations = 0
    for k in range(1, max_iterations + 1):
        times = fft * (1.0 + BPR_ALPHA * (volumes / compiled.capacity) ** BPR_BETA)
        aon = _aon_volumes(compiled, times, od)
        current_cost = float(volumes @ times)
        if current_cost > 0:
            gap = abs(current_cost - float(aon @ times)) / current_cost
        else:
            gap = float("inf")
        volumes = volumes + (aon - volumes) / k
        gaps.append(gap)
        if record_history:
            history.append(volumes.copy())
        iterations = k
        if gap <= gap_tolerance:
            break

    return AssignmentResult(
        volumes=dict(zip(compiled.seg_ids, volumes.tolist())),
        relative_gap=gaps[-1],
        iterations=iterations,
        gap_history=gaps,
        segment_order=tuple(compiled.seg_ids),
        volume_history=history if record_history else None,
    )


def base_case(
    net: RoadNetwork,
    demand: DemandTable,
    seeds: Sequence[int],
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    gap_tolerance: float = DEFAULT_GAP_TOLERANCE,
) -> AssignmentResult:
    """No-policy reference: per-segment mean of MSA volumes across seeds."""
    if not seeds:
        raise ParameterError("base_case needs at least one seed")
    runs = [
        msa_assignment(net, demand, max_iterations, gap_tolerance, seed=s) for s in seeds
    ]
    seg_ids = runs[0].segment_order
    stacked = np.array([[r.volumes[sid] for sid in seg_ids] for r in runs])
    mean_vol = stacked.mean(axis=0)
    return AssignmentResult(
        volumes=dict(zip(seg_ids, mean_vol.tolist())),
        relative_gap=float(np.mean([r.relative_gap for r in runs])),
        iterations=max(r.iterations for r in runs),
        gap_history=[],
        segment_order=seg_ids,
    )


def simulate_scenario(
    net: RoadNetwork,
    scenario: Scenario,
    demand: DemandTable,
    base: AssignmentResult,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    gap_tolerance: float = DEFAULT_GAP_TOLERANCE,
) -> TargetVector:
    """Per-segment volume change: mean policy-case volume minus base volume."""
    for s in net.segments:
        if s.id not in base.volumes:
            raise DataError(f"base result lacks volume for segment {s.id!r}")
    treated_net = apply_policy(net, scenario.policy)
    runs = [
        msa_assignment(treated_net, demand, max_iterations, gap_tolerance, seed=s)
        for s in scenario.seeds
    ]
    seg_ids = runs[0].segment_order
    stacked = np.array([[r.volumes[sid] for sid in seg_ids] for r in runs])
    mean_vol = stacked.mean(axis=0)
    return TargetVector(
        values={sid: float(mean_vol[i] - base.volumes[sid]) for i, sid in enumerate(seg_ids)}
    )


def save_volumes_csv(values: Mapping[str, float], path) -> None:
    """Write `segment_id,value` rows with 12 significant digits, sorted by id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", "value"])
        for sid in sorted(values):
            writer.writerow([sid, f"{values[sid]:.12g}"])


def load_volumes_csv(path) -> dict[str, float]:
    values: dict[str, float] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["segment_id", "value"]:
            raise ParseError(f"{path}: expected header 'segment_id,value', got {header!r}")
        for i, row in enumerate(reader):
            if len(row) != 2:
                raise ParseError(f"{path}: row {i + 2} malformed: {row!r}")
            try:
                values[row[0]] = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}: row {i + 2} has non-numeric value {row[1]!r}") from exc
    return values
