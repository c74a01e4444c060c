"""Dual-graph transformation and per-segment feature assembly.

The dual (line) graph has one node per road segment, in canonical order
(sorted by segment id), and a directed edge from segment a to segment b
whenever a's head intersection is b's tail, excluding the exact reverse
segment (immediate u-turns carry no equilibrium flow and only add noise).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, ParameterError, ParseError
from .network import RoadNetwork
from .scenario import Policy

STATIC_WIDTH = 4  # base volume, capacity, speed limit, length
POSITIONAL_WIDTH = 4  # start x, start y, end x, end y
VARIABLE_WIDTH = 1  # applied capacity-reduction fraction
FEATURE_WIDTH = STATIC_WIDTH + POSITIONAL_WIDTH + VARIABLE_WIDTH


@dataclass
class DualGraph:
    node_ids: tuple[str, ...]  # segment ids, sorted
    edges: np.ndarray  # (m, 2) int array of (source, target) node indices

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


@dataclass
class FeatureMatrix:
    """Per-dual-node features, rows in canonical node order.

    static:     (n, 4) base-case car volume, capacity, speed limit, length
    positional: (n, 4) start x, start y, end x, end y
    variable:   (n, 1) capacity reduction applied to the segment, 0 if untreated
    """

    static: np.ndarray
    positional: np.ndarray
    variable: np.ndarray
    standardized: bool = False

    def concat(self) -> np.ndarray:
        return np.hstack([self.static, self.positional, self.variable])

    @property
    def n_rows(self) -> int:
        return self.static.shape[0]


@dataclass
class Standardizer:
    """Per-column z-score parameters; zero-variance columns keep (0, 1) identity."""

    mean: np.ndarray  # (9,)
    std: np.ndarray  # (9,)


def to_dual(net: RoadNetwork) -> DualGraph:
    segs = net.sorted_segments()
    index = {s.id: i for i, s in enumerate(segs)}
    outgoing: dict[str, list[int]] = {}
    for i, s in enumerate(segs):
        outgoing.setdefault(s.from_node, []).append(i)
    edges: list[tuple[int, int]] = []
    for ia, a in enumerate(segs):
        for ib in outgoing.get(a.to_node, ()):
            b = segs[ib]
            if b.from_node == a.to_node and b.to_node == a.from_node:
                continue  # u-turn
            edges.append((ia, ib))
    edge_array = np.array(edges, dtype=np.int64) if edges else np.empty((0, 2), dtype=np.int64)
    return DualGraph(node_ids=tuple(s.id for s in segs), edges=edge_array)


def build_features(net: RoadNetwork, policy: Policy, base) -> FeatureMatrix:
    """Assemble the raw (unstandardized) feature matrix for one scenario."""
    segs = net.sorted_segments()
    static = np.empty((len(segs), STATIC_WIDTH))
    positional = np.empty((len(segs), POSITIONAL_WIDTH))
    variable = np.zeros((len(segs), VARIABLE_WIDTH))
    for i, s in enumerate(segs):
        if s.id not in base.volumes:
            raise DataError(f"base result lacks volume for segment {s.id!r}")
        static[i] = (base.volumes[s.id], s.capacity, s.speed_limit, s.length)
        a = net.node(s.from_node)
        b = net.node(s.to_node)
        positional[i] = (a.x, a.y, b.x, b.y)
        if s.road_class in policy.affected_classes and s.district in policy.districts:
            variable[i, 0] = policy.reduction
    return FeatureMatrix(static=static, positional=positional, variable=variable)


def fit_standardizer(features: Sequence[FeatureMatrix]) -> Standardizer:
    """Column means/stds over all rows of the given (training) matrices.

    The four positional columns are standardized jointly per coordinate axis,
    one mean/std for x (columns 4 and 6) and one for y (columns 5 and 7), so
    relative offsets keep their meaning.
    """
    if not features:
        raise ParameterError("fit_standardizer needs at least one feature matrix")
    stacked = np.vstack([fm.concat() for fm in features])
    if stacked.shape[0] < 2:
        raise ParameterError("fit_standardizer needs at least two rows")
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    for cols in ((4, 6), (5, 7)):
        axis_values = stacked[:, cols].ravel()
        mean[list(cols)] = axis_values.mean()
        std[list(cols)] = axis_values.std()
    constant = std < 1e-12
    mean[constant] = 0.0
    std[constant] = 1.0
    return Standardizer(mean=mean, std=std)


def apply_standardizer(features: FeatureMatrix, standardizer: Standardizer) -> FeatureMatrix:
    z = (features.concat() - standardizer.mean) / standardizer.std
    return FeatureMatrix(
        static=z[:, :STATIC_WIDTH],
        positional=z[:, STATIC_WIDTH : STATIC_WIDTH + POSITIONAL_WIDTH],
        variable=z[:, STATIC_WIDTH + POSITIONAL_WIDTH :],
        standardized=True,
    )


_SAMPLE_HEADER = [
    "segment_id",
    "static_0",
    "static_1",
    "static_2",
    "static_3",
    "pos_0",
    "pos_1",
    "pos_2",
    "pos_3",
    "var_0",
    "y",
]


def save_sample_csv(path, node_ids: Sequence[str], features: FeatureMatrix, y: np.ndarray) -> None:
    """One row per dual node: raw features plus the target change in volume."""
    if features.n_rows != len(node_ids) or len(y) != len(node_ids):
        raise ParameterError("node_ids, features and y must have matching lengths")
    full = features.concat()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SAMPLE_HEADER)
        for i, sid in enumerate(node_ids):
            writer.writerow([sid] + [f"{v:.12g}" for v in full[i]] + [f"{y[i]:.12g}"])


def load_sample_csv(path) -> tuple[list[str], FeatureMatrix, np.ndarray]:
    node_ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _SAMPLE_HEADER:
            raise ParseError(f"{path}: unexpected header {header!r}")
        for i, row in enumerate(reader):
            if len(row) != len(_SAMPLE_HEADER):
                raise ParseError(f"{path}: row {i + 2} malformed: {row!r}")
            node_ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}: row {i + 2} has a non-numeric field") from exc
    data = np.array(rows)
    features = FeatureMatrix(
        static=data[:, :STATIC_WIDTH],
        positional=data[:, STATIC_WIDTH : STATIC_WIDTH + POSITIONAL_WIDTH],
        variable=data[:, STATIC_WIDTH + POSITIONAL_WIDTH : FEATURE_WIDTH],
    )
    return node_ids, features, data[:, FEATURE_WIDTH]


def save_dual_csv(graph: DualGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src_segment", "dst_segment"])
        for src, dst in graph.edges:
            writer.writerow([graph.node_ids[src], graph.node_ids[dst]])


def load_dual_csv(path, node_ids: Sequence[str]) -> DualGraph:
    index = {sid: i for i, sid in enumerate(node_ids)}
    edges: list[tuple[int, int]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["src_segment", "dst_segment"]:
            raise ParseError(f"{path}: unexpected header {header!r}")
        for i, row in enumerate(reader):
            if len(row) != 2 or row[0] not in index or row[1] not in index:
                raise ParseError(f"{path}: row {i + 2} names unknown segments: {row!r}")
            edges.append((index[row[0]], index[row[1]]))
    edge_array = np.array(edges, dtype=np.int64) if edges else np.empty((0, 2), dtype=np.int64)
    return DualGraph(node_ids=tuple(node_ids), edges=edge_array)
