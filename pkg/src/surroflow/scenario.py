"""Capacity-reduction policies, scenario sampling and dataset splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParameterError, ParseError
from .network import ROAD_CLASSES, RoadNetwork, with_segments

DEFAULT_REDUCTION = 0.5
DEFAULT_AFFECTED_CLASSES = frozenset({"Primary", "Secondary", "Tertiary"})


@dataclass(frozen=True)
class Policy:
    """A capacity reduction applied to selected road classes in selected districts."""

    districts: frozenset[int]
    reduction: float = DEFAULT_REDUCTION
    affected_classes: frozenset[str] = DEFAULT_AFFECTED_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "districts", frozenset(self.districts))
        object.__setattr__(self, "affected_classes", frozenset(self.affected_classes))
        if not self.districts:
            raise ParameterError("policy needs at least one district")
        if not (0.0 < self.reduction <= 1.0):
            raise ParameterError(f"reduction must be in (0, 1], got {self.reduction}")
        if not self.affected_classes:
            raise ParameterError("policy needs at least one affected road class")
        unknown = self.affected_classes - set(ROAD_CLASSES)
        if unknown:
            raise ParameterError(f"unknown road classes: {sorted(unknown)}")


@dataclass(frozen=True)
class Scenario:
    id: str
    policy: Policy
    seeds: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ParameterError(f"scenario {self.id!r}: needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ParameterError(f"scenario {self.id!r}: seeds must be pairwise distinct")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def sample_district_combination(
    rng_seed: int,
    district_count: int,
    mean_size: float = 5.0,
    sd_size: float = 2.0,
) -> set[int]:
    """Draw a district subset whose size follows Normal(mean_size, sd_size).

    The size is rounded half-away-from-zero and clamped to [1, district_count];
    members are drawn uniformly without replacement. Deterministic per seed.
    """
    if district_count < 1:
        raise ParameterError("district_count must be >= 1")
    if mean_size <= 0:
        raise ParameterError("mean_size must be > 0")
    if sd_size < 0:
        raise ParameterError("sd_size must be >= 0")
    rng = np.random.default_rng(rng_seed)
    raw = rng.normal(mean_size, sd_size)
    size = max(1, min(district_count, _round_half_away(raw)))
    members = rng.choice(district_count, size=size, replace=False)
    return {int(d) for d in members}


def build_policy(
    districts: Iterable[int],
    reduction: float = DEFAULT_REDUCTION,
    classes: Optional[Iterable[str]] = None,
) -> Policy:
    """Policy with the standard defaults: 50% reduction on Primary/Secondary/Tertiary."""
    affected = DEFAULT_AFFECTED_CLASSES if classes is None else frozenset(classes)
    return Policy(districts=frozenset(districts), reduction=reduction, affected_classes=affected)


def apply_policy(net: RoadNetwork, policy: Policy) -> RoadNetwork:
    """Copy of the network with treated segments' capacity scaled by (1 - reduction).

    A full closure (reduction = 1.0) floors capacity at 1 vehicle/hour so the
    congestion function stays defined. The input network is left unmodified.
    """
    for d in policy.districts:
        if not (0 <= d < net.district_count):
            raise ParameterError(f"district {d} outside [0, {net.district_count})")
    new_segments = []
    for s in net.segments:
        if s.road_class in policy.affected_classes and s.district in policy.districts:
            new_cap = s.capacity * (1.0 - policy.reduction)
            if new_cap <= 0.0:
                new_cap = 1.0
            new_segments.append(replace(s, capacity=new_cap))
        else:
            new_segments.append(s)
    return with_segments(net, new_segments)


def treated_segment_ids(net: RoadNetwork, policy: Policy) -> set[str]:
    """Segments the policy actually modifies (class and district both match)."""
    return {
        s.id
        for s in net.segments
        if s.road_class in policy.affected_classes and s.district in policy.districts
    }


def split_dataset(
    scenario_ids: Sequence[str],
    ratios: tuple[float, float, float] = (0.8, 0.15, 0.05),
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic shuffled split; rounding remainders land in the train part."""
    if len(scenario_ids) < 3:
        raise ParameterError(f"need at least 3 scenarios to split, got {len(scenario_ids)}")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ParameterError(f"ratios must be three positive numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {sum(ratios)!r}")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(scenario_ids)))
    shuffled = [scenario_ids[i] for i in order]
    n = len(shuffled)
    n_val = _round_half_away(ratios[1] * n)
    n_test = _round_half_away(ratios[2] * n)
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
    )


def _class_sort_key(cls: str) -> int:
    return ROAD_CLASSES.index(cls)


def save_scenarios(scenarios: Sequence[Scenario], path) -> None:
    doc = [
        {
            "id": sc.id,
            "districts": sorted(sc.policy.districts),
            "reduction": sc.policy.reduction,
            "classes": sorted(sc.policy.affected_classes, key=_class_sort_key),
            "seeds": list(sc.seeds),
        }
        for sc in scenarios
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_scenarios(path) -> list[Scenario]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON list of scenarios")
    scenarios = []
    for i, rec in enumerate(doc):
        try:
            scenarios.append(
                Scenario(
                    id=str(rec["id"]),
                    policy=Policy(
                        districts=frozenset(int(d) for d in rec["districts"]),
                        reduction=float(rec["reduction"]),
                        affected_classes=frozenset(str(c) for c in rec["classes"]),
                    ),
                    seeds=tuple(int(s) for s in rec["seeds"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            rec_name = rec.get("id", i) if isinstance(rec, dict) else i
            raise ParseError(f"scenario record {rec_name!r}: {exc}") from exc
    return scenarios


def save_split(split: DatasetSplit, path) -> None:
    doc = {"train": list(split.train), "val": list(split.validation), "test": list(split.test)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_split(path) -> DatasetSplit:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return DatasetSplit(
            train=tuple(str(s) for s in doc["train"]),
            validation=tuple(str(s) for s in doc["val"]),
            test=tuple(str(s) for s in doc["test"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing split section ({exc})") from exc
