"""Command-line pipeline: generate, simulate, build, train, evaluate, export.

Every subcommand reads an optional JSON config (flags override config keys),
writes its artifacts under the output directory and appends a run record to
`manifest.json` so any stage can be reproduced from its recorded inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, assign, dual, gnn, metrics, network, scenario
from .errors import (
    DataError,
    MetricError,
    ParameterError,
    ParseError,
    SurroflowError,
    UsageError,
    ValidationError,
)


@dataclass
class NetworkConfig:
    grid_size: int = 10
    district_count: int = 8
    seed: int = 0


@dataclass
class DemandConfig:
    agent_count: int = 2000
    seed: int = 1


@dataclass
class ScenarioConfig:
    count: int = 200
    mean_size: float = 5.0
    sd_size: float = 2.0
    reduction: float = 0.5
    classes: tuple[str, ...] = ("Primary", "Secondary", "Tertiary")
    policy_seeds: int = 3
    seed: int = 2


@dataclass
class OracleConfig:
    base_seed_count: int = 10
    max_iterations: int = 100
    gap_tolerance: float = 0.01
    seed: int = 3


@dataclass
class SplitConfig:
    ratios: tuple[float, float, float] = (0.8, 0.15, 0.05)
    seed: int = 4


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: gnn.ModelConfig = field(default_factory=gnn.ModelConfig)
    out_dir: str = "runs/default"


_SECTION_TYPES = {
    "network": NetworkConfig,
    "demand": DemandConfig,
    "scenarios": ScenarioConfig,
    "oracle": OracleConfig,
    "split": SplitConfig,
    "model": gnn.ModelConfig,
}


def load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    for section, section_type in _SECTION_TYPES.items():
        if section not in doc:
            continue
        body = doc[section]
        known = {f.name for f in dataclasses.fields(section_type)}
        unknown = set(body) - known
        if unknown:
            raise ParseError(f"{path}: unknown keys in '{section}': {sorted(unknown)}")
        current = getattr(cfg, section)
        merged = {**dataclasses.asdict(current), **body}
        if "classes" in merged and isinstance(merged["classes"], list):
            merged["classes"] = tuple(merged["classes"])
        if "ratios" in merged and isinstance(merged["ratios"], list):
            merged["ratios"] = tuple(merged["ratios"])
        setattr(cfg, section, section_type(**merged))
    if "out_dir" in doc:
        cfg.out_dir = str(doc["out_dir"])
    return cfg


def _apply_master_seed(cfg: RunConfig, master: int) -> None:
    cfg.network.seed = master
    cfg.demand.seed = master + 1
    cfg.scenarios.seed = master + 2
    cfg.oracle.seed = master + 3
    cfg.split.seed = master + 4
    cfg.model = dataclasses.replace(cfg.model, seed=master + 5)


def config_as_dict(cfg: RunConfig) -> dict:
    doc = {name: dataclasses.asdict(getattr(cfg, name)) for name in _SECTION_TYPES}
    doc["out_dir"] = cfg.out_dir
    return doc


def record_run(out_dir: Path, subcommand: str, cfg: RunConfig, inputs: list[str],
               outputs: list[str], wall_clock_s: float) -> None:
    manifest_path = out_dir / "manifest.json"
    doc = {"runs": []}
    if manifest_path.exists():
        try:
            with open(manifest_path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError:
            doc = {"runs": []}
    doc.setdefault("runs", []).append(
        {
            "subcommand": subcommand,
            "version": __version__,
            "config": config_as_dict(cfg),
            "inputs": inputs,
            "outputs": outputs,
            "wall_clock_s": round(wall_clock_s, 3),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
    )
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pipeline stages


def _paths(out_dir: Path) -> dict[str, Path]:
    return {
        "network": out_dir / "network.json",
        "demand": out_dir / "demand.json",
        "scenarios": out_dir / "scenarios.json",
        "split": out_dir / "split.json",
        "base_volumes": out_dir / "base_volumes.csv",
        "targets": out_dir / "targets",
        "dual_edges": out_dir / "dataset" / "dual_edges.csv",
        "samples": out_dir / "dataset" / "samples",
        "model": out_dir / "model.ckpt",
        "history": out_dir / "history.csv",
        "report_csv": out_dir / "report.csv",
        "report_txt": out_dir / "report.txt",
        "per_scenario": out_dir / "per_scenario.csv",
        "predictions": out_dir / "predictions",
        "maps": out_dir / "maps",
    }


def cmd_gen_network(cfg: RunConfig, out_dir: Path) -> list[str]:
    net = network.generate_synthetic_city(
        cfg.network.grid_size, cfg.network.district_count, cfg.network.seed
    )
    path = _paths(out_dir)["network"]
    network.save_network(net, path)
    print(f"wrote {path} ({len(net.intersections)} intersections, {len(net.segments)} segments)")
    return [str(path)]


def save_demand(demand: assign.DemandTable, path) -> None:
    doc = {"trips": [{"origin": o, "dest": d, "count": c} for o, d, c in demand.trips]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_demand(path) -> assign.DemandTable:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    try:
        trips = tuple(
            (str(t["origin"]), str(t["dest"]), float(t["count"])) for t in doc["trips"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed trip record ({exc})") from exc
    return assign.DemandTable(trips=trips)


def cmd_gen_demand(cfg: RunConfig, out_dir: Path) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    demand = assign.generate_demand(net, cfg.demand.agent_count, cfg.demand.seed)
    save_demand(demand, paths["demand"])
    print(f"wrote {paths['demand']} ({len(demand.trips)} od pairs, {demand.total():.0f} trips)")
    return [str(paths["demand"])]


def _distinct_seeds(rng: np.random.Generator, count: int) -> tuple[int, ...]:
    seeds: list[int] = []
    while len(seeds) < count:
        candidate = int(rng.integers(0, 2**31))
        if candidate not in seeds:
            seeds.append(candidate)
    return tuple(seeds)


def cmd_gen_scenarios(cfg: RunConfig, out_dir: Path) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    sc = cfg.scenarios
    if sc.count < 1:
        raise ParameterError("scenario count must be >= 1")
    rng = np.random.default_rng(sc.seed)
    scenarios = []
    for i in range(sc.count):
        districts = scenario.sample_district_combination(
            int(rng.integers(0, 2**31)), net.district_count, sc.mean_size, sc.sd_size
        )
        policy = scenario.build_policy(districts, sc.reduction, sc.classes)
        scenarios.append(
            scenario.Scenario(
                id=f"sc{i:05d}", policy=policy, seeds=_distinct_seeds(rng, sc.policy_seeds)
            )
        )
    scenario.save_scenarios(scenarios, paths["scenarios"])
    split = scenario.split_dataset(
        [s.id for s in scenarios], cfg.split.ratios, cfg.split.seed
    )
    scenario.save_split(split, paths["split"])
    mean_size = float(np.mean([len(s.policy.districts) for s in scenarios]))
    print(
        f"wrote {paths['scenarios']} ({sc.count} scenarios, mean district count "
        f"{mean_size:.2f}) and {paths['split']} "
        f"({len(split.train)}/{len(split.validation)}/{len(split.test)})"
    )
    return [str(paths["scenarios"]), str(paths["split"])]


def cmd_simulate(cfg: RunConfig, out_dir: Path, workers: int = 1) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    demand = load_demand(paths["demand"])
    scenarios = scenario.load_scenarios(paths["scenarios"])
    oracle = cfg.oracle
    base_seeds = list(range(oracle.seed, oracle.seed + oracle.base_seed_count))
    base = assign.base_case(
        net, demand, base_seeds, oracle.max_iterations, oracle.gap_tolerance
    )
    assign.save_volumes_csv(base.volumes, paths["base_volumes"])
    paths["targets"].mkdir(parents=True, exist_ok=True)
    written = [str(paths["base_volumes"])]

    def run_one(sc: scenario.Scenario) -> None:
        target = assign.simulate_scenario(
            net, sc, demand, base, oracle.max_iterations, oracle.gap_tolerance
        )
        assign.save_volumes_csv(target.values, paths["targets"] / f"{sc.id}.csv")

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_one, scenarios))
    else:
        for sc in scenarios:
            run_one(sc)
    written.append(str(paths["targets"]))
    print(
        f"wrote base volumes (mean gap {base.relative_gap:.4f}) and "
        f"{len(scenarios)} target files under {paths['targets']}"
    )
    return written


def cmd_build_dataset(cfg: RunConfig, out_dir: Path) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    scenarios = scenario.load_scenarios(paths["scenarios"])
    base_volumes = assign.load_volumes_csv(paths["base_volumes"])
    base = assign.AssignmentResult(volumes=base_volumes, relative_gap=0.0, iterations=0)
    graph = dual.to_dual(net)
    paths["dual_edges"].parent.mkdir(parents=True, exist_ok=True)
    dual.save_dual_csv(graph, paths["dual_edges"])
    paths["samples"].mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        features = dual.build_features(net, sc.policy, base)
        target_path = paths["targets"] / f"{sc.id}.csv"
        if not target_path.exists():
            raise DataError(f"missing target file {target_path}; run simulate first")
        targets = assign.load_volumes_csv(target_path)
        y = np.array([targets[sid] for sid in graph.node_ids])
        dual.save_sample_csv(paths["samples"] / f"{sc.id}.csv", graph.node_ids, features, y)
    print(
        f"wrote {paths['dual_edges']} ({len(graph.edges)} dual edges) and "
        f"{len(scenarios)} sample files under {paths['samples']}"
    )
    return [str(paths["dual_edges"]), str(paths["samples"])]


def _load_samples(out_dir: Path, scenario_ids: Sequence[str]) -> list[gnn.GraphSample]:
    paths = _paths(out_dir)
    samples: list[gnn.GraphSample] = []
    graph: Optional[dual.DualGraph] = None
    for sid in scenario_ids:
        sample_path = paths["samples"] / f"{sid}.csv"
        if not sample_path.exists():
            raise DataError(f"missing sample file {sample_path}; run build-dataset first")
        node_ids, features, y = dual.load_sample_csv(sample_path)
        if graph is None:
            graph = dual.load_dual_csv(paths["dual_edges"], node_ids)
        samples.append(
            gnn.GraphSample(scenario_id=sid, graph=graph, features=features, y=y)
        )
    return samples


def cmd_train(cfg: RunConfig, out_dir: Path) -> list[str]:
    paths = _paths(out_dir)
    split = scenario.load_split(paths["split"])
    train_samples = _load_samples(out_dir, split.train)
    val_samples = _load_samples(out_dir, split.validation)
    model, history = gnn.train(cfg.model, train_samples, val_samples)
    gnn.save_model(model, paths["model"])
    with open(paths["history"], "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for i, (tr, va) in enumerate(zip(history.train_mse, history.val_mse), start=1):
            fh.write(f"{i},{tr:.6f},{va:.6f}\n")
    print(
        f"trained {len(history.train_mse)} epochs, best validation MSE "
        f"{min(history.val_mse):.3f} at epoch {history.best_epoch}; wrote {paths['model']}"
    )
    return [str(paths["model"]), str(paths["history"])]


def _segment_classes(net: network.RoadNetwork) -> np.ndarray:
    return np.array([s.road_class for s in net.sorted_segments()])


def cmd_evaluate(cfg: RunConfig, out_dir: Path) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    split = scenario.load_split(paths["split"])
    if not split.test:
        raise DataError("test split is empty; nothing to evaluate")
    model = gnn.load_model(paths["model"])
    samples = _load_samples(out_dir, split.test)
    classes = _segment_classes(net)

    pooled_y: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    pooled_classes: list[np.ndarray] = []
    pooled_mask: list[np.ndarray] = []
    per_scenario_rows = []
    for sample in samples:
        y_hat, _ = gnn.predict(model, sample.graph, sample.features)
        mask = sample.features.variable[:, 0] > 0
        pooled_y.append(sample.y)
        pooled_pred.append(y_hat)
        pooled_classes.append(classes)
        pooled_mask.append(mask)
        per_scenario_rows.append(
            {
                "scenario_id": sample.scenario_id,
                "mse": metrics.mse(sample.y, y_hat),
                "naive_mse": metrics.naive_mse(sample.y),
                "r2": metrics.r_squared(sample.y, y_hat),
            }
        )
    report = metrics.subset_report(
        np.concatenate(pooled_y),
        np.concatenate(pooled_pred),
        np.concatenate(pooled_classes),
        np.concatenate(pooled_mask),
    )
    metrics.save_report_csv(report, paths["report_csv"])
    text = metrics.format_report(report)
    with open(paths["report_txt"], "w", encoding="utf-8") as fh:
        fh.write(text)
    metrics.save_per_scenario_csv(per_scenario_rows, paths["per_scenario"])
    print(text, end="")
    return [str(paths["report_csv"]), str(paths["report_txt"]), str(paths["per_scenario"])]


def cmd_predict(cfg: RunConfig, out_dir: Path, scenario_id: Optional[str]) -> list[str]:
    paths = _paths(out_dir)
    split = scenario.load_split(paths["split"])
    ids = [scenario_id] if scenario_id else list(split.test)
    if not ids:
        raise DataError("no scenarios to predict")
    model = gnn.load_model(paths["model"])
    samples = _load_samples(out_dir, ids)
    paths["predictions"].mkdir(parents=True, exist_ok=True)
    written = []
    for sample in samples:
        y_hat, seconds = gnn.predict(model, sample.graph, sample.features)
        out_path = paths["predictions"] / f"{sample.scenario_id}.csv"
        assign.save_volumes_csv(dict(zip(sample.graph.node_ids, y_hat)), out_path)
        written.append(str(out_path))
        print(
            f"{sample.scenario_id}: mse={metrics.mse(sample.y, y_hat):.3f} "
            f"r2={metrics.r_squared(sample.y, y_hat):.3f} inference_s={seconds:.4f}"
        )
    return written


def export_map(
    net: network.RoadNetwork,
    values: dict[str, float],
    base_volumes: dict[str, float],
    path,
    policy: Optional[scenario.Policy] = None,
) -> None:
    """GeoJSON FeatureCollection of segment LineStrings with change properties.

    change_pct uses a denominator floor of 1 vehicle/hour and clamps to
    [-100, 500] for display.
    """
    treated = scenario.treated_segment_ids(net, policy) if policy is not None else set()
    features = []
    for s in net.sorted_segments():
        if s.id not in values:
            raise DataError(f"no value for segment {s.id!r}")
        if s.id not in base_volumes:
            raise DataError(f"no base volume for segment {s.id!r}")
        a, b = net.node(s.from_node), net.node(s.to_node)
        change = values[s.id]
        pct = 100.0 * change / max(base_volumes[s.id], 1.0)
        pct = min(500.0, max(-100.0, pct))
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[a.x, a.y], [b.x, b.y]],
                },
                "properties": {
                    "segment_id": s.id,
                    "change_abs": change,
                    "change_pct": pct,
                    "road_class": s.road_class,
                    "treated": s.id in treated,
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def cmd_export_map(cfg: RunConfig, out_dir: Path, scenario_id: str, source: str) -> list[str]:
    paths = _paths(out_dir)
    net = network.load_network(paths["network"])
    scenarios = {sc.id: sc for sc in scenario.load_scenarios(paths["scenarios"])}
    if scenario_id not in scenarios:
        raise ParameterError(f"unknown scenario {scenario_id!r}")
    if source == "actual":
        values_path = paths["targets"] / f"{scenario_id}.csv"
    elif source == "predicted":
        values_path = paths["predictions"] / f"{scenario_id}.csv"
    else:
        raise ParameterError(f"source must be 'actual' or 'predicted', got {source!r}")
    if not values_path.exists():
        raise DataError(f"missing values file {values_path}")
    values = assign.load_volumes_csv(values_path)
    base_volumes = assign.load_volumes_csv(paths["base_volumes"])
    paths["maps"].mkdir(parents=True, exist_ok=True)
    out_path = paths["maps"] / f"{scenario_id}_{source}.geojson"
    export_map(net, values, base_volumes, out_path, scenarios[scenario_id].policy)
    print(f"wrote {out_path}")
    return [str(out_path)]


# ---------------------------------------------------------------------------
# argument parsing and dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); validation errors exit 1
        raise ParameterError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="surroflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="master seed applied to every stage")
        p.add_argument(
            "--error-json",
            action="store_true",
            help="print a machine-readable JSON error to stderr on failure",
        )

    p = sub.add_parser("gen-network", help="generate the synthetic city")
    common(p)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--district-count", type=int)

    p = sub.add_parser("gen-demand", help="generate origin-destination demand")
    common(p)
    p.add_argument("--agents", type=int)

    p = sub.add_parser("gen-scenarios", help="sample policy scenarios and the split")
    common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--mean-size", type=float)
    p.add_argument("--sd-size", type=float)
    p.add_argument("--reduction", type=float)
    p.add_argument("--policy-seeds", type=int)

    p = sub.add_parser("simulate", help="run the oracle: base case and per-scenario targets")
    common(p)
    p.add_argument("--base-seeds", type=int, help="number of base-case seeds")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--gap-tolerance", type=float)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("build-dataset", help="assemble dual graph and per-scenario samples")
    common(p)

    p = sub.add_parser("train", help="train the surrogate model")
    common(p)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)

    p = sub.add_parser("evaluate", help="report metrics on the test split")
    common(p)

    p = sub.add_parser("predict", help="write and time model predictions")
    common(p)
    p.add_argument("--scenario", help="predict a single scenario id")

    p = sub.add_parser("export-map", help="export a change map as GeoJSON")
    common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--source", choices=("actual", "predicted"), default="actual")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        _apply_master_seed(cfg, args.seed)
    if getattr(args, "out", None):
        cfg.out_dir = args.out

    def override(section: str, key: str, value) -> None:
        if value is None:
            return
        current = getattr(cfg, section)
        setattr(cfg, section, dataclasses.replace(current, **{key: value}))

    override("network", "grid_size", getattr(args, "grid_size", None))
    override("network", "district_count", getattr(args, "district_count", None))
    override("demand", "agent_count", getattr(args, "agents", None))
    override("scenarios", "count", getattr(args, "count", None))
    override("scenarios", "mean_size", getattr(args, "mean_size", None))
    override("scenarios", "sd_size", getattr(args, "sd_size", None))
    override("scenarios", "reduction", getattr(args, "reduction", None))
    override("scenarios", "policy_seeds", getattr(args, "policy_seeds", None))
    override("oracle", "base_seed_count", getattr(args, "base_seeds", None))
    override("oracle", "max_iterations", getattr(args, "max_iterations", None))
    override("oracle", "gap_tolerance", getattr(args, "gap_tolerance", None))
    override("model", "hidden_dim", getattr(args, "hidden_dim", None))
    override("model", "transformer_heads", getattr(args, "heads", None))
    override("model", "learning_rate", getattr(args, "learning_rate", None))
    override("model", "max_epochs", getattr(args, "max_epochs", None))
    override("model", "patience", getattr(args, "patience", None))
    return cfg


_VALIDATION_ERRORS = (ParameterError, ValidationError, ParseError, UsageError, MetricError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    error_json = False
    try:
        args = parser.parse_args(argv)
        error_json = getattr(args, "error_json", False)
        cfg = _resolve_config(args)
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        inputs = [args.config] if getattr(args, "config", None) else []
        if args.subcommand == "gen-network":
            outputs = cmd_gen_network(cfg, out_dir)
        elif args.subcommand == "gen-demand":
            outputs = cmd_gen_demand(cfg, out_dir)
        elif args.subcommand == "gen-scenarios":
            outputs = cmd_gen_scenarios(cfg, out_dir)
        elif args.subcommand == "simulate":
            outputs = cmd_simulate(cfg, out_dir, workers=args.workers)
        elif args.subcommand == "build-dataset":
            outputs = cmd_build_dataset(cfg, out_dir)
        elif args.subcommand == "train":
            outputs = cmd_train(cfg, out_dir)
        elif args.subcommand == "evaluate":
            outputs = cmd_evaluate(cfg, out_dir)
        elif args.subcommand == "predict":
            outputs = cmd_predict(cfg, out_dir, getattr(args, "scenario", None))
        elif args.subcommand == "export-map":
            outputs = cmd_export_map(cfg, out_dir, args.scenario, args.source)
        else:  # pragma: no cover - argparse enforces choices
            raise ParameterError(f"unknown subcommand {args.subcommand!r}")
        record_run(
            out_dir, args.subcommand, cfg, inputs, outputs, time.perf_counter() - started
        )
        return 0
    except _VALIDATION_ERRORS as exc:
        _report_error(exc, 1, error_json)
        return 1
    except (SurroflowError, OSError) as exc:
        _report_error(exc, 2, error_json)
        return 2


def _report_error(exc: Exception, code: int, as_json: bool) -> None:
    print(f"error: {exc}", file=sys.stderr)
    if as_json:
        doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(doc), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
