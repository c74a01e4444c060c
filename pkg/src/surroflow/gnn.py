"""Dual-graph surrogate network and its training loop.

The stack: two point-convolution layers that mix node features with relative
endpoint positions, two multi-head attention-convolution layers, and a final
single-head graph-attention layer emitting one scalar per dual node. Targets
are scaled by their training-set standard deviation during optimization and
unscaled for reporting, so metrics stay in vehicles/hour.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .dual import DualGraph, FeatureMatrix, Standardizer, apply_standardizer, fit_standardizer
from .errors import ParameterError, ParseError, ShapeError, TrainingError, UsageError

X0_WIDTH = 5  # static columns plus the variable column
POS_WIDTH = 4


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    transformer_heads: int = 4
    leaky_slope: float = 0.2
    learning_rate: float = 1e-3
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.transformer_heads < 1:
            raise ParameterError("hidden_dim and transformer_heads must be positive")
        if self.hidden_dim % self.transformer_heads != 0:
            raise ParameterError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"transformer_heads {self.transformer_heads}"
            )
        if self.leaky_slope <= 0 or self.learning_rate <= 0:
            raise ParameterError("leaky_slope and learning_rate must be positive")
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ParameterError("patience must be >= 0")


@dataclass
class GraphSample:
    """One scenario ready for the model: shared dual graph, raw features, target."""

    scenario_id: str
    graph: DualGraph
    features: FeatureMatrix
    y: np.ndarray  # (n,) vehicles/hour


@dataclass
class TrainHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based


class SurrogateModel:
    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, Tensor],
        standardizer: Optional[Standardizer],
        target_scale: float,
    ):
        self.config = config
        self.params = params
        self.standardizer = standardizer
        self.target_scale = float(target_scale)

    def param_list(self) -> list[Tensor]:
        return list(self.params.values())


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    limit = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)), requires_grad=True)


def _zeros(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True)


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Parameter tensors in a fixed, checkpoint-stable order."""
    h = config.hidden_dim
    d = h // config.transformer_heads
    params: dict[str, Tensor] = {}

    def mlp(prefix: str, in_width: int) -> None:
        params[f"{prefix}.w1"] = _glorot(rng, in_width, h)
        params[f"{prefix}.b1"] = _zeros(1, h)
        params[f"{prefix}.w2"] = _glorot(rng, h, h)
        params[f"{prefix}.b2"] = _zeros(1, h)

    for layer, in_width in (("pn1", X0_WIDTH), ("pn2", h)):
        mlp(f"{layer}.msg", in_width + POS_WIDTH)
        mlp(f"{layer}.out", h)
    for layer in ("tr1", "tr2"):
        for head in range(config.transformer_heads):
            params[f"{layer}.h{head}.wq"] = _glorot(rng, h, d)
            params[f"{layer}.h{head}.wk"] = _glorot(rng, h, d)
            params[f"{layer}.h{head}.wv"] = _glorot(rng, h, d)
        params[f"{layer}.skip"] = _glorot(rng, h, h)
    params["gat.w"] = _glorot(rng, h, 1)
    params["gat.a"] = _glorot(rng, 2, 1)
    return params


def _with_self_loops(edges: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    loops = np.arange(n_nodes, dtype=np.int64)
    if edges.size:
        src = np.concatenate([edges[:, 0], loops])
        dst = np.concatenate([edges[:, 1], loops])
    else:
        src = loops
        dst = loops.copy()
    return src, dst


def _mlp(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def pointnet_conv(
    x: Tensor,
    pos: np.ndarray,
    edges: np.ndarray,
    params: dict[str, Tensor],
    prefix: str,
) -> Tensor:
    """Max-aggregated messages built from neighbor features and relative positions.

    For node i and neighbor j (self-loop included): the message is an MLP of
    concat(x_j, pos_j - pos_i); messages aggregate by elementwise max and pass
    through a second MLP.
    """
    if x.rows != pos.shape[0]:
        raise ShapeError(f"x has {x.rows} rows but pos has {pos.shape[0]}")
    if pos.shape[1] != POS_WIDTH:
        raise ShapeError(f"pos must have width {POS_WIDTH}, got {pos.shape[1]}")
    n = x.rows
    src, dst = _with_self_loops(edges, n)
    rel = Tensor(pos[src] - pos[dst])
    msg_in = ad.concat_cols(ad.gather_rows(x, src), rel)
    msg = _mlp(msg_in, params, f"{prefix}.msg")
    agg = ad.scatter_max(msg, dst, n)
    return _mlp(agg, params, f"{prefix}.out")


def transformer_conv(
    x: Tensor,
    edges: np.ndarray,
    params: dict[str, Tensor],
    prefix: str,
    heads: int,
) -> Tensor:
    """Multi-head dot-product attention over incoming neighbors plus self-loop."""
    n = x.rows
    src, dst = _with_self_loops(edges, n)
    d = params[f"{prefix}.h0.wq"].cols
    scale = 1.0 / math.sqrt(d)
    head_outputs: list[Tensor] = []
    for head in range(heads):
        q = ad.matmul(x, params[f"{prefix}.h{head}.wq"])
        k = ad.matmul(x, params[f"{prefix}.h{head}.wk"])
        v = ad.matmul(x, params[f"{prefix}.h{head}.wv"])
        scores = ad.smul(ad.row_sum(ad.mul(ad.gather_rows(q, dst), ad.gather_rows(k, src))), scale)
        alpha = ad.segment_softmax(scores, dst)
        weighted = ad.row_scale(ad.gather_rows(v, src), alpha)
        head_outputs.append(ad.scatter_sum(weighted, dst, n))
    out = head_outputs[0]
    for other in head_outputs[1:]:
        out = ad.concat_cols(out, other)
    return ad.add(out, ad.matmul(x, params[f"{prefix}.skip"]))


def gat_conv(
    x: Tensor,
    edges: np.ndarray,
    params: dict[str, Tensor],
    slope: float,
) -> Tensor:
    """Single-head attention output layer, one scalar per node."""
    n = x.rows
    src, dst = _with_self_loops(edges, n)
    wx = ad.matmul(x, params["gat.w"])
    pair = ad.concat_cols(ad.gather_rows(wx, dst), ad.gather_rows(wx, src))
    scores = ad.leaky_relu(ad.matmul(pair, params["gat.a"]), slope)
    alpha = ad.segment_softmax(scores, dst)
    return ad.scatter_sum(ad.row_scale(ad.gather_rows(wx, src), alpha), dst, n)


def _forward_scaled(
    params: dict[str, Tensor],
    config: ModelConfig,
    graph: DualGraph,
    features: FeatureMatrix,
) -> Tensor:
    x0 = Tensor(np.hstack([features.static, features.variable]))
    pos = features.positional
    edges = graph.edges
    x = ad.relu(pointnet_conv(x0, pos, edges, params, "pn1"))
    x = ad.relu(pointnet_conv(x, pos, edges, params, "pn2"))
    x = ad.relu(transformer_conv(x, edges, params, "tr1", config.transformer_heads))
    x = ad.relu(transformer_conv(x, edges, params, "tr2", config.transformer_heads))
    return gat_conv(x, edges, params, config.leaky_slope)


def forward(model: SurrogateModel, graph: DualGraph, features: FeatureMatrix) -> Tensor:
    """Predicted change in volume per dual node, in vehicles/hour."""
    if not features.standardized:
        raise UsageError("forward expects standardized features; apply the standardizer")
    if graph.n_nodes != features.n_rows:
        raise ShapeError(
            f"graph has {graph.n_nodes} nodes but features have {features.n_rows} rows"
        )
    scaled = _forward_scaled(model.params, model.config, graph, features)
    return ad.smul(scaled, model.target_scale)


def mse_loss(predicted: Tensor, target: Tensor) -> Tensor:
    if predicted.shape != target.shape:
        raise ShapeError(f"mse_loss mismatch: {predicted.shape} vs {target.shape}")
    if predicted.rows < 1:
        raise ShapeError("mse_loss needs at least one row")
    diff = ad.sub(predicted, target)
    return ad.mean_all(ad.mul(diff, diff))


def predict(
    model: SurrogateModel, graph: DualGraph, features: FeatureMatrix
) -> tuple[np.ndarray, float]:
    """Forward pass only; returns (predictions, wall-clock seconds).

    Raw features are standardized with the model's own standardizer first.
    """
    if not features.standardized:
        if model.standardizer is None:
            raise UsageError("model has no standardizer; pass standardized features")
        features = apply_standardizer(features, model.standardizer)
    start = time.perf_counter()
    out = forward(model, graph, features)
    duration = time.perf_counter() - start
    return out.values[:, 0].copy(), duration


def _mean_val_mse(
    params: dict[str, Tensor],
    config: ModelConfig,
    samples: Sequence[GraphSample],
    standardizer: Standardizer,
    target_scale: float,
) -> float:
    total = 0.0
    for sample in samples:
        feats = apply_standardizer(sample.features, standardizer)
        yhat = _forward_scaled(params, config, sample.graph, feats).values[:, 0] * target_scale
        total += float(np.mean((yhat - sample.y) ** 2))
    return total / len(samples)


def train(
    config: ModelConfig,
    train_samples: Sequence[GraphSample],
    val_samples: Sequence[GraphSample],
) -> tuple[SurrogateModel, TrainHistory]:
    """Optimize the layer stack with Adam, one step per scenario graph.

    Scenarios are reshuffled every epoch from the config seed. Training stops
    at max_epochs or once validation MSE has not improved for more than
    `patience` consecutive epochs; the returned parameters are those of the
    best validation epoch.
    """
    if not train_samples or not val_samples:
        raise ParameterError("train and validation sample lists must be non-empty")
    standardizer = fit_standardizer([s.features for s in train_samples])
    y_all = np.concatenate([s.y for s in train_samples])
    target_scale = float(y_all.std())
    if target_scale < 1e-12:
        target_scale = 1.0

    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    param_list = list(params.values())
    state = ad.init_adam_state(param_list)

    prepared = [
        (apply_standardizer(s.features, standardizer), s.y[:, None] / target_scale)
        for s in train_samples
    ]

    history = TrainHistory()
    best_val = math.inf
    best_values: list[np.ndarray] = [p.values.copy() for p in param_list]
    epochs_since_best = 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        for i in order:
            feats, y_scaled = prepared[i]
            graph = train_samples[i].graph
            try:
                with Tape() as tape:
                    yhat = _forward_scaled(params, config, graph, feats)
                    loss = mse_loss(yhat, Tensor(y_scaled))
                    loss_value = loss.item()
                    if not math.isfinite(loss_value):
                        raise TrainingError(f"loss diverged at epoch {epoch}")
                    ad.zero_grads(param_list)
                    tape.backward(loss)
            except ad.NonFiniteError as exc:
                raise TrainingError(f"loss diverged at epoch {epoch}: {exc}") from exc
            step += 1
            ad.adam_step(param_list, state, config.learning_rate, t=step)
            epoch_loss += loss_value * target_scale**2
        history.train_mse.append(epoch_loss / len(train_samples))

        val_mse = _mean_val_mse(params, config, val_samples, standardizer, target_scale)
        history.val_mse.append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            best_values = [p.values.copy() for p in param_list]
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best > config.patience:
                break

    for p, best in zip(param_list, best_values):
        p.values = best
    model = SurrogateModel(
        config=config, params=params, standardizer=standardizer, target_scale=target_scale
    )
    return model, history


# ---------------------------------------------------------------------------
# persistence: binary tensor checkpoint plus a JSON sidecar


def _sidecar_path(ckpt_path) -> str:
    text = str(ckpt_path)
    if text.endswith(".ckpt"):
        return text[: -len(".ckpt")] + ".json"
    return text + ".json"


def save_model(model: SurrogateModel, ckpt_path) -> None:
    ad.save_checkpoint(ckpt_path, [(name, t.values) for name, t in model.params.items()])
    cfg = model.config
    sidecar = {
        "config": {
            "hidden_dim": cfg.hidden_dim,
            "transformer_heads": cfg.transformer_heads,
            "leaky_slope": cfg.leaky_slope,
            "learning_rate": cfg.learning_rate,
            "max_epochs": cfg.max_epochs,
            "patience": cfg.patience,
            "seed": cfg.seed,
        },
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "std": model.standardizer.std.tolist(),
        }
        if model.standardizer is not None
        else None,
        "target_scale": model.target_scale,
    }
    with open(_sidecar_path(ckpt_path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_model(ckpt_path) -> SurrogateModel:
    tensors = ad.load_checkpoint(ckpt_path)
    try:
        with open(_sidecar_path(ckpt_path), "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        config = ModelConfig(**sidecar["config"])
        std_doc = sidecar["standardizer"]
        standardizer = (
            Standardizer(mean=np.array(std_doc["mean"]), std=np.array(std_doc["std"]))
            if std_doc is not None
            else None
        )
        target_scale = float(sidecar["target_scale"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"model sidecar for {ckpt_path} is missing or invalid: {exc}") from exc
    params = {name: Tensor(values, requires_grad=True) for name, values in tensors}
    return SurrogateModel(
        config=config, params=params, standardizer=standardizer, target_scale=target_scale
    )
