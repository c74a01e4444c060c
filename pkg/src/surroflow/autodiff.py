"""Minimal reverse-mode autodiff on dense 2-D float64 tensors.

Operations record onto the active Tape (a thread-local stack, entered via
``with Tape():``). Without an active tape they run in inference mode: values
are computed but nothing is recorded. ``Tape.backward(loss)`` walks the
recorded entries once in reverse, accumulating adjoints into each
requires-grad tensor's ``grad`` field; repeated calls accumulate.

Every forward result is checked for NaN/Inf so numerical blow-ups surface at
the op that produced them instead of corrupting a training run silently.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteError, ParseError, ShapeError, UsageError

_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def _active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A (rows, cols) float64 array, optionally tracking gradients."""

    __slots__ = ("values", "requires_grad", "_grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor values must be finite")
        self.values = arr
        self.requires_grad = requires_grad
        self._grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def grad(self) -> Optional[np.ndarray]:
        if self.requires_grad and self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def zero_grad(self) -> None:
        if self._grad is not None:
            self._grad[...] = 0.0

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Entry:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[tuple[Tensor, np.ndarray]]]


class Tape:
    """Ordered record of operations; supports one reverse sweep per backward call."""

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def backward(self, loss: Tensor) -> None:
        """Accumulate d loss / d tensor into every requires-grad tensor's grad."""
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar 1x1 loss, got {loss.shape}")
        if not self.entries:
            raise UsageError("backward on an empty tape")
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        touched: dict[int, Tensor] = {id(loss): loss}
        for entry in reversed(self.entries):
            g = adjoints.get(id(entry.out))
            if g is None:
                continue
            for tensor, contribution in entry.backward(g):
                if not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + contribution
                else:
                    adjoints[key] = contribution
                    touched[key] = tensor
        for key, tensor in touched.items():
            if tensor.requires_grad:
                tensor.grad[...] += adjoints[key]


def backward(loss: Tensor) -> None:
    """Backward through the currently active tape."""
    tape = _active_tape()
    if tape is None:
        raise UsageError("backward called with no active tape")
    tape.backward(loss)


def _finish(out_values: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(out_values)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.requires_grad = any(t.requires_grad for t in inputs)
    out._grad = None
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.entries.append(_Entry(out=out, inputs=inputs, backward=backward_fn))
    return out


# ---------------------------------------------------------------------------
# dense ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul mismatch: {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def bwd(g):
        return [(a, g @ b.values.T), (b, a.values.T @ g)]

    return _finish(out, (a, b), bwd, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; b may be a 1 x cols row vector broadcast over rows."""
    broadcast = b.shape == (1, a.cols) and a.rows != 1
    if not broadcast and a.shape != b.shape:
        raise ShapeError(f"add mismatch: {a.shape} + {b.shape}")
    out = a.values + b.values

    def bwd(g):
        gb = g.sum(axis=0, keepdims=True) if broadcast else g
        return [(a, g), (b, gb)]

    return _finish(out, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub mismatch: {a.shape} - {b.shape}")
    out = a.values - b.values

    def bwd(g):
        return [(a, g), (b, -g)]

    return _finish(out, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul mismatch: {a.shape} * {b.shape}")
    out = a.values * b.values

    def bwd(g):
        return [(a, g * b.values), (b, g * a.values)]

    return _finish(out, (a, b), bwd, "mul")


def smul(a: Tensor, scalar: float) -> Tensor:
    c = float(scalar)
    out = a.values * c

    def bwd(g):
        return [(a, g * c)]

    return _finish(out, (a,), bwd, "smul")


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    out = np.hstack([a.values, b.values])
    split = a.cols

    def bwd(g):
        return [(a, g[:, :split]), (b, g[:, split:])]

    return _finish(out, (a, b), bwd, "concat_cols")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.values, 0.0)
    mask = a.values > 0.0  # subgradient at 0 is 0

    def bwd(g):
        return [(a, g * mask)]

    return _finish(out, (a,), bwd, "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.values > 0.0, 1.0, float(slope))
    out = a.values * factor

    def bwd(g):
        return [(a, g * factor)]

    return _finish(out, (a,), bwd, "leaky_relu")


def row_scale(a: Tensor, s: Tensor) -> Tensor:
    """Scale row i of a by s[i, 0]."""
    if s.shape != (a.rows, 1):
        raise ShapeError(f"row_scale needs s of shape ({a.rows}, 1), got {s.shape}")
    out = a.values * s.values

    def bwd(g):
        return [(a, g * s.values), (s, (g * a.values).sum(axis=1, keepdims=True))]

    return _finish(out, (a, s), bwd, "row_scale")


def row_sum(a: Tensor) -> Tensor:
    out = a.values.sum(axis=1, keepdims=True)

    def bwd(g):
        return [(a, np.broadcast_to(g, a.shape).copy())]

    return _finish(out, (a,), bwd, "row_sum")


def sum_all(a: Tensor) -> Tensor:
    out = np.array([[a.values.sum()]])

    def bwd(g):
        return [(a, np.full(a.shape, g[0, 0]))]

    return _finish(out, (a,), bwd, "sum_all")


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    out = np.array([[a.values.mean()]])

    def bwd(g):
        return [(a, np.full(a.shape, g[0, 0] / n))]

    return _finish(out, (a,), bwd, "mean_all")


# ---------------------------------------------------------------------------
# graph ops


def _check_index(index, limit: int, op: str) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= limit):
        raise IndexError(f"{op}: index out of range [0, {limit})")
    return idx


def gather_rows(a: Tensor, index) -> Tensor:
    idx = _check_index(index, a.rows, "gather_rows")
    out = a.values[idx]

    def bwd(g):
        ga = np.zeros_like(a.values)
        np.add.at(ga, idx, g)
        return [(a, ga)]

    return _finish(out, (a,), bwd, "gather_rows")


def scatter_sum(a: Tensor, index, out_rows: int) -> Tensor:
    idx = _check_index(index, out_rows, "scatter_sum")
    if idx.size != a.rows:
        raise ShapeError(f"scatter_sum: index length {idx.size} != rows {a.rows}")
    out = np.zeros((out_rows, a.cols))
    np.add.at(out, idx, a.values)

    def bwd(g):
        return [(a, g[idx])]

    return _finish(out, (a,), bwd, "scatter_sum")


def scatter_max(a: Tensor, index, out_rows: int) -> Tensor:
    """Per-column max of rows sharing an index; empty output rows fill with 0.

    The gradient routes to each column's argmax row, first occurrence on ties,
    and is zero for filled (empty) rows.
    """
    idx = _check_index(index, out_rows, "scatter_max")
    if idx.size != a.rows:
        raise ShapeError(f"scatter_max: index length {idx.size} != rows {a.rows}")
    out = np.full((out_rows, a.cols), -np.inf)
    np.maximum.at(out, idx, a.values)
    counts = np.bincount(idx, minlength=out_rows)
    out[counts == 0] = 0.0

    # first-occurrence argmax per (output row, column)
    winners = a.values == out[idx]
    row_numbers = np.where(winners, np.arange(a.rows)[:, None], np.iinfo(np.int64).max)
    argmin_buf = np.full((out_rows, a.cols), np.iinfo(np.int64).max)
    np.minimum.at(argmin_buf, idx, row_numbers)

    def bwd(g):
        ga = np.zeros_like(a.values)
        valid_rows, valid_cols = np.nonzero(argmin_buf != np.iinfo(np.int64).max)
        src = argmin_buf[valid_rows, valid_cols]
        np.add.at(ga, (src, valid_cols), g[valid_rows, valid_cols])
        return [(a, ga)]

    return _finish(out, (a,), bwd, "scatter_max")


def segment_softmax(scores: Tensor, segment_index) -> Tensor:
    """Softmax of a (n, 1) score column within groups sharing a segment index."""
    if scores.cols != 1:
        raise ShapeError(f"segment_softmax needs (n, 1) scores, got {scores.shape}")
    idx = _check_index(segment_index, np.iinfo(np.int64).max, "segment_softmax")
    if idx.size != scores.rows:
        raise ShapeError(
            f"segment_softmax: index length {idx.size} != rows {scores.rows}"
        )
    n_segments = int(idx.max()) + 1 if idx.size else 0
    z = scores.values[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, idx, z)
    e = np.exp(z - seg_max[idx])
    seg_sum = np.zeros(n_segments)
    np.add.at(seg_sum, idx, e)
    p = (e / seg_sum[idx])[:, None]

    def bwd(g):
        gp = g[:, 0] * p[:, 0]
        seg_dot = np.zeros(n_segments)
        np.add.at(seg_dot, idx, gp)
        gz = gp - p[:, 0] * seg_dot[idx]
        return [(scores, gz[:, None])]

    return _finish(p, (scores,), bwd, "segment_softmax")


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init_adam_state(params: Sequence[Tensor]) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p.values) for p in params],
        v=[np.zeros_like(p.values) for p in params],
    )


def adam_step(
    params: Sequence[Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
) -> None:
    """Standard bias-corrected Adam update; gradients are left untouched."""
    if t < 1:
        raise UsageError("adam_step requires t >= 1")
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# checkpoint format
#
# Binary layout (all integers little-endian unsigned 64-bit):
#   magic   8 bytes  b"SFTENS01"
#   count   u64      number of tensors
#   then per tensor, in order:
#     name_len u64, name utf-8 bytes,
#     rows u64, cols u64,
#     rows*cols float64 little-endian, row-major

_MAGIC = b"SFTENS01"


def save_checkpoint(path, named_tensors: Sequence[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(named_tensors)))
        for name, values in named_tensors:
            arr = np.ascontiguousarray(np.atleast_2d(values), dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ParseError(f"{path}: not a tensor checkpoint (bad magic)")
    offset = len(_MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise ParseError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (count,) = take("<Q")
    tensors: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (name_len,) = take("<Q")
        if offset + name_len > len(blob):
            raise ParseError(f"{path}: truncated checkpoint")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = take("<QQ")
        n_bytes = rows * cols * 8
        if offset + n_bytes > len(blob):
            raise ParseError(f"{path}: truncated tensor {name!r}")
        arr = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset).reshape(
            rows, cols
        )
        offset += n_bytes
        tensors.append((name, arr.astype(np.float64)))
    return tensors
