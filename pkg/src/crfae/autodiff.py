"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

The computation graph is rebuilt for every sentence, so nodes are plain
Python objects holding a value, a lazily allocated gradient, and a backward
closure.  Only the primitives the tagger's graph needs are provided: matmul,
broadcast add/mul, concat/stack, sigmoid/tanh/relu, max-over-time pooling,
dropout mask application, log-sum-exp, elementwise binary cross-entropy and
scalar-weighted sums.  There is no GPU path and no operator fusion.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, *shapes):
        self.primitive = primitive
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{primitive}: incompatible shapes {rendered}")


class Value:
    """One node of the tape: a dense array plus gradient bookkeeping.

    ``grad`` has the same shape as ``data`` once allocated.  Non-leaf nodes
    carry a backward closure; after :func:`backward` has consumed a graph the
    closures are dropped, so calling it twice on the same loss raises.
    """

    __slots__ = ("data", "grad", "name", "trainable", "_parents", "_backward", "_consumed")

    def __init__(
        self,
        data,
        parents: tuple["Value", ...] = (),
        backward: Callable[[], None] | None = None,
        name: str | None = None,
        trainable: bool = False,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.name = name
        self.trainable = trainable
        self._parents = parents
        self._backward = backward
        self._consumed = False

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = self.name or ("param" if self.trainable else "node")
        return f"Value({tag}, shape={self.shape}, dtype={self.data.dtype})"

    def _grad_buffer(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other) -> "Value":
        other = as_value(other, like=self)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeError("add", self.shape, other.shape) from None
        out = Value(self.data + other.data, parents=(self, other))

        def _bw():
            g = out.grad
            self._grad_buffer()[...] += _unbroadcast(g, self.shape)
            other._grad_buffer()[...] += _unbroadcast(g, other.shape)

        out._backward = _bw
        return out

    def __radd__(self, other) -> "Value":
        return self.__add__(other)

    def __neg__(self) -> "Value":
        out = Value(-self.data, parents=(self,))

        def _bw():
            self._grad_buffer()[...] -= out.grad

        out._backward = _bw
        return out

    def __sub__(self, other) -> "Value":
        return self + (-as_value(other, like=self))

    def __mul__(self, other) -> "Value":
        other = as_value(other, like=self)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeError("mul", self.shape, other.shape) from None
        out = Value(self.data * other.data, parents=(self, other))
        a, b = self.data, other.data

        def _bw():
            g = out.grad
            self._grad_buffer()[...] += _unbroadcast(g * b, self.shape)
            other._grad_buffer()[...] += _unbroadcast(g * a, other.shape)

        out._backward = _bw
        return out

    def __rmul__(self, other) -> "Value":
        return self.__mul__(other)

    def __matmul__(self, other) -> "Value":
        other = as_value(other, like=self)
        a, b = self.data, other.data
        if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
            raise ShapeError("matmul", a.shape, b.shape)
        out = Value(np.asarray(a @ b), parents=(self, other))

        def _bw():
            g = out.grad
            if a.ndim == 2 and b.ndim == 2:
                self._grad_buffer()[...] += g @ b.T
                other._grad_buffer()[...] += a.T @ g
            elif a.ndim == 1 and b.ndim == 2:
                self._grad_buffer()[...] += b @ g
                other._grad_buffer()[...] += np.outer(a, g)
            elif a.ndim == 2 and b.ndim == 1:
                self._grad_buffer()[...] += np.outer(g, b)
                other._grad_buffer()[...] += a.T @ g
            else:
                self._grad_buffer()[...] += g * b
                other._grad_buffer()[...] += g * a

        out._backward = _bw
        return out

    def __getitem__(self, idx) -> "Value":
        picked = self.data[idx]
        out = Value(np.array(picked, copy=True), parents=(self,))
        fancy = _is_fancy_index(idx)

        def _bw():
            gp = self._grad_buffer()
            if fancy:
                np.add.at(gp, idx, out.grad)
            else:
                gp[idx] += out.grad

        out._backward = _bw
        return out

    def reshape(self, shape) -> "Value":
        out = Value(self.data.reshape(shape), parents=(self,))

        def _bw():
            self._grad_buffer()[...] += out.grad.reshape(self.shape)

        out._backward = _bw
        return out

    # -- pointwise nonlinearities ----------------------------------------------

    def sigmoid(self) -> "Value":
        s = _sigmoid(self.data)
        out = Value(s, parents=(self,))

        def _bw():
            self._grad_buffer()[...] += out.grad * s * (1.0 - s)

        out._backward = _bw
        return out

    def tanh(self) -> "Value":
        t = np.tanh(self.data)
        out = Value(t, parents=(self,))

        def _bw():
            self._grad_buffer()[...] += out.grad * (1.0 - t * t)

        out._backward = _bw
        return out

    def relu(self) -> "Value":
        mask = self.data > 0
        out = Value(np.where(mask, self.data, 0.0).astype(self.data.dtype), parents=(self,))

        def _bw():
            self._grad_buffer()[...] += out.grad * mask

        out._backward = _bw
        return out

    # -- reductions --------------------------------------------------------------

    def sum(self) -> "Value":
        out = Value(np.asarray(self.data.sum()), parents=(self,))

        def _bw():
            self._grad_buffer()[...] += out.grad

        out._backward = _bw
        return out

    def logsumexp(self, axis: int | None = None) -> "Value":
        d = self.data
        m = np.max(d, axis=axis, keepdims=True)
        # max subtraction keeps exp in range: logsumexp([1000, 1000]) stays finite
        s = np.exp(d - m).sum(axis=axis, keepdims=True)
        res = m + np.log(s)
        out_data = np.asarray(res.sum(axis=axis)) if axis is not None else np.asarray(res.reshape(()))
        out = Value(out_data, parents=(self,))
        softmax = np.exp(d - res)

        def _bw():
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            self._grad_buffer()[...] += g * softmax

        out._backward = _bw
        return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _is_fancy_index(idx) -> bool:
    if isinstance(idx, (np.ndarray, list)):
        return True
    if isinstance(idx, tuple):
        return any(isinstance(i, (np.ndarray, list)) for i in idx)
    return False


def as_value(x, like: Value | None = None) -> Value:
    """Wrap a constant as a non-trainable leaf, matching ``like``'s dtype."""
    if isinstance(x, Value):
        return x
    arr = np.asarray(x)
    if like is not None and arr.dtype != like.data.dtype and np.issubdtype(arr.dtype, np.number):
        arr = arr.astype(like.data.dtype)
    return Value(arr)


def concat(values: Sequence[Value], axis: int = 0) -> Value:
    """Concatenate along ``axis``; gradient splits back by segment."""
    if not values:
        raise ValueError("concat: empty input")
    datas = [v.data for v in values]
    ndim = datas[0].ndim
    for d in datas[1:]:
        if d.ndim != ndim:
            raise ShapeError("concat", *[d.shape for d in datas])
    out = Value(np.concatenate(datas, axis=axis), parents=tuple(values))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def _bw():
        g = out.grad
        for v, lo, hi in zip(values, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            v._grad_buffer()[...] += g[tuple(sl)]

    out._backward = _bw
    return out


def stack(values: Sequence[Value]) -> Value:
    """Stack same-shape arrays along a new leading axis."""
    if not values:
        raise ValueError("stack: empty input")
    shape = values[0].shape
    for v in values[1:]:
        if v.shape != shape:
            raise ShapeError("stack", shape, v.shape)
    out = Value(np.stack([v.data for v in values]), parents=tuple(values))

    def _bw():
        g = out.grad
        for i, v in enumerate(values):
            v._grad_buffer()[...] += g[i]

    out._backward = _bw
    return out


def max_over_time(v: Value) -> Value:
    """Column-wise max of a 2-D array; ties route gradient to the first row."""
    if v.data.ndim != 2:
        raise ShapeError("max_over_time", v.shape)
    idx = np.argmax(v.data, axis=0)
    cols = np.arange(v.data.shape[1])
    out = Value(v.data[idx, cols].copy(), parents=(v,))

    def _bw():
        np.add.at(v._grad_buffer(), (idx, cols), out.grad)

    out._backward = _bw
    return out


def dropout(v: Value, p: float, rng: np.random.Generator, train: bool) -> Value:
    """Inverted dropout: scale kept units by 1/(1-p) at train time, identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return v
    mask = (rng.random(v.shape) >= p).astype(v.data.dtype) / (1.0 - p)
    out = Value(v.data * mask, parents=(v,))

    def _bw():
        v._grad_buffer()[...] += out.grad * mask

    out._backward = _bw
    return out


def binary_cross_entropy(pred: Value, target: np.ndarray, clamp: float = 1e-7) -> Value:
    """Summed elementwise BCE with the prediction clamped into [clamp, 1-clamp].

    The clamp guards ln(0); gradient is zero where the clamp binds.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.shape:
        raise ShapeError("binary_cross_entropy", pred.shape, t.shape)
    lo, hi = clamp, 1.0 - clamp
    p = np.clip(pred.data, lo, hi)
    loss = -(t * np.log(p) + (1.0 - t) * np.log1p(-p)).sum()
    out = Value(np.asarray(loss), parents=(pred,))
    inside = (pred.data >= lo) & (pred.data <= hi)

    def _bw():
        dp = (-t / p + (1.0 - t) / (1.0 - p)) * inside
        pred._grad_buffer()[...] += out.grad * dp

    out._backward = _bw
    return out


def weighted_sum(values: Sequence[Value], weights: Sequence[float]) -> Value:
    """sum_i w_i * v_i over same-shape values with scalar weights."""
    if len(values) != len(weights):
        raise ValueError("weighted_sum: values and weights differ in length")
    if not values:
        raise ValueError("weighted_sum: empty input")
    shape = values[0].shape
    for v in values[1:]:
        if v.shape != shape:
            raise ShapeError("weighted_sum", shape, v.shape)
    ws = [float(w) for w in weights]
    acc = sum(w * v.data for v, w in zip(values, ws))
    out = Value(np.asarray(acc), parents=tuple(values))

    def _bw():
        for v, w in zip(values, ws):
            v._grad_buffer()[...] += w * out.grad

    out._backward = _bw
    return out


def _toposort(root: Value) -> list[Value]:
    # iterative DFS: LSTM chains over long sentences exceed the recursion limit
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Value) -> None:
    """Reverse pass from a scalar loss; accumulates into leaf ``grad`` buffers.

    The graph is single-use: the pass drops every visited node's closure, and
    a second call on the same loss raises.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise RuntimeError("backward: graph already consumed; rebuild the forward pass first")
    order = _toposort(loss)
    loss._grad_buffer()[...] = 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
    for node in order:
        node._consumed = True
        node._backward = None


class ParamStore:
    """Named trainable parameters with deterministic (lexicographic) iteration."""

    def __init__(self):
        self._params: dict[str, Value] = {}

    def add(self, name: str, data: np.ndarray) -> Value:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        v = Value(np.asarray(data), name=name, trainable=True)
        self._params[name] = v
        return v

    def __getitem__(self, name: str) -> Value:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Value]]:
        return [(n, self._params[n]) for n in self.names()]

    def values(self) -> list[Value]:
        return [self._params[n] for n in self.names()]

    def zero_grad(self) -> None:
        for v in self._params.values():
            v.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: v.data.copy() for n, v in self.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for n, v in self._params.items():
            arr = np.asarray(state[n])
            if arr.shape != v.data.shape:
                raise ShapeError("load_state_dict", v.data.shape, arr.shape)
            v.data = arr.astype(v.data.dtype, copy=True)


def grad_check(
    f: Callable[[ParamStore], Value],
    params: ParamStore,
    eps: float = 1e-5,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of ``f(params)`` against central differences.

    Returns the max over probed coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    ``f`` must be deterministic (dropout off, any sampling seeded).
    """
    if eps <= 0:
        raise ValueError(f"grad_check: eps must be positive, got {eps}")

    params.zero_grad()
    loss = f(params)
    if loss.data.size != 1:
        raise ValueError("grad_check: f must return a scalar")
    backward(loss)
    analytic = {n: (v.grad.copy() if v.grad is not None else np.zeros_like(v.data)) for n, v in params.items()}

    def eval_f() -> float:
        out = float(f(params).data)
        if not np.isfinite(out):
            raise FloatingPointError(f"grad_check: non-finite objective value {out}")
        return out

    worst = 0.0
    for name, v in params.items():
        flat = v.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        ga = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_f()
            flat[i] = orig - eps
            f_minus = eval_f()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1.0, abs(ga[i]), abs(numeric))
            worst = max(worst, abs(ga[i] - numeric) / denom)
    return worst
