"""Minimal reverse-mode differentiation over numpy arrays, MLPs and AdamW.

A :class:`Tape` records every :class:`Node` in creation order, which is a
topological order of the graph; :meth:`Tape.backward` walks it in reverse.
Nodes overload the numpy operators they need, and the module-level functions
(:func:`exp`, :func:`log`, ...) accept either nodes or plain arrays, so the
same estimator code runs with or without a tape.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergenceError

__all__ = [
    "Tape",
    "Node",
    "ParamStore",
    "grad",
    "value_of",
    "exp",
    "log",
    "sqrt",
    "square",
    "relu",
    "sigmoid",
    "logsumexp",
    "clamp_min",
    "custom_scalar_op",
    "MlpSpec",
    "init_mlp",
    "mlp_forward",
    "AdamWState",
    "adamw_step",
    "save_params",
    "load_params",
]


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    def __init__(self):
        self.nodes = []

    def leaf(self, value, name=None):
        return Node(np.array(value, dtype=float), self, (), (), op=name or "leaf")

    def watch(self, params):
        """Wrap every array of ``params`` as a leaf node; returns name -> Node."""
        return {k: self.leaf(v, name=k) for k, v in params.items()}

    def release(self):
        """Unlink the graph so its arrays are freed without waiting for the cycle collector."""
        for n in self.nodes:
            n.parents = ()
            n.vjps = ()
            n.adjoint = None
        self.nodes = []

    def backward(self, root):
        if root.value.size != 1:
            raise ShapeError("backward needs a scalar root")
        for n in self.nodes:
            n.adjoint = None
        root.adjoint = np.ones_like(root.value)
        for n in reversed(self.nodes[: root.index + 1]):
            if n.adjoint is None:
                continue
            for parent, vjp in zip(n.parents, n.vjps):
                g = vjp(n.adjoint)
                if parent.adjoint is None:
                    parent.adjoint = g
                else:
                    parent.adjoint = parent.adjoint + g


class Node:
    # make numpy defer binary operators to Node's reflected methods
    __array_ufunc__ = None

    def __init__(self, value, tape, parents, vjps, op):
        if not np.all(np.isfinite(value)):
            raise TrainingDivergenceError(f"non-finite value produced by op {op!r}", op=op)
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.adjoint = None
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    # -- construction helpers ------------------------------------------------
    def _wrap(self, other):
        if isinstance(other, Node):
            return other
        return Node(np.asarray(other, dtype=float), self.tape, (), (), op="const")

    def _make(self, value, parents, vjps, op):
        return Node(value, self.tape, tuple(parents), tuple(vjps), op)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        o = self._wrap(other)
        a, b = self, o
        return self._make(
            a.value + b.value,
            (a, b),
            (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
            "add",
        )

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.value, (self,), (lambda g: -g,), "neg")

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        o = self._wrap(other)
        a, b = self, o
        return self._make(
            a.value * b.value,
            (a, b),
            (
                lambda g: _unbroadcast(g * b.value, a.shape),
                lambda g: _unbroadcast(g * a.value, b.shape),
            ),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._wrap(other)
        a, b = self, o
        out = a.value / b.value
        return self._make(
            out,
            (a, b),
            (
                lambda g: _unbroadcast(g / b.value, a.shape),
                lambda g: _unbroadcast(-g * out / b.value, b.shape),
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __matmul__(self, other):
        o = self._wrap(other)
        a, b = self, o
        if a.ndim != 2 or b.ndim not in (1, 2):
            raise ShapeError("matmul supports matrix @ matrix or matrix @ vector")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        if b.ndim == 1:
            vjp_a = lambda g: np.outer(g, b.value)  # noqa: E731
        else:
            vjp_a = lambda g: g @ b.value.T  # noqa: E731
        return self._make(a.value @ b.value, (a, b), (vjp_a, lambda g: a.value.T @ g), "matmul")

    def __rmatmul__(self, other):
        return self._wrap(other) @ self

    # -- shape ops ------------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return self._make(self.value.sum(axis=axis, keepdims=keepdims), (self,), (vjp,), "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    @property
    def T(self):
        return self._make(self.value.T, (self,), (lambda g: g.T,), "transpose")

    def reshape(self, *shape):
        old = self.shape
        return self._make(self.value.reshape(*shape), (self,), (lambda g: g.reshape(old),), "reshape")

    def __getitem__(self, idx):
        shape = self.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return out

        return self._make(self.value[idx], (self,), (vjp,), "index")


def value_of(x):
    return x.value if isinstance(x, Node) else x


def _unary(x, fn, dfn, op):
    if not isinstance(x, Node):
        return fn(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = fn(x.value)
    return x._make(out, (x,), (lambda g: g * dfn(x.value, out),), op)


def exp(x):
    return _unary(x, np.exp, lambda v, out: out, "exp")


def log(x):
    return _unary(x, np.log, lambda v, out: 1.0 / v, "log")


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, out: 0.5 / out, "sqrt")


def square(x):
    return _unary(x, np.square, lambda v, out: 2.0 * v, "square")


def relu(x):
    # subgradient at 0 is 0
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda v, out: (v > 0).astype(float), "relu")


def _sigmoid(v):
    return np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))


def sigmoid(x):
    return _unary(x, _sigmoid, lambda v, out: out * (1.0 - out), "sigmoid")


def clamp_min(x, c):
    return _unary(x, lambda v: np.maximum(v, c), lambda v, out: (v > c).astype(float), "clamp_min")


def logsumexp(x, axis=None):
    """Stabilized log-sum-exp along ``axis`` (all entries when ``None``)."""
    v = value_of(x)
    mx = np.max(v, axis=axis, keepdims=True)
    s = np.log(np.sum(np.exp(v - mx), axis=axis, keepdims=True)) + mx
    out = s.reshape(()) if axis is None else np.squeeze(s, axis=axis)
    if not isinstance(x, Node):
        return out
    soft = np.exp(v - s)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return g * soft

    return x._make(out, (x,), (vjp,), "logsumexp")


def custom_scalar_op(value, inputs, partials, op):
    """Scalar node ``value`` with hand-supplied partials w.r.t. scalar ``inputs``."""
    nodes = [i for i in inputs if isinstance(i, Node)]
    if not nodes:
        return value
    parents, vjps = [], []
    for inp, d in zip(inputs, partials):
        if isinstance(inp, Node):
            parents.append(inp)
            vjps.append(lambda g, d=d, shape=inp.shape: np.broadcast_to(g * d, shape).copy())
    return nodes[0]._make(np.asarray(value, dtype=float), parents, vjps, op)


class ParamStore(dict):
    """Ordered name -> float64 array map."""

    def copy(self):
        return ParamStore({k: np.array(v, dtype=float, copy=True) for k, v in self.items()})

    def n_params(self):
        return int(sum(np.size(v) for v in self.values()))

    def all_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.values())


def grad(objective_fn, params):
    """Value and gradient of a scalar objective built on a fresh tape.

    ``objective_fn`` receives a name -> Node mapping and must return a scalar
    Node (or something reducible to one).
    """
    tape = Tape()
    watched = tape.watch(params)
    root = objective_fn(watched)
    if not isinstance(root, Node):
        return float(root), {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in params.items()}
    if not np.isfinite(root.value).all():
        raise TrainingDivergenceError("objective is non-finite", op=root.op)
    tape.backward(root)
    grads = {}
    for k, node in watched.items():
        grads[k] = np.zeros_like(node.value) if node.adjoint is None else np.asarray(node.adjoint, dtype=float)
    value = float(root.value)
    tape.release()
    return value, grads


# -- networks ----------------------------------------------------------------


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple

    def __post_init__(self):
        if len(self.widths) < 2 or any(int(w) <= 0 for w in self.widths):
            raise ConfigError(f"MLP widths must be >= 2 positive ints, got {self.widths}")

    @property
    def n_layers(self):
        return len(self.widths) - 1


def init_mlp(spec, rng, prefix=""):
    """PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    out = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        out[f"{prefix}w{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        out[f"{prefix}b{i}"] = rng.uniform(-bound, bound, size=(fan_out,))
    return out


def mlp_layers(params, prefix=""):
    n = 0
    while f"{prefix}w{n}" in params:
        n += 1
    return n


def mlp_forward(params, inputs, prefix="", first_layer=None):
    """Apply the MLP stored under ``prefix`` row-wise (ReLU hidden, linear output).

    ``first_layer`` may hold a precomputed first pre-activation, in which case
    ``inputs`` is ignored for layer 0.
    """
    n = mlp_layers(params, prefix)
    if n == 0:
        raise ShapeError(f"no MLP layers under prefix {prefix!r}")
    if first_layer is None:
        w0 = params[f"{prefix}w0"]
        if value_of(inputs).shape[-1] != value_of(w0).shape[0]:
            raise ShapeError(
                f"input width {value_of(inputs).shape[-1]} != first layer {value_of(w0).shape[0]}"
            )
        h = inputs @ w0 + params[f"{prefix}b0"]
    else:
        h = first_layer
    for i in range(1, n):
        h = relu(h) @ params[f"{prefix}w{i}"] + params[f"{prefix}b{i}"]
    return h


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
    """One AdamW descent step with decoupled weight decay.

    Returns ``(new_params, new_state)``; inputs are not modified. To ascend,
    pass negated gradients.
    """
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    t = state.step + 1
    new_params, new_m, new_v = ParamStore(), {}, {}
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        with np.errstate(over="ignore", invalid="ignore"):
            m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
            v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * g * g
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            # an overflowing second moment would silently freeze the parameter
            raise TrainingDivergenceError(f"non-finite optimizer moment for {k!r}", op="adamw_step")
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[k] = p - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
        new_m[k] = m
        new_v[k] = v
    if not new_params.all_finite():
        raise TrainingDivergenceError("non-finite parameter after AdamW step", op="adamw_step")
    return new_params, AdamWState(step=t, m=new_m, v=new_v)


# -- checkpoints --------------------------------------------------------------


def save_params(path, params):
    """Write a key -> little-endian float64 tensor map (numpy ``.npz``)."""
    arrays = {k: np.asarray(v, dtype="<f8") for k, v in params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path):
    with np.load(path) as data:
        return ParamStore({k: np.array(data[k], dtype=float) for k in data.files})
