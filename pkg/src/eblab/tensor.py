"""Dense float64 tensors with reverse-mode automatic differentiation.

Covers exactly the primitives the fully-connected adversarial nets need:
matmul, bias add, elementwise nonlinearities, dropout, batch normalization,
row-wise distance norms, reductions, shape ops, and a central-difference
gradient checker used throughout the test suite.

Gradients at the kinks of relu/clip and at a zero row norm are taken to be 0.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


_FINITE_CHECKS = True


def set_finite_checks(enabled):
    """Toggle per-operation NaN/Inf detection; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


class Tensor:
    """A dense float64 array with an optional gradient accumulator.

    Tensors are immutable once produced by an operation. Only leaf tensors
    created with ``requires_grad=True`` accumulate into ``.grad``; repeated
    ``backward`` calls without ``zero_grad`` keep summing into it.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def is_leaf(self):
        return not self._parents

    def detach(self):
        """A view of the same values with no recorded history."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        ``self`` must be a scalar that was produced by recorded operations.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.data.shape}")
        if not self._parents:
            raise RuntimeError("backward on a detached tensor: no operations were recorded")
        order = _toposort(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                for parent, pg in node._backward(g):
                    if not (parent.requires_grad or parent._parents):
                        continue
                    held = grads.get(id(parent))
                    grads[id(parent)] = pg if held is None else held + pg
            elif node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite(data):
    # A single reduction catches NaN (propagates) and Inf (inf - inf = nan).
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.sum(data))
    return total - total == 0.0


def _from_op(data, parents, backward_fn):
    if _FINITE_CHECKS and not _finite(data):
        raise NonFiniteError("tensor operation produced non-finite values")
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape``, inverting a numpy broadcast."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _from_op(data, (a, b), backward)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape)))

    return _from_op(data, (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.data.shape)),
            (b, _unbroadcast(g * a.data, b.data.shape)),
        )

    return _from_op(data, (a, b), backward)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def backward(g):
        return (
            (a, _unbroadcast(g / b.data, a.data.shape)),
            (b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
        )

    return _from_op(data, (a, b), backward)


def neg(a):
    a = _wrap(a)

    def backward(g):
        return ((a, -g),)

    return _from_op(-a.data, (a,), backward)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _from_op(data, (a, b), backward)


def transpose(a):
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")

    def backward(g):
        return ((a, g.T),)

    return _from_op(a.data.T, (a,), backward)


def add_bias(x, b):
    """Row-broadcast bias add: ``x[i, :] + b`` for a 1-D bias ``b``."""
    x, b = _wrap(x), _wrap(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or b.data.shape[0] != x.data.shape[1]:
        raise ValueError(f"add_bias shape mismatch: {x.data.shape} + {b.data.shape}")
    return add(x, b)


# ---------------------------------------------------------------------------
# nonlinearities

def relu(a):
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return ((a, g * (a.data > 0.0)),)

    return _from_op(data, (a,), backward)


def tanh(a):
    a = _wrap(a)
    data = np.tanh(a.data)

    def backward(g):
        return ((a, g * (1.0 - data * data)),)

    return _from_op(data, (a,), backward)


def sigmoid(a):
    a = _wrap(a)
    # Split by sign to stay overflow-free for large |x|.
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return ((a, g * data * (1.0 - data)),)

    return _from_op(data, (a,), backward)


def log(a):
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        return ((a, g / a.data),)

    return _from_op(data, (a,), backward)


def exp(a):
    a = _wrap(a)
    data = np.exp(a.data)

    def backward(g):
        return ((a, g * data),)

    return _from_op(data, (a,), backward)


def powc(a, p):
    """Elementwise power with a constant exponent."""
    a = _wrap(a)
    data = a.data ** p

    def backward(g):
        return ((a, g * p * a.data ** (p - 1.0)),)

    return _from_op(data, (a,), backward)


def clip(a, lo, hi):
    """Clamp into [lo, hi]; the gradient is passed only strictly inside."""
    a = _wrap(a)
    data = np.clip(a.data, lo, hi)

    def backward(g):
        return ((a, g * ((a.data > lo) & (a.data < hi))),)

    return _from_op(data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and row-wise norms

def sum_all(a):
    a = _wrap(a)
    data = np.asarray(a.data.sum())

    def backward(g):
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return _from_op(data, (a,), backward)


def mean(a):
    a = _wrap(a)
    n = a.data.size
    data = np.asarray(a.data.sum() / n)

    def backward(g):
        return ((a, np.broadcast_to(g / n, a.data.shape).copy()),)

    return _from_op(data, (a,), backward)


def sum_axis(a, axis, keepdims=True):
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(gg, a.data.shape).copy()),)

    return _from_op(data, (a,), backward)


def mean_axis(a, axis, keepdims=True):
    a = _wrap(a)
    n = a.data.shape[axis]
    return mul(sum_axis(a, axis, keepdims), 1.0 / n)


def squared_l2_rowwise(d):
    """Per-row sum of squares of a 2-D tensor; returns a length-B vector."""
    d = _wrap(d)
    if d.data.ndim != 2:
        raise ValueError("squared_l2_rowwise expects a 2-D tensor")
    data = np.einsum("ij,ij->i", d.data, d.data)

    def backward(g):
        return ((d, 2.0 * d.data * g[:, None]),)

    return _from_op(data, (d,), backward)


def euclidean_norm_rowwise(d):
    """Per-row Euclidean norm of a 2-D tensor; zero rows get zero gradient."""
    d = _wrap(d)
    if d.data.ndim != 2:
        raise ValueError("euclidean_norm_rowwise expects a 2-D tensor")
    data = np.sqrt(np.einsum("ij,ij->i", d.data, d.data))

    def backward(g):
        safe = np.where(data > 0.0, data, 1.0)
        return ((d, d.data * (g * (data > 0.0) / safe)[:, None]),)

    return _from_op(data, (d,), backward)


def diag_part(a):
    """Diagonal of a square 2-D tensor as a vector."""
    a = _wrap(a)
    n, m = a.data.shape
    if n != m:
        raise ValueError("diag_part expects a square matrix")
    data = np.diagonal(a.data).copy()

    def backward(g):
        out = np.zeros_like(a.data)
        np.fill_diagonal(out, g)
        return ((a, out),)

    return _from_op(data, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape):
    a = _wrap(a)
    orig = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        return ((a, g.reshape(orig)),)

    return _from_op(data, (a,), backward)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(zip(tensors, pieces))

    return _from_op(data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# stochastic / normalization layers

def dropout(x, rate, training, rng=None):
    """Inverted-scaling dropout; identity when rate is 0 or not training."""
    x = _wrap(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    keep = 1.0 - rate
    scale_mask = (rng.random(x.data.shape) >= rate) / keep

    def backward(g):
        return ((x, g * scale_mask),)

    return _from_op(x.data * scale_mask, (x,), backward)


def batchnorm(x, beta, gamma, running_mean, running_var, *, training,
              momentum=0.9, eps=1e-5):
    """Batch normalization over axis 0 of a 2-D tensor.

    Training mode normalizes each feature with the batch statistics (and
    folds them into the running arrays, which are plain ndarrays mutated in
    place); inference mode uses the running statistics. ``gamma=None`` gives
    the scale-free variant where only the bias ``beta`` is learned.
    """
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ValueError("batchnorm expects a 2-D tensor")
    if eps <= 0:
        raise ValueError("batchnorm eps must be positive")
    if training:
        mu = mean_axis(x, 0)
        centered = sub(x, mu)
        var = mean_axis(mul(centered, centered), 0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu.data[0]
        running_var *= momentum
        running_var += (1.0 - momentum) * var.data[0]
        inv_std = powc(add(var, eps), -0.5)
        normalized = mul(centered, inv_std)
    else:
        scale = 1.0 / np.sqrt(running_var + eps)
        normalized = mul(sub(x, Tensor(running_mean)), Tensor(scale))
    if gamma is not None:
        normalized = mul(normalized, gamma)
    return add_bias(normalized, beta)


# ---------------------------------------------------------------------------
# classifier heads

def softmax_rowwise(a):
    a = _wrap(a)
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=1, keepdims=True)
        return ((a, data * (g - inner)),)

    return _from_op(data, (a,), backward)


def cross_entropy_logits(logits, onehot):
    """Mean softmax cross-entropy of 2-D logits against constant one-hot rows."""
    logits = _wrap(logits)
    onehot = np.asarray(onehot, dtype=np.float64)
    if onehot.shape != logits.data.shape:
        raise ValueError("one-hot targets must match the logits shape")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = logsumexp - (z * onehot).sum(axis=1)
    n = z.shape[0]
    data = np.asarray(losses.sum() / n)
    probs = np.exp(z - zmax)
    probs /= probs.sum(axis=1, keepdims=True)

    def backward(g):
        return ((logits, g * (probs - onehot) / n),)

    return _from_op(data, (logits,), backward)


# ---------------------------------------------------------------------------
# verification

def grad_check(f, params, h=1e-6):
    """Max relative error between autodiff and central differences.

    ``f`` takes no arguments, reads ``params`` (leaf tensors), and returns a
    scalar Tensor; it must be deterministic across calls (seed any rng it
    uses inside). Error per coordinate is
    ``|autodiff - central| / max(1, |central|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    for p in params:
        if not p.requires_grad:
            raise ValueError("grad_check params must require gradients")
        p.zero_grad()
    loss = f()
    if loss.data.size != 1:
        raise ValueError("grad_check target must be scalar")
    loss.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = float(f().data)
            flat[i] = saved - h
            down = float(f().data)
            flat[i] = saved
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst
