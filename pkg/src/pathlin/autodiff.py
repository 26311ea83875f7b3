"""Reverse-mode automatic differentiation over dense float64 tensors.

Every operation records its inputs and a backward closure on the output
tensor; the resulting DAG of parent links is the differentiation graph.
``backward(loss)`` topologically sorts the graph reachable from a scalar
loss and accumulates gradients into each tensor's ``grad`` slot.  Repeated
backward calls accumulate (callers reset grads explicitly between steps).
"""

import numpy as np

from . import _kernels


class Tensor:
    """A dense float64 array plus a gradient slot and graph linkage."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, leaf={self._backward is None})"


def _as_2d(t, op):
    if t.data.ndim != 2:
        raise ValueError(f"{op}: expected a 2-d tensor, got shape {t.shape}")


def matmul(a, b):
    """Matrix product of two 2-d tensors."""
    _as_2d(a, "matmul")
    _as_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul: inner extents disagree: {a.shape} x {b.shape}"
        )
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def _bw(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    out._backward = _bw
    return out


def add(a, b):
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _bw(g):
        a._accumulate(g)
        b._accumulate(g)

    out._backward = _bw
    return out


def add_bias(x, bias):
    """Row-broadcast add of a length-n bias onto an (m, n) tensor."""
    _as_2d(x, "add_bias")
    if bias.data.ndim != 1 or bias.shape[0] != x.shape[1]:
        raise ValueError(
            f"add_bias: bias shape {bias.shape} does not match columns of {x.shape}"
        )
    out = Tensor(x.data + bias.data, _parents=(x, bias))

    def _bw(g):
        x._accumulate(g)
        bias._accumulate(g.sum(axis=0))

    out._backward = _bw
    return out


def mul_columns(x, gains):
    """Scale each column of an (m, n) tensor by a learnable length-n gain."""
    _as_2d(x, "mul_columns")
    if gains.data.ndim != 1 or gains.shape[0] != x.shape[1]:
        raise ValueError(
            f"mul_columns: gain shape {gains.shape} does not match columns of {x.shape}"
        )
    out = Tensor(x.data * gains.data, _parents=(x, gains))

    def _bw(g):
        x._accumulate(g * gains.data)
        gains._accumulate((g * x.data).sum(axis=0))

    out._backward = _bw
    return out


def relu(x):
    """max(x, 0); the subgradient at 0 is taken as 1."""
    out = Tensor(np.maximum(x.data, 0.0), _parents=(x,))

    def _bw(g):
        x._accumulate(np.where(x.data >= 0.0, g, 0.0))

    out._backward = _bw
    return out


def prelu(x, slopes, unit_map):
    """Parametric ReLU: y = x for x >= 0, else slopes[unit_map[col]] * x.

    ``unit_map`` assigns each column of the (m, n) input to one slope index;
    channel granularity maps column j to slope j, layer granularity maps all
    columns to a single slope.  The slope gradient for unit k is the sum of
    x * g over negative entries in columns assigned to k (zero contribution
    at exactly x = 0, where the forward takes the non-negative branch).
    """
    _as_2d(x, "prelu")
    if slopes.data.ndim != 1:
        raise ValueError(f"prelu: slopes must be 1-d, got shape {slopes.shape}")
    unit_map = np.ascontiguousarray(unit_map, dtype=np.int64)
    if unit_map.shape != (x.shape[1],):
        raise ValueError(
            f"prelu: unit_map length {unit_map.shape} does not cover columns of {x.shape}"
        )
    n_slopes = slopes.shape[0]
    if unit_map.size and (unit_map.min() < 0 or unit_map.max() >= n_slopes):
        raise ValueError(
            f"prelu: unit_map index out of range for {n_slopes} slopes"
        )
    xd = np.ascontiguousarray(x.data)
    out = Tensor(
        _kernels.prelu_forward(xd, slopes.data, unit_map), _parents=(x, slopes)
    )

    def _bw(g):
        gx, gs = _kernels.prelu_backward(
            xd, slopes.data, unit_map, np.ascontiguousarray(g), n_slopes
        )
        x._accumulate(gx)
        slopes._accumulate(gs)

    out._backward = _bw
    return out


L05_SINGULARITY_GUARD = 1e-4


def l05_penalty(slopes, frozen):
    """Sparsity penalty sum(|1 - a_i|^0.5) over non-frozen slope units.

    The gradient magnitude is clamped near the a = 1 singularity by
    evaluating |1 - a| at max(|1 - a|, 1e-4); frozen units contribute zero
    value and zero gradient.
    """
    if slopes.data.ndim != 1:
        raise ValueError(f"l05_penalty: slopes must be 1-d, got {slopes.shape}")
    frozen = np.ascontiguousarray(frozen, dtype=np.bool_)
    if frozen.shape != slopes.data.shape:
        raise ValueError(
            f"l05_penalty: frozen mask shape {frozen.shape} does not match "
            f"slopes {slopes.shape}"
        )
    value, grad = _kernels.l05_value_grad(
        slopes.data, frozen, L05_SINGULARITY_GUARD
    )
    out = Tensor(value, _parents=(slopes,))

    def _bw(g):
        slopes._accumulate(g * grad)

    out._backward = _bw
    return out


def cross_entropy(logits, labels):
    """Mean cross-entropy of (batch, classes) logits against class indices.

    Uses the max-shifted log-sum-exp for numerical stability.
    """
    _as_2d(logits, "cross_entropy")
    z = logits.data
    if z.shape[0] < 1:
        raise ValueError("cross_entropy: empty batch")
    if not np.all(np.isfinite(z)):
        bad = np.argwhere(~np.isfinite(z))[0]
        raise ValueError(
            f"cross_entropy: non-finite logit at row {bad[0]}, column {bad[1]}"
        )
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise ValueError(
            f"cross_entropy: labels shape {labels.shape} does not match batch {z.shape}"
        )
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ValueError(
            f"cross_entropy: label out of range for {z.shape[1]} classes"
        )
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    lse = np.log(np.exp(shifted).sum(axis=1)) + m[:, 0]
    rows = np.arange(z.shape[0])
    out = Tensor(np.mean(lse - z[rows, labels]), _parents=(logits,))

    def _bw(g):
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[rows, labels] -= 1.0
        logits._accumulate((g / z.shape[0]) * probs)

    out._backward = _bw
    return out


def ssum(x):
    """Sum all elements into a scalar tensor."""
    out = Tensor(x.data.sum(), _parents=(x,))

    def _bw(g):
        x._accumulate(np.full_like(x.data, g))

    out._backward = _bw
    return out


def scale(x, k):
    """Multiply a tensor by a python scalar."""
    k = float(k)
    out = Tensor(k * x.data, _parents=(x,))

    def _bw(g):
        x._accumulate(k * g)

    out._backward = _bw
    return out


def backward(loss):
    """Populate gradients of every tensor reachable from a scalar loss."""
    if loss.data.shape != ():
        raise ValueError(
            f"backward: expected a scalar loss, got shape {loss.data.shape}"
        )
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss._accumulate(np.asarray(1.0))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def zero_grads(tensors):
    """Clear gradient slots so the next backward starts fresh."""
    for t in tensors:
        t.grad = None
