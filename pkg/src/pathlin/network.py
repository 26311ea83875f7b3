"""Declarative network construction, forward evaluation and PReLU surgery.

A network is a chain of dense layers, each an affine map followed by an
activation (relu, channel- or layer-wise prelu, or identity), with optional
identity skip connections over contiguous layer spans.  PReLU slopes carry
per-unit frozen flags; a frozen unit has slope exactly 1 and is excluded
from optimization and from the sparsity penalty.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, add, add_bias, matmul, mul_columns, prelu, relu

ACTIVATIONS = ("relu", "prelu-channel", "prelu-layer", "identity")


@dataclass(frozen=True)
class LayerSpec:
    n_in: int
    n_out: int
    activation: str = "relu"
    bias: bool = True


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer specs plus residual spans (inclusive layer ranges).

    A span (s, e) adds the input of layer s to the output of layer e; the
    skip is a pure identity, so the widths at both ends must agree.  Spans
    may not overlap.
    """

    layers: tuple
    spans: tuple = ()

    def validate(self):
        if not self.layers:
            raise ValueError("network spec has no layers")
        for i, layer in enumerate(self.layers):
            if layer.n_in <= 0 or layer.n_out <= 0:
                raise ValueError(f"layer {i}: widths must be positive")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(
                    f"layer {i}: unknown activation {layer.activation!r}"
                )
            if i > 0 and self.layers[i - 1].n_out != layer.n_in:
                raise ValueError(
                    f"layer {i}: input width {layer.n_in} does not match "
                    f"previous output width {self.layers[i - 1].n_out}"
                )
        last = -1
        for start, end in sorted(self.spans):
            if not (0 <= start <= end < len(self.layers)):
                raise ValueError(f"span ({start}, {end}) outside layer bounds")
            if start <= last:
                raise ValueError(f"span ({start}, {end}) overlaps a previous span")
            if self.layers[start].n_in != self.layers[end].n_out:
                raise ValueError(
                    f"span ({start}, {end}): identity skip needs matching widths, "
                    f"got {self.layers[start].n_in} -> {self.layers[end].n_out}"
                )
            last = end

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def block_length(self, span):
        """Number of nonlinear layers inside a residual span."""
        start, end = span
        return sum(
            1
            for layer in self.layers[start : end + 1]
            if layer.activation != "identity"
        )


def _slope_count(layer):
    if layer.activation == "prelu-channel":
        return layer.n_out
    if layer.activation == "prelu-layer":
        return 1
    return 0


@dataclass
class Network:
    """Instantiated parameters for a NetworkSpec.

    ``slopes``/``frozen``/``gains`` hold one entry per layer (None for
    layers without that parameter).  ``gains`` are per-channel multipliers
    applied right after the activation.
    """

    spec: NetworkSpec
    seed: int
    weights: list
    biases: list
    slopes: list
    frozen: list
    gains: list = None

    def __post_init__(self):
        if self.gains is None:
            self.gains = [None] * len(self.weights)

    def copy(self):
        return Network(
            spec=self.spec,
            seed=self.seed,
            weights=[w.copy() for w in self.weights],
            biases=[None if b is None else b.copy() for b in self.biases],
            slopes=[None if s is None else s.copy() for s in self.slopes],
            frozen=[None if f is None else f.copy() for f in self.frozen],
            gains=[None if g is None else g.copy() for g in self.gains],
        )

    def has_prelu(self):
        return any(
            layer.activation in ("prelu-channel", "prelu-layer")
            for layer in self.spec.layers
        )

    def unit_map(self, i):
        layer = self.spec.layers[i]
        if layer.activation == "prelu-channel":
            return np.arange(layer.n_out, dtype=np.int64)
        return np.zeros(layer.n_out, dtype=np.int64)

    def as_tensors(self):
        """Fresh Tensor wrappers sharing this network's parameter storage."""
        return NetTensors(
            weights=[Tensor(w) for w in self.weights],
            biases=[None if b is None else Tensor(b) for b in self.biases],
            slopes=[None if s is None else Tensor(s) for s in self.slopes],
            gains=[None if g is None else Tensor(g) for g in self.gains],
        )

    def forward_tensor(self, x, tensors=None):
        """Autodiff forward pass; x is a Tensor of shape (batch, n_in)."""
        if x.shape[1] != self.spec.n_in:
            raise ValueError(
                f"forward: batch width {x.shape[1]} does not match "
                f"network input width {self.spec.n_in}"
            )
        if tensors is None:
            tensors = self.as_tensors()
        span_end = {s: e for s, e in self.spec.spans}
        saved = None
        open_end = None
        h = x
        for i, layer in enumerate(self.spec.layers):
            if i in span_end:
                saved, open_end = h, span_end[i]
            h = matmul(h, tensors.weights[i])
            if tensors.biases[i] is not None:
                h = add_bias(h, tensors.biases[i])
            if layer.activation == "relu":
                h = relu(h)
            elif layer.activation in ("prelu-channel", "prelu-layer"):
                h = prelu(h, tensors.slopes[i], self.unit_map(i))
            if tensors.gains[i] is not None:
                h = mul_columns(h, tensors.gains[i])
            if open_end == i:
                h = add(h, saved)
                saved, open_end = None, None
        return h

    def forward(self, x):
        """Plain evaluation on an (batch, n_in) array."""
        return self.forward_tensor(Tensor(np.asarray(x, dtype=np.float64))).data


@dataclass
class NetTensors:
    weights: list
    biases: list
    slopes: list
    gains: list

    def all(self):
        out = []
        for group in (self.weights, self.biases, self.slopes, self.gains):
            out.extend(t for t in group if t is not None)
        return out


def build(spec, seed):
    """Instantiate a spec: He-scaled normal weights, zero biases, zero slopes.

    Deterministic in the seed.  PReLU slopes start at 0, which reproduces a
    plain ReLU exactly.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    weights, biases, slopes, frozen = [], [], [], []
    for layer in spec.layers:
        weights.append(
            rng.normal(0.0, np.sqrt(2.0 / layer.n_in), size=(layer.n_in, layer.n_out))
        )
        biases.append(np.zeros(layer.n_out) if layer.bias else None)
        k = _slope_count(layer)
        slopes.append(np.zeros(k) if k else None)
        frozen.append(np.zeros(k, dtype=np.bool_) if k else None)
    return Network(
        spec=spec, seed=seed, weights=weights, biases=biases,
        slopes=slopes, frozen=frozen,
    )


def relu_to_prelu(net, granularity):
    """Replace every ReLU with a PReLU of the given granularity.

    Slopes start at 0 so the surgery is value-preserving; frozen flags are
    cleared.  Rejects networks that already contain PReLU units.
    """
    if granularity not in ("channel", "layer"):
        raise ValueError(f"granularity must be 'channel' or 'layer', got {granularity!r}")
    if net.has_prelu():
        raise ValueError("network already contains PReLU units")
    if not any(layer.activation == "relu" for layer in net.spec.layers):
        raise ValueError("network has no ReLU units to replace")
    activation = f"prelu-{granularity}"
    out = net.copy()
    new_layers = []
    for i, layer in enumerate(net.spec.layers):
        if layer.activation == "relu":
            new_layer = LayerSpec(layer.n_in, layer.n_out, activation, layer.bias)
            k = _slope_count(new_layer)
            out.slopes[i] = np.zeros(k)
            out.frozen[i] = np.zeros(k, dtype=np.bool_)
            new_layers.append(new_layer)
        else:
            new_layers.append(layer)
    out.spec = NetworkSpec(layers=tuple(new_layers), spans=net.spec.spans)
    return out


def replace_nonlinear_layerwise_with_channelwise(net):
    """Expand each non-fully-linear layer-wise PReLU into channel-wise slopes.

    The new channel slopes all start at the existing layer slope, so the
    forward map is unchanged.  Layers whose slope is exactly 1 stay as a
    single frozen layer-wise unit.
    """
    if not any(l.activation == "prelu-layer" for l in net.spec.layers):
        raise ValueError("network has no layer-wise PReLU units")
    out = net.copy()
    new_layers = []
    for i, layer in enumerate(net.spec.layers):
        if layer.activation == "prelu-layer" and out.slopes[i][0] != 1.0:
            new_layer = LayerSpec(layer.n_in, layer.n_out, "prelu-channel", layer.bias)
            out.slopes[i] = np.full(layer.n_out, out.slopes[i][0])
            out.frozen[i] = np.zeros(layer.n_out, dtype=np.bool_)
            new_layers.append(new_layer)
        else:
            if layer.activation == "prelu-layer":
                out.frozen[i][:] = True
            new_layers.append(layer)
    out.spec = NetworkSpec(layers=tuple(new_layers), spans=net.spec.spans)
    return out


def append_channel_multiplier(net):
    """Insert a learnable per-channel gain after each layer-wise PReLU.

    Gains start at 1, leaving the forward map unchanged at insertion.
    """
    targets = [
        i for i, l in enumerate(net.spec.layers) if l.activation == "prelu-layer"
    ]
    if not targets:
        raise ValueError("network has no layer-wise PReLU units")
    if any(net.gains[i] is not None for i in targets):
        raise ValueError("network already carries channel multipliers")
    out = net.copy()
    for i in targets:
        out.gains[i] = np.ones(net.spec.layers[i].n_out)
    return out
