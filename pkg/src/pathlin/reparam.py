"""Residual-to-feedforward block reparametrizations and their verification.

A residual block R(x) = phi(Wx + b) + x over width n can be rewritten as a
single feedforward block F(x) = W2 phi(W1 x + b1) + b2 of hidden width 2n.
Two constructions are provided:

* ``reparam_local_linear``: routes a shrunk copy of the input through the
  locally linear region of phi around a differentiability point c, then
  un-shrinks and shifts back.  Exact only in the limit of the shrink factor
  going to zero; at finite epsilon the deviation vanishes with epsilon.
* ``reparam_relu``: for phi = ReLU, shifts the identity path out of the
  nonlinear range entirely, which is exact whenever every input coordinate
  stays above a known lower bound.

``noninjectivity_witness`` constructively separates the two function
families: it produces two distinct inputs whose images under the
feedforward nonlinearity coincide exactly, which no identity map (realized
by a residual block with zero weights) can do.
"""

from dataclasses import dataclass

import numpy as np


class WitnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActivationDescriptor:
    """A pointwise activation with (optionally) a differentiability point c."""

    name: str
    fn: object
    c: float = None
    value_at_c: float = None
    slope_at_c: float = None

    def __call__(self, x):
        return self.fn(x)


def _softplus(x):
    return np.logaddexp(0.0, x)


TANH = ActivationDescriptor("tanh", np.tanh, 0.0, 0.0, 1.0)
SIGMOID = ActivationDescriptor(
    "sigmoid", lambda x: 1.0 / (1.0 + np.exp(-x)), 0.0, 0.5, 0.25
)
SOFTPLUS = ActivationDescriptor("softplus", _softplus, 0.0, float(np.log(2.0)), 0.5)
RELU = ActivationDescriptor("relu", lambda x: np.maximum(x, 0.0))

ACTIVATIONS = {a.name: a for a in (TANH, SIGMOID, SOFTPLUS, RELU)}


@dataclass(frozen=True)
class ResidualBlockParams:
    """Parameters of R(x) = phi(Wx + b) + x with square W."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w, b = np.asarray(self.weight), np.asarray(self.bias)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"residual weight must be square, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match weight {w.shape}")

    @property
    def width(self):
        return self.weight.shape[0]


@dataclass(frozen=True)
class FeedforwardBlockParams:
    """Parameters of F(x) = W2 phi(W1 x + b1) + b2 with hidden width 2n."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        n = self.w2.shape[0]
        if self.w1.shape != (2 * n, n):
            raise ValueError(f"w1 must be (2n, n), got {self.w1.shape}")
        if self.b1.shape != (2 * n,):
            raise ValueError(f"b1 must be (2n,), got {self.b1.shape}")
        if self.w2.shape != (n, 2 * n):
            raise ValueError(f"w2 must be (n, 2n), got {self.w2.shape}")
        if self.b2.shape != (n,):
            raise ValueError(f"b2 must be (n,), got {self.b2.shape}")

    @property
    def hidden_width(self):
        return self.w1.shape[0]


def residual_forward(block, act, x):
    """R(x) for a (m, n) batch."""
    x = np.atleast_2d(x)
    return act(x @ block.weight.T + block.bias) + x


def feedforward_forward(ff, act, x):
    """F(x) for a (m, n) batch."""
    x = np.atleast_2d(x)
    return act(x @ ff.w1.T + ff.b1) @ ff.w2.T + ff.b2


def reparam_local_linear(block, act, eps):
    """Build the shrink-through-the-linear-region feedforward block.

    W1 stacks eps*I over W, b1 stacks c*1 over b; W2 concatenates
    I/(eps*phi'(c)) with I and b2 subtracts phi(c)/(eps*phi'(c)).
    Requires phi'(c) != 0.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if act.c is None or act.slope_at_c is None:
        raise ValueError(
            f"activation {act.name!r} has no differentiability point for this construction"
        )
    if act.slope_at_c == 0:
        raise ValueError(
            f"activation {act.name!r} has zero derivative at c={act.c}; "
            "the un-shrink map would divide by zero"
        )
    n = block.width
    eye = np.eye(n)
    scale = 1.0 / (eps * act.slope_at_c)
    return FeedforwardBlockParams(
        w1=np.vstack([eps * eye, block.weight]),
        b1=np.concatenate([np.full(n, act.c), block.bias]),
        w2=np.hstack([scale * eye, eye]),
        b2=np.full(n, -act.value_at_c * scale),
    )


def reparam_relu(block, lower_bound):
    """Build the exact ReLU feedforward block for inputs above lower_bound.

    The identity path is shifted by s = max(0, -lower_bound) so that the
    shifted coordinates are non-negative wherever the bound holds, where
    ReLU acts as the identity; the shift is undone in b2.  F(x) = R(x)
    exactly whenever x >= lower_bound coordinatewise.
    """
    n = block.width
    s = max(0.0, -float(lower_bound))
    eye = np.eye(n)
    return FeedforwardBlockParams(
        w1=np.vstack([eye, block.weight]),
        b1=np.concatenate([np.full(n, s), block.bias]),
        w2=np.hstack([eye, eye]),
        b2=np.full(n, -s),
    )


@dataclass(frozen=True)
class VerifyResult:
    max_deviation: float
    argmax_sample: np.ndarray

    def to_json(self):
        return {
            "max_deviation": self.max_deviation,
            "argmax_sample": [float(v) for v in self.argmax_sample],
        }


def verify_reparam(block, ff, act, samples):
    """Max infinity-norm deviation |F(x) - R(x)| over a (m, n) sample batch."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("verify_reparam: empty sample set")
    dev = np.abs(
        feedforward_forward(ff, act, samples) - residual_forward(block, act, samples)
    ).max(axis=1)
    i = int(np.argmax(dev))
    return VerifyResult(float(dev[i]), samples[i].copy())


COND_THRESHOLD = 1e12


@dataclass(frozen=True)
class Witness:
    x1: np.ndarray
    x2: np.ndarray
    case: str

    def to_json(self):
        return {
            "case": self.case,
            "x1": [float(v) for v in self.x1],
            "x2": [float(v) for v in self.x2],
        }


def _relu_image(w, b, x):
    return np.maximum(w @ x + b, 0.0)


def _is_exact_pair(w, b, x1, x2):
    if np.linalg.norm(x1 - x2) <= 1e-8:
        return False
    diff = _relu_image(w, b, x1) - _relu_image(w, b, x2)
    return bool(np.all(diff == 0.0))


def noninjectivity_witness(w, b):
    """Two distinct inputs with exactly equal ReLU(Wx + b) images.

    Invertible W (condition number <= 1e12): solve for pre-activations in
    the negative orthant, where ReLU collapses everything to zero exactly.
    Singular or ill-conditioned W: move along a null-space direction; the
    pair is accepted only if the images agree exactly in floating point,
    so several candidate pairs are tried (exact zero columns first, then
    the smallest-singular-value direction, alone and from a least-squares
    point pushed toward the negative orthant).
    """
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = w.shape[0]
    if w.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"need square W and matching b, got {w.shape}, {b.shape}")
    sv = np.linalg.svd(w, compute_uv=False)
    invertible = sv[-1] > 0.0 and sv[0] / sv[-1] <= COND_THRESHOLD

    candidates = []
    if invertible:
        ones = np.ones(n)
        margin = 1.0 + np.abs(b).max()
        for t1, t2 in ((1.0, 2.0), (2.0, 5.0)):
            z1, z2 = -t1 * margin * ones, -t2 * margin * ones
            candidates.append(
                (np.linalg.solve(w, z1 - b), np.linalg.solve(w, z2 - b), "invertible")
            )
    else:
        zero_cols = np.flatnonzero(~w.any(axis=0))
        for j in zero_cols[:2]:
            e = np.zeros(n)
            e[j] = 1.0
            candidates.append((np.zeros(n), e, "singular"))
        null = np.linalg.svd(w)[2][-1]
        candidates.append((np.zeros(n), null, "singular"))
        candidates.append((null, 2.0 * null, "singular"))
        target = -(1.0 + np.abs(b).max()) * np.ones(n)
        x0 = np.linalg.lstsq(w, target - b, rcond=None)[0]
        candidates.append((x0, x0 + null, "singular"))
        candidates.append((x0, x0 + max(1.0, np.linalg.norm(x0)) * null, "singular"))

    for x1, x2, case in candidates:
        if _is_exact_pair(w, b, x1, x2):
            return Witness(x1, x2, case)
    raise WitnessError(
        "no exactly-verifying witness pair found; the matrix is numerically "
        "rank-deficient without an exactly representable null direction and "
        "its range does not reach the negative orthant"
    )
