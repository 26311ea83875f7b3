"""Hot numeric kernels with two interchangeable backends.

The inner loops of training (PReLU forward/backward, the fused SGD update
and the slope penalty) dominate runtime at small layer widths, where the
per-call overhead of chained numpy ufuncs is significant.  Each kernel
therefore exists twice: a plain-numpy implementation and a numba ``@njit``
compilation of an explicit loop.  The active backend is chosen once at
import time from the ``PATHLIN_BACKEND`` environment variable:

    PATHLIN_BACKEND=numba   (default) use numba if importable
    PATHLIN_BACKEND=numpy   force the pure-numpy fallback

``benchmarks/bench_backends.py`` times the two side by side.
"""

import math
import os

import numpy as np

_ENV_VAR = "PATHLIN_BACKEND"


# ---------------------------------------------------------------------------
# numpy implementations

def _prelu_forward_numpy(x, slopes, unit_map):
    alpha = slopes[unit_map]
    return np.where(x >= 0.0, x, x * alpha)


def _prelu_backward_numpy(x, slopes, unit_map, gy, n_slopes):
    alpha = slopes[unit_map]
    neg = x < 0.0
    gx = np.where(neg, alpha * gy, gy)
    per_col = np.sum(np.where(neg, x * gy, 0.0), axis=0)
    gs = np.bincount(unit_map, weights=per_col, minlength=n_slopes)
    return gx, gs


def _sgd_update_numpy(param, grad, vel, active, lr, momentum, weight_decay):
    v = momentum * vel + grad + weight_decay * param
    np.copyto(vel, v, where=active)
    np.copyto(param, param - lr * v, where=active)


def _l05_value_grad_numpy(slopes, frozen, delta):
    d = 1.0 - slopes
    a = np.abs(d)
    live = ~frozen
    value = float(np.sum(np.sqrt(a) * live))
    grad = np.where(live, -np.sign(d) * 0.5 / np.sqrt(np.maximum(a, delta)), 0.0)
    return value, grad


# ---------------------------------------------------------------------------
# loop bodies shared with numba (njit-compiled verbatim when enabled)

def _prelu_forward_loop(x, slopes, unit_map):
    m, n = x.shape
    y = np.empty_like(x)
    for i in range(m):
        for j in range(n):
            v = x[i, j]
            if v >= 0.0:
                y[i, j] = v
            else:
                y[i, j] = slopes[unit_map[j]] * v
    return y


def _prelu_backward_loop(x, slopes, unit_map, gy, n_slopes):
    m, n = x.shape
    gx = np.empty_like(x)
    gs = np.zeros(n_slopes)
    for i in range(m):
        for j in range(n):
            if x[i, j] >= 0.0:
                gx[i, j] = gy[i, j]
            else:
                gx[i, j] = slopes[unit_map[j]] * gy[i, j]
                gs[unit_map[j]] += x[i, j] * gy[i, j]
    return gx, gs


def _sgd_update_loop(param, grad, vel, active, lr, momentum, weight_decay):
    for i in range(param.shape[0]):
        if active[i]:
            v = momentum * vel[i] + grad[i] + weight_decay * param[i]
            vel[i] = v
            param[i] -= lr * v


def _l05_value_grad_loop(slopes, frozen, delta):
    value = 0.0
    grad = np.zeros_like(slopes)
    for i in range(slopes.shape[0]):
        if not frozen[i]:
            d = 1.0 - slopes[i]
            a = abs(d)
            value += math.sqrt(a)
            if d != 0.0:
                sign = 1.0 if d > 0.0 else -1.0
                grad[i] = -sign * 0.5 / math.sqrt(max(a, delta))
    return value, grad


def numpy_impls():
    """Kernel dict for the pure-numpy backend."""
    return {
        "prelu_forward": _prelu_forward_numpy,
        "prelu_backward": _prelu_backward_numpy,
        "sgd_update": _sgd_update_numpy,
        "l05_value_grad": _l05_value_grad_numpy,
    }


def numba_impls():
    """Kernel dict with njit-compiled loops, or None if numba is missing."""
    try:
        from numba import njit
    except ImportError:
        return None
    return {
        "prelu_forward": njit(cache=True)(_prelu_forward_loop),
        "prelu_backward": njit(cache=True)(_prelu_backward_loop),
        "sgd_update": njit(cache=True)(_sgd_update_loop),
        "l05_value_grad": njit(cache=True)(_l05_value_grad_loop),
    }


def _select_backend():
    requested = os.environ.get(_ENV_VAR, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numba":
        impls = numba_impls()
        if impls is not None:
            return "numba", impls
    return "numpy", numpy_impls()


BACKEND, _IMPLS = _select_backend()

prelu_forward = _IMPLS["prelu_forward"]
prelu_backward = _IMPLS["prelu_backward"]
sgd_update = _IMPLS["sgd_update"]
l05_value_grad = _IMPLS["l05_value_grad"]
