"""Finite-difference verification of analytic gradients."""

import numpy as np

from .autodiff import backward, zero_grads


def grad_check(build_loss, params, step=1e-5):
    """Compare analytic gradients of a scalar loss against central differences.

    ``build_loss`` must construct the loss tensor afresh from the given
    parameter tensors each time it is called (the graph is re-evaluated at
    perturbed parameter values).  Returns the worst relative error

        |analytic - numeric| / max(1e-8, |analytic| + |numeric|)

    over every element of every parameter.
    """
    params = list(params)
    zero_grads(params)
    loss = build_loss(*params)
    backward(loss)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(build_loss(*params).data)
            flat[i] = orig - step
            down = float(build_loss(*params).data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
