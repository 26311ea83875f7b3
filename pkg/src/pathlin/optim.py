"""SGD with momentum, weight decay and a multistep learning-rate schedule."""

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class SGDConfig:
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    milestones: tuple = ()
    gamma: float = 1.0

    def lr_at(self, epoch):
        """Effective rate: base lr decayed by gamma at each passed milestone."""
        return self.lr * self.gamma ** bisect_right(sorted(self.milestones), epoch)


@dataclass
class ParamSlot:
    """One optimized array: weight decay toggle and an optional frozen mask.

    ``frozen`` is read live on every step, so entries frozen mid-run stop
    updating immediately.  Frozen entries never receive weight decay either;
    PReLU slopes and channel gains register with ``decay=False``.
    """

    tensor: object
    decay: bool = True
    frozen: np.ndarray = None
    velocity: np.ndarray = field(init=False)

    def __post_init__(self):
        self.velocity = np.zeros_like(self.tensor.data)


class SGD:
    """v <- momentum*v + grad + wd*param;  param <- param - lr(epoch)*v."""

    def __init__(self, slots, config):
        self.slots = list(slots)
        self.config = config

    def step(self, epoch):
        lr = self.config.lr_at(epoch)
        for slot in self.slots:
            grad = slot.tensor.grad
            if grad is None:
                continue
            param = slot.tensor.data.reshape(-1)
            if slot.frozen is None:
                active = np.ones(param.shape[0], dtype=np.bool_)
            else:
                active = ~slot.frozen.reshape(-1)
            wd = self.config.weight_decay if slot.decay else 0.0
            _kernels.sgd_update(
                param,
                np.ascontiguousarray(grad.reshape(-1)),
                slot.velocity.reshape(-1),
                active,
                lr,
                self.config.momentum,
                wd,
            )

    def zero_grad(self):
        for slot in self.slots:
            slot.tensor.grad = None
