"""Post-training partial linearization.

Fine-tunes a PReLU-surgered network under task loss plus an omega-weighted
sparsity penalty that pulls slopes toward 1; any slope entering the freeze
band |a - 1| < tau is set to exactly 1 and excluded from further updates.
The freeze check runs after every optimizer step.  Channel granularity can
leave a layer with a mix of frozen and live channels (variable depth);
layer granularity freezes whole layers (fixed depth).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import pathmetrics
from .autodiff import Tensor, add, backward, cross_entropy, l05_penalty, scale
from .network import relu_to_prelu, replace_nonlinear_layerwise_with_channelwise
from .optim import SGD, ParamSlot, SGDConfig


@dataclass(frozen=True)
class PostTrainConfig:
    omega: float
    epochs: int
    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    milestones: tuple = ()
    gamma: float = 0.1
    freeze_threshold: float = 0.01
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be non-negative, got {self.omega}")
        if not (0.0 < self.freeze_threshold < 1.0):
            raise ValueError(
                f"freeze threshold must lie in (0, 1), got {self.freeze_threshold}"
            )
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    penalty: float
    napl: float
    train_accuracy: float
    test_accuracy: float


@dataclass(frozen=True)
class SweepRecord:
    omega: float
    granularity: str
    seed: int
    napl: float = None
    average_slope: float = None
    proportion_disabled: float = None
    train_accuracy: float = None
    test_accuracy: float = None
    histogram: dict = None
    checkpoint: str = None
    error: str = None

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: obj.get(k) for k in cls.__dataclass_fields__})


def accuracy(net, features, labels):
    logits = net.forward(features)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def freeze_pass(net, threshold=0.01):
    """Freeze every non-frozen slope inside the band |a - 1| < threshold.

    Frozen slopes are set to exactly 1 and never unfreeze.  Mutates the
    network in place and returns it.
    """
    for slopes, frozen in zip(net.slopes, net.frozen):
        if slopes is None:
            continue
        band = ~frozen & (np.abs(slopes - 1.0) < threshold)
        if band.any():
            slopes[band] = 1.0
            frozen[band] = True
    return net


def _penalty_value(net):
    total = 0.0
    for slopes, frozen in zip(net.slopes, net.frozen):
        if slopes is not None:
            live = ~frozen
            total += float(np.sum(np.sqrt(np.abs(1.0 - slopes)) * live))
    return total


def _fit(net, data, sgd_cfg, epochs, batch_size, seed, omega=0.0,
         freeze_threshold=None, track_napl=False):
    """Shared minibatch SGD loop; mutates net in place, returns the trace."""
    tensors = net.as_tensors()
    slots = [ParamSlot(t) for t in tensors.weights]
    slots += [ParamSlot(t) for t in tensors.biases if t is not None]
    slots += [
        ParamSlot(t, decay=False, frozen=net.frozen[i])
        for i, t in enumerate(tensors.slopes)
        if t is not None
    ]
    slots += [ParamSlot(t, decay=False) for t in tensors.gains if t is not None]
    opt = SGD(slots, sgd_cfg)

    prelu_layers = [i for i, t in enumerate(tensors.slopes) if t is not None]
    rng = np.random.default_rng(seed)
    x_train = data.train_features
    y_train = data.train_labels
    n = x_train.shape[0]
    trace = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch_size):
            idx = perm[lo : lo + batch_size]
            opt.zero_grad()
            logits = net.forward_tensor(Tensor(x_train[idx]), tensors)
            loss = cross_entropy(logits, y_train[idx])
            task_loss = loss.item()
            if not np.isfinite(task_loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}"
                )
            if omega > 0.0:
                reg = None
                for i in prelu_layers:
                    term = l05_penalty(tensors.slopes[i], net.frozen[i])
                    reg = term if reg is None else add(reg, term)
                loss = add(loss, scale(reg, omega))
            backward(loss)
            opt.step(epoch)
            if freeze_threshold is not None:
                freeze_pass(net, freeze_threshold)
            losses.append(task_loss)
        trace.append(
            EpochStats(
                epoch=epoch,
                loss=float(np.mean(losses)) if losses else float("nan"),
                penalty=_penalty_value(net) if prelu_layers else 0.0,
                napl=pathmetrics.napl(pathmetrics.profile_of(net))
                if track_napl
                else None,
                train_accuracy=accuracy(net, x_train, y_train),
                test_accuracy=accuracy(net, data.test_features, data.test_labels),
            )
        )
    return trace


def post_train(net, data, cfg):
    """Regularized fine-tuning of a PReLU network; returns (network, trace).

    Minimizes cross-entropy plus omega times the slope penalty with
    momentum SGD over all live parameters; the freeze pass runs after every
    step.  The input network is left untouched.
    """
    if not net.has_prelu():
        raise ValueError("post_train requires a PReLU-surgered network")
    if data.train_idx.size == 0:
        raise ValueError("post_train requires a non-empty dataset")
    net = net.copy()
    sgd_cfg = SGDConfig(
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        milestones=cfg.milestones,
        gamma=cfg.gamma,
    )
    trace = _fit(
        net,
        data,
        sgd_cfg,
        cfg.epochs,
        cfg.batch_size,
        cfg.seed,
        omega=cfg.omega,
        freeze_threshold=cfg.freeze_threshold,
        track_napl=True,
    )
    return net, trace


def post_post_train(net, data, cfg):
    """Expand live layer-wise units to channel-wise and retrain without the
    penalty; returns (network, trace).

    The expansion preserves the forward map at step 0; the freeze pass
    stays active so slopes entering the band are still pinned to 1.
    """
    expanded = replace_nonlinear_layerwise_with_channelwise(net)
    return post_train(expanded, data, replace(cfg, omega=0.0))


def measure_record(net, data, omega, granularity, seed, checkpoint=None):
    """Assemble the SweepRecord of a post-trained network."""
    profile = pathmetrics.profile_of(net)
    dist = pathmetrics.path_length_distribution(profile)
    return SweepRecord(
        omega=float(omega),
        granularity=granularity,
        seed=int(seed),
        napl=pathmetrics.napl(profile),
        average_slope=pathmetrics.average_slope(net),
        proportion_disabled=pathmetrics.proportion_disabled(net),
        train_accuracy=accuracy(net, data.train_features, data.train_labels),
        test_accuracy=accuracy(net, data.test_features, data.test_labels),
        histogram=dist.to_json(),
        checkpoint=checkpoint,
    )


def run_unit(base, data, omega, cfg, granularity):
    """One independent sweep unit: surgery, post-training, measurement.

    Returns (record, network); on failure the record carries the error
    message and the network is None.
    """
    try:
        surgered = relu_to_prelu(base, granularity)
        trained, _ = post_train(surgered, data, replace(cfg, omega=omega))
        return measure_record(trained, data, omega, granularity, cfg.seed), trained
    except Exception as exc:  # noqa: BLE001 - failures become records
        return (
            SweepRecord(
                omega=float(omega),
                granularity=granularity,
                seed=cfg.seed,
                error=f"{type(exc).__name__}: {exc}",
            ),
            None,
        )


def _unit_task(args):
    base, data, omega, cfg, granularity = args
    record, net = run_unit(base, data, omega, cfg, granularity)
    return record, net


def omega_sweep(base, data, omegas, cfg, granularity, jobs=1):
    """Independent post-training runs over an omega list.

    Every unit reloads the base network and re-applies the surgery, so runs
    are reproducible per (omega, seed) and independent of execution order.
    Returns (records, networks) aligned with the omega list; failed units
    yield an error record and a None network.
    """
    tasks = [(base, data, omega, cfg, granularity) for omega in omegas]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_unit_task, tasks))
    else:
        results = [_unit_task(t) for t in tasks]
    records = [r for r, _ in results]
    networks = [n for _, n in results]
    return records, networks


def choose_omega_grid(base, data, cfg, granularity, n_points=10,
                      napl_top=1.0, napl_bottom_frac=0.9, max_probes=40):
    """Log-spaced omega grid bracketing the full NAPL range.

    Doubles the top endpoint until its run reaches NAPL <= napl_top and
    halves the bottom endpoint until its run keeps NAPL >= napl_bottom_frac
    of the maximum; the grid is then geometric between the endpoints.
    """
    surgered = relu_to_prelu(base, granularity)
    max_napl = pathmetrics.napl(pathmetrics.profile_of(surgered))

    def napl_at(omega):
        trained, _ = post_train(surgered, data, replace(cfg, omega=omega))
        return pathmetrics.napl(pathmetrics.profile_of(trained))

    hi = 1.0
    for _ in range(max_probes):
        if napl_at(hi) <= napl_top:
            break
        hi *= 2.0
    else:
        raise RuntimeError(f"no omega reached NAPL <= {napl_top} after doubling")

    lo = hi / 4.0
    for _ in range(max_probes):
        if napl_at(lo) >= napl_bottom_frac * max_napl:
            break
        lo /= 2.0
    else:
        raise RuntimeError(
            f"no omega kept NAPL >= {napl_bottom_frac:.0%} of maximum after halving"
        )
    return tuple(float(w) for w in np.geomspace(lo, hi, n_points))
